#include "scmm/parallel.hpp"

#include <cstdlib>
#include <string>

namespace scmm {

int worker_threads() {
  if (const char* env = std::getenv("SCMM_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace scmm
