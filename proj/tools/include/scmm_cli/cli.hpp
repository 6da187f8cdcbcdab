#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace scmm::cli {

/// Runs one verb. Results go to `out` (and files under --out); failures are
/// reported on `err` as {"error": {"kind", "message"}} with a nonzero return.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace scmm::cli
