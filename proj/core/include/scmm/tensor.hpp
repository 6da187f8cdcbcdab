#pragma once

#include <Eigen/Dense>
#include <vector>

namespace scmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// K x L x L stack: one L x L slice per labeling function. Slice k, row i,
// column j is the probability of LF k observing label j under latent label i.
using Tensor3 = std::vector<Matrix>;

inline Tensor3 zeros3(int slices, int rows, int cols) {
  return Tensor3(static_cast<std::size_t>(slices), Matrix::Zero(rows, cols));
}

}  // namespace scmm
