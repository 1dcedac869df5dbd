#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "xdtl/tlcore.hpp"

namespace xdtl::dict {

struct Dictionary {
  Eigen::MatrixXd D;  // d x k, unit-norm atoms
  int sparsity = 1;
  // Alternating entries per iteration: error after coding, then error after
  // the least-squares update (before atom renormalization).
  std::vector<double> train_error_trace;

  Eigen::Index atoms() const { return D.cols(); }
};

/// Orthogonal matching pursuit with a least-squares refit on the support at
/// every step. Stops early once the residual vanishes; a zero input yields a
/// zero code.
Eigen::VectorXd omp(const Eigen::MatrixXd& D, const Eigen::VectorXd& x, int s);

/// Method of optimal directions: alternating OMP coding and the full
/// least-squares update D = X Z^T (Z Z^T + 1e-8 I)^{-1}, followed by atom
/// renormalization. Atoms that vanish are replaced by the worst-reconstructed
/// training columns.
Dictionary fit_dictionary(const FeatureMatrix& X, int k, int s, int iters, std::uint64_t seed);

// Dense k x n OMP codes, one column per input column.
FeatureMatrix dl_features(const Dictionary& dictionary, const FeatureMatrix& X);

}  // namespace xdtl::dict
