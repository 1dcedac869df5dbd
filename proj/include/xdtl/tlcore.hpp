#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace xdtl {

// d x n, one column per sample.
using FeatureMatrix = Eigen::MatrixXd;

// Throws ArgumentError unless X is non-empty with finite entries.
void validate_features(const FeatureMatrix& X, const char* what = "feature matrix");

namespace tl {

struct TransformParams {
  double lambda = 1.0;     // weight of the scale/log-det regularizer
  double epsilon = 1.0;    // Frobenius weight inside the regularizer
  int tau = 8;             // nonzeros kept per column
  int max_iters = 50;
  double tol = 1e-6;       // relative objective change that stops fitting
  std::uint64_t seed = 0;  // only used by random initialization

  // Throws ArgumentError if any field is out of range for dimension d.
  void validate(Eigen::Index d) const;
};

// Column-sparse codes; every column has at most `tau` nonzeros.
struct CodedBatch {
  Eigen::MatrixXd Z;
  int tau = 0;
};

struct TransformModel {
  Eigen::MatrixXd T;
  TransformParams params;
  std::vector<double> objective_trace;
};

enum class InitKind { identity, random_orthonormal };

/// ||TX - Z||_F^2 + lambda * (epsilon * ||T||_F^2 - log|det T|).
///
/// Throws DomainError when T is singular and ArgumentError on shape mismatch.
double objective(const Eigen::MatrixXd& T, const FeatureMatrix& X, const Eigen::MatrixXd& Z,
                 double lambda, double epsilon);

// log|det A| via partial-pivot LU. Throws DomainError if A is singular.
double log_abs_det(const Eigen::MatrixXd& A);

/// Zeroes all but the k largest-magnitude entries of v. Ties keep the lower
/// index, so the result is platform independent.
void keep_top_k(Eigen::Ref<Eigen::VectorXd> v, int k);

/// Exact minimizer of ||TX - Z||_F^2 subject to at most tau nonzeros per
/// column of Z: hard-thresholds each column of TX to its tau largest entries.
CodedBatch sparse_code(const Eigen::MatrixXd& T, const FeatureMatrix& X, int tau);

/// Closed-form global minimizer over T of
///   ||TX - Z||_F^2 + lambda * (epsilon * ||T||_F^2 - log|det T|).
///
/// With XX^T + lambda*epsilon*I = LL^T and L^{-1} X Z^T = Q S R^T (full SVD),
/// the minimizer is T = 1/2 R (S + (S^2 + 2 lambda I)^{1/2}) Q^T L^{-1}.
/// Requires lambda > 0 and epsilon > 0.
Eigen::MatrixXd update_transform(const FeatureMatrix& X, const Eigen::MatrixXd& Z, double lambda,
                                 double epsilon);

/// Alternates sparse_code and update_transform. objective_trace[0] is the
/// objective at the initial transform with its optimal codes; one entry is
/// appended per completed iteration. Stops after params.max_iters or when the
/// relative change drops below params.tol.
TransformModel fit_transform(const FeatureMatrix& X, const TransformParams& params,
                             const std::optional<Eigen::MatrixXd>& T_init = std::nullopt,
                             InitKind init = InitKind::identity);

CodedBatch encode(const TransformModel& model, const FeatureMatrix& X);

// Seeded Haar-distributed orthonormal d x d matrix.
Eigen::MatrixXd random_orthonormal(Eigen::Index d, std::uint64_t seed);

}  // namespace tl
}  // namespace xdtl
