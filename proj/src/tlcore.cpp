#include "xdtl/tlcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "xdtl/errors.hpp"

namespace xdtl {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void validate_features(const FeatureMatrix& X, const char* what) {
  if (X.rows() < 1 || X.cols() < 1) {
    throw ArgumentError(std::string(what) + " must have at least one row and one column");
  }
  if (!X.allFinite()) {
    throw ArgumentError(std::string(what) + " contains non-finite entries");
  }
}

namespace tl {

void TransformParams::validate(Index d) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ArgumentError("lambda must be >= 0");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ArgumentError("epsilon must be > 0");
  if (!(tol > 0.0)) throw ArgumentError("tol must be > 0");
  if (max_iters < 0) throw ArgumentError("max_iters must be >= 0");
  if (tau < 1) throw ArgumentError("tau must be >= 1");
  if (d > 0 && tau > d) {
    throw ArgumentError("tau (" + std::to_string(tau) + ") exceeds dimension " +
                        std::to_string(d));
  }
}

double log_abs_det(const MatrixXd& A) {
  if (A.rows() != A.cols()) throw ArgumentError("log-det needs a square matrix");
  Eigen::PartialPivLU<MatrixXd> lu(A);
  const MatrixXd& lu_mat = lu.matrixLU();
  double acc = 0.0;
  for (Index i = 0; i < lu_mat.rows(); ++i) {
    const double u = std::abs(lu_mat(i, i));
    if (u == 0.0 || !std::isfinite(u)) throw DomainError("log-det undefined: singular transform");
    acc += std::log(u);
  }
  return acc;
}

double objective(const MatrixXd& T, const FeatureMatrix& X, const MatrixXd& Z, double lambda,
                 double epsilon) {
  const Index d = X.rows();
  if (T.rows() != d || T.cols() != d || Z.rows() != d || Z.cols() != X.cols()) {
    throw ArgumentError("objective: dimension mismatch");
  }
  const double fit = (T * X - Z).squaredNorm();
  const double reg = lambda * (epsilon * T.squaredNorm() - log_abs_det(T));
  return fit + reg;
}

void keep_top_k(Eigen::Ref<VectorXd> v, int k) {
  const Index n = v.size();
  if (k >= n) return;
  if (k <= 0) {
    v.setZero();
    return;
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
    const double ma = std::abs(v(a));
    const double mb = std::abs(v(b));
    return ma > mb || (ma == mb && a < b);
  });
  std::vector<char> keep(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < k; ++i) keep[static_cast<std::size_t>(order[i])] = 1;
  for (Index i = 0; i < n; ++i) {
    if (!keep[static_cast<std::size_t>(i)]) v(i) = 0.0;
  }
}

CodedBatch sparse_code(const MatrixXd& T, const FeatureMatrix& X, int tau) {
  const Index d = X.rows();
  if (T.rows() != d || T.cols() != d) throw ArgumentError("sparse_code: transform/data mismatch");
  if (tau < 1 || tau > d) {
    throw ArgumentError("sparse_code: tau must lie in [1, " + std::to_string(d) + "]");
  }
  CodedBatch out{T * X, tau};
  for (Index j = 0; j < out.Z.cols(); ++j) keep_top_k(out.Z.col(j), tau);
  return out;
}

MatrixXd update_transform(const FeatureMatrix& X, const MatrixXd& Z, double lambda,
                          double epsilon) {
  if (!(lambda > 0.0)) throw ArgumentError("closed form requires λ > 0");
  if (!(epsilon > 0.0)) throw ArgumentError("closed form requires ε > 0");
  if (!X.allFinite() || !Z.allFinite() || !std::isfinite(lambda) || !std::isfinite(epsilon)) {
    throw ArgumentError("update_transform: non-finite input");
  }
  const Index d = X.rows();
  if (Z.rows() != d || Z.cols() != X.cols()) {
    throw ArgumentError("update_transform: X and Z shapes differ");
  }

  MatrixXd gram = X * X.transpose();
  gram.diagonal().array() += lambda * epsilon;
  Eigen::LLT<MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("update_transform: Cholesky factorization failed");
  }
  const MatrixXd L_inv =
      llt.matrixL().solve(MatrixXd::Identity(d, d));

  // Full SVD of B = L^{-1} X Z^T. With fewer samples than dimensions both
  // factors are QR-reduced first, so only an n x n core is decomposed; the
  // complementary directions carry zero singular values. (Divide-and-conquer
  // SVD mishandles the many exact zero columns of B that unused code rows
  // produce.)
  const MatrixXd M = L_inv * X;
  const Index n = X.cols();
  MatrixXd U, V;
  VectorXd s = VectorXd::Zero(d);
  if (n < d) {
    Eigen::HouseholderQR<MatrixXd> qm(M);
    Eigen::HouseholderQR<MatrixXd> qz(Z);
    const MatrixXd R1 = qm.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    const MatrixXd R2 = qz.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<MatrixXd> core(R1 * R2.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    U = qm.householderQ() * MatrixXd::Identity(d, d);
    V = qz.householderQ() * MatrixXd::Identity(d, d);
    U.leftCols(n) = U.leftCols(n) * core.matrixU();
    V.leftCols(n) = V.leftCols(n) * core.matrixV();
    s.head(n) = core.singularValues();
  } else {
    Eigen::JacobiSVD<MatrixXd> svd(M * Z.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    U = svd.matrixU();
    V = svd.matrixV();
    s = svd.singularValues();
  }
  const VectorXd shrink = 0.5 * (s.array() + (s.array().square() + 2.0 * lambda).sqrt()).matrix();

  MatrixXd T = V * shrink.asDiagonal() * U.transpose() * L_inv;
  if (!T.allFinite()) throw NumericalError("update_transform: non-finite result");
  return T;
}

MatrixXd random_orthonormal(Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd G(d, d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) G(i, j) = normal(rng);
  Eigen::HouseholderQR<MatrixXd> qr(G);
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(d, d);
  // Sign-fix so the distribution is Haar and the result reproducible.
  const MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index i = 0; i < d; ++i) {
    if (R(i, i) < 0) Q.col(i) = -Q.col(i);
  }
  return Q;
}

TransformModel fit_transform(const FeatureMatrix& X, const TransformParams& params,
                             const std::optional<MatrixXd>& T_init, InitKind init) {
  validate_features(X);
  const Index d = X.rows();
  params.validate(d);

  TransformModel model;
  model.params = params;
  if (T_init) {
    if (T_init->rows() != d || T_init->cols() != d) {
      throw ArgumentError("fit_transform: initial transform has wrong shape");
    }
    model.T = *T_init;
  } else if (init == InitKind::random_orthonormal) {
    model.T = random_orthonormal(d, params.seed);
  } else {
    model.T = MatrixXd::Identity(d, d);
  }

  CodedBatch codes = sparse_code(model.T, X, params.tau);
  double prev = objective(model.T, X, codes.Z, params.lambda, params.epsilon);
  model.objective_trace.push_back(prev);

  for (int it = 0; it < params.max_iters; ++it) {
    model.T = update_transform(X, codes.Z, params.lambda, params.epsilon);
    codes = sparse_code(model.T, X, params.tau);
    const double value = objective(model.T, X, codes.Z, params.lambda, params.epsilon);
    model.objective_trace.push_back(value);
    const double change = std::abs(prev - value) / std::max(std::abs(prev), 1e-300);
    prev = value;
    if (change < params.tol) break;
  }
  return model;
}

CodedBatch encode(const TransformModel& model, const FeatureMatrix& X) {
  if (X.rows() != model.T.rows()) throw ArgumentError("encode: dimension mismatch");
  return sparse_code(model.T, X, model.params.tau);
}

}  // namespace tl
}  // namespace xdtl
