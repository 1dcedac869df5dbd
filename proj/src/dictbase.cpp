#include "xdtl/dictbase.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "xdtl/errors.hpp"

namespace xdtl::dict {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd omp(const MatrixXd& D, const VectorXd& x, int s) {
  const Index d = D.rows();
  const Index k = D.cols();
  if (x.size() != d) throw ArgumentError("omp: signal length differs from atom length");
  if (s < 1 || s > std::min(d, k)) {
    throw ArgumentError("omp: sparsity must lie in [1, min(d, k)]");
  }
  VectorXd code = VectorXd::Zero(k);
  const double x_norm = x.norm();
  if (x_norm == 0.0) return code;
  const double floor = 1e-14 * x_norm;

  std::vector<Index> support;
  std::vector<char> used(static_cast<std::size_t>(k), 0);
  VectorXd residual = x;
  VectorXd coef;

  for (int step = 0; step < s; ++step) {
    const VectorXd corr = D.transpose() * residual;
    Index best = -1;
    double best_mag = 0.0;
    for (Index j = 0; j < k; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double mag = std::abs(corr(j));
      if (mag > best_mag) {
        best_mag = mag;
        best = j;
      }
    }
    if (best < 0 || best_mag <= floor) break;
    support.push_back(best);
    used[static_cast<std::size_t>(best)] = 1;

    MatrixXd A(d, static_cast<Index>(support.size()));
    for (std::size_t i = 0; i < support.size(); ++i) A.col(static_cast<Index>(i)) = D.col(support[i]);
    coef = A.colPivHouseholderQr().solve(x);
    residual = x - A * coef;
    if (residual.norm() <= floor) break;
  }
  for (std::size_t i = 0; i < support.size(); ++i) code(support[i]) = coef(static_cast<Index>(i));
  return code;
}

namespace {

MatrixXd code_all(const MatrixXd& D, const FeatureMatrix& X, int s) {
  MatrixXd Z(D.cols(), X.cols());
  for (Index j = 0; j < X.cols(); ++j) Z.col(j) = omp(D, X.col(j), s);
  return Z;
}

}  // namespace

Dictionary fit_dictionary(const FeatureMatrix& X, int k, int s, int iters, std::uint64_t seed) {
  validate_features(X, "dictionary training data");
  const Index d = X.rows();
  const Index n = X.cols();
  if (k < 1) throw ArgumentError("fit_dictionary: k must be >= 1");
  if (k > n) {
    throw ArgumentError("fit_dictionary: k (" + std::to_string(k) + ") exceeds sample count (" +
                        std::to_string(n) + ")");
  }
  if (s < 1 || s > std::min<Index>(d, k)) {
    throw ArgumentError("fit_dictionary: sparsity must lie in [1, min(d, k)]");
  }
  if (iters < 0) throw ArgumentError("fit_dictionary: iters must be >= 0");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Dictionary out;
  out.sparsity = s;
  out.D.resize(d, k);
  Index filled = 0;
  for (Index idx : order) {
    if (filled == k) break;
    const double norm = X.col(idx).norm();
    if (norm == 0.0) continue;
    out.D.col(filled++) = X.col(idx) / norm;
  }
  if (filled < k) throw ArgumentError("fit_dictionary: fewer than k nonzero training columns");

  for (int it = 0; it < iters; ++it) {
    const MatrixXd Z = code_all(out.D, X, s);
    const double coding_error = (X - out.D * Z).squaredNorm();

    MatrixXd gram = Z * Z.transpose();
    gram.diagonal().array() += 1e-8;
    MatrixXd D_new = Eigen::LLT<MatrixXd>(gram).solve(Z * X.transpose()).transpose();
    const MatrixXd residual = X - D_new * Z;
    const double update_error = residual.squaredNorm();

    // The ridge term bounds how far the update may exceed the exact LS error.
    const double slack = 1e-9 * (1.0 + coding_error) + 1e-8 * out.D.squaredNorm();
    if (!(update_error <= coding_error + slack)) {
      throw NumericalError("fit_dictionary: least-squares update increased the error");
    }
    out.train_error_trace.push_back(coding_error);
    out.train_error_trace.push_back(update_error);

    std::vector<Index> worst(static_cast<std::size_t>(n));
    std::iota(worst.begin(), worst.end(), Index{0});
    const VectorXd col_err = residual.colwise().squaredNorm().transpose();
    std::stable_sort(worst.begin(), worst.end(),
                     [&](Index a, Index b) { return col_err(a) > col_err(b); });
    std::size_t next_worst = 0;

    for (Index j = 0; j < k; ++j) {
      const double norm = D_new.col(j).norm();
      if (norm > 1e-12 && std::isfinite(norm)) {
        D_new.col(j) /= norm;
        continue;
      }
      while (next_worst < worst.size() && X.col(worst[next_worst]).norm() == 0.0) ++next_worst;
      if (next_worst == worst.size()) throw NumericalError("fit_dictionary: no replacement atom");
      const VectorXd& col = X.col(worst[next_worst++]);
      D_new.col(j) = col / col.norm();
    }
    out.D = std::move(D_new);
  }
  return out;
}

FeatureMatrix dl_features(const Dictionary& dictionary, const FeatureMatrix& X) {
  if (X.rows() != dictionary.D.rows()) throw ArgumentError("dl_features: dimension mismatch");
  return code_all(dictionary.D, X, dictionary.sparsity);
}

}  // namespace xdtl::dict
