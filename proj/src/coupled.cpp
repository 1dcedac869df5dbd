#include "xdtl/coupled.hpp"

#include <cmath>
#include <utility>

#include "xdtl/errors.hpp"

namespace xdtl::coupled {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

DomainBatch DomainBatch::unpaired(FeatureMatrix faces, FeatureMatrix skulls) {
  return DomainBatch{std::move(faces), std::move(skulls), false};
}

DomainBatch DomainBatch::paired_batch(FeatureMatrix faces, FeatureMatrix skulls) {
  if (faces.cols() != skulls.cols()) {
    throw ArgumentError("paired batch needs equal face and skull counts");
  }
  return DomainBatch{std::move(faces), std::move(skulls), true};
}

CoupledModel fit_ustl(const FeatureMatrix& faces, const FeatureMatrix& skulls,
                      const tl::TransformParams& params) {
  validate_features(faces, "unlabeled faces");
  validate_features(skulls, "unlabeled skulls");
  if (faces.rows() != skulls.rows()) {
    throw ArgumentError("fit_ustl: face and skull feature dimensions differ");
  }
  const Index d = faces.rows();

  tl::TransformModel face_fit = tl::fit_transform(faces, params);
  // Skull model starts from the face transform (face pre-training).
  tl::TransformModel skull_fit = tl::fit_transform(skulls, params, face_fit.T);

  CoupledModel model;
  model.T_f = std::move(face_fit.T);
  model.T_s = std::move(skull_fit.T);
  model.W = MatrixXd::Ones(d, d);
  model.gamma = 0.0;
  model.rho = 0.0;
  model.params = params;
  model.face_trace = std::move(face_fit.objective_trace);
  model.skull_trace = std::move(skull_fit.objective_trace);
  return model;
}

double joint_objective(const CoupledModel& model, const DomainBatch& batch, const MatrixXd& Z_f,
                       const MatrixXd& Z_s) {
  if (!batch.paired) throw ArgumentError("joint_objective requires a paired batch");
  const double lambda = model.params.lambda;
  const double epsilon = model.params.epsilon;
  double value = tl::objective(model.T_f, batch.faces, Z_f, lambda, epsilon) +
                 tl::objective(model.T_s, batch.skulls, Z_s, lambda, epsilon);
  if (model.gamma != 0.0) {
    if (model.W.rows() != Z_s.rows() || model.W.cols() != Z_f.rows()) {
      throw ArgumentError("joint_objective: W has wrong shape");
    }
    value += model.gamma * (model.W * Z_f - Z_s).squaredNorm();
  }
  return value;
}

double default_rho(const MatrixXd& Z_f) {
  return 1e-6 * Z_f.squaredNorm() / static_cast<double>(Z_f.rows());
}

MatrixXd update_W(const MatrixXd& Z_f, const MatrixXd& Z_s, double rho) {
  if (Z_f.cols() != Z_s.cols()) throw ArgumentError("update_W: column counts differ");
  if (!(rho >= 0.0)) throw ArgumentError("update_W: rho must be >= 0");
  const Index d = Z_f.rows();
  MatrixXd normal = Z_f * Z_f.transpose();
  normal.diagonal().array() += rho;
  const MatrixXd rhs = Z_f * Z_s.transpose();  // normal * W^T = rhs

  Eigen::LDLT<MatrixXd> ldlt(normal);
  bool singular = ldlt.info() != Eigen::Success || !ldlt.isPositive();
  if (!singular && rho == 0.0) {
    const VectorXd diag = ldlt.vectorD().cwiseAbs();
    const double scale = std::max(diag.maxCoeff(), 1e-300);
    singular = diag.minCoeff() <= scale * 1e-13 * static_cast<double>(d);
  }
  if (singular) {
    throw NumericalError("singular normal equations; increase rho");
  }
  MatrixXd W = ldlt.solve(rhs).transpose();
  if (!W.allFinite()) throw NumericalError("singular normal equations; increase rho");
  return W;
}

tl::CodedBatch coupled_sparse_code_f(const MatrixXd& T_f, const FeatureMatrix& X_f,
                                     const MatrixXd& Z_s, const MatrixXd& W, double gamma,
                                     int tau) {
  if (gamma == 0.0) return tl::sparse_code(T_f, X_f, tau);
  const Index d = X_f.rows();
  if (Z_s.rows() != d || Z_s.cols() != X_f.cols() || W.rows() != d || W.cols() != d) {
    throw ArgumentError("coupled_sparse_code_f: dimension mismatch");
  }
  if (!X_f.allFinite() || !Z_s.allFinite() || !W.allFinite() || !std::isfinite(gamma)) {
    throw ArgumentError("coupled_sparse_code_f: non-finite input");
  }
  if (tau < 1 || tau > d) throw ArgumentError("coupled_sparse_code_f: tau out of range");

  MatrixXd system = gamma * W.transpose() * W;
  system.diagonal().array() += 1.0;
  const MatrixXd rhs = T_f * X_f + gamma * W.transpose() * Z_s;
  tl::CodedBatch out{Eigen::LLT<MatrixXd>(system).solve(rhs), tau};
  for (Index j = 0; j < out.Z.cols(); ++j) tl::keep_top_k(out.Z.col(j), tau);
  return out;
}

tl::CodedBatch coupled_sparse_code_s(const MatrixXd& T_s, const FeatureMatrix& X_s,
                                     const MatrixXd& Z_f, const MatrixXd& W, double gamma,
                                     int tau) {
  if (gamma == 0.0) return tl::sparse_code(T_s, X_s, tau);
  const Index d = X_s.rows();
  if (Z_f.rows() != d || Z_f.cols() != X_s.cols() || W.rows() != d || W.cols() != d) {
    throw ArgumentError("coupled_sparse_code_s: dimension mismatch");
  }
  if (tau < 1 || tau > d) throw ArgumentError("coupled_sparse_code_s: tau out of range");
  tl::CodedBatch out{(T_s * X_s + gamma * W * Z_f) / (1.0 + gamma), tau};
  for (Index j = 0; j < out.Z.cols(); ++j) tl::keep_top_k(out.Z.col(j), tau);
  return out;
}

namespace {

// Elementwise sum; the shorter trace is held at its final value.
std::vector<double> summed_trace(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = std::max(a.size(), b.size());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = a[std::min(i, a.size() - 1)] + b[std::min(i, b.size() - 1)];
  }
  return out;
}

}  // namespace

namespace {

MatrixXd hcat(const MatrixXd& a, const MatrixXd& b) {
  if (b.cols() == 0) return a;
  if (a.cols() == 0) return b;
  MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

// Transform terms over all columns plus the supervision term over the first
// `pairs` columns.
double pooled_objective(const CoupledModel& model, const MatrixXd& F, const MatrixXd& S,
                        const MatrixXd& Z_f, const MatrixXd& Z_s, Index pairs) {
  const double lambda = model.params.lambda;
  const double epsilon = model.params.epsilon;
  return tl::objective(model.T_f, F, Z_f, lambda, epsilon) +
         tl::objective(model.T_s, S, Z_s, lambda, epsilon) +
         model.gamma * (model.W * Z_f.leftCols(pairs) - Z_s.leftCols(pairs)).squaredNorm();
}

}  // namespace

CoupledModel fit_sstl(const DomainBatch& unlabeled, const DomainBatch& labeled,
                      const tl::TransformParams& params, double gamma, std::optional<double> rho,
                      int sup_iters) {
  if (!labeled.paired || labeled.faces.cols() != labeled.skulls.cols()) {
    throw ArgumentError("fit_sstl: labeled batch must be paired");
  }
  validate_features(labeled.faces, "labeled faces");
  validate_features(labeled.skulls, "labeled skulls");
  const Index d = labeled.faces.rows();
  if (labeled.skulls.rows() != d || (unlabeled.faces.cols() > 0 && unlabeled.faces.rows() != d) ||
      (unlabeled.skulls.cols() > 0 && unlabeled.skulls.rows() != d)) {
    throw ArgumentError("fit_sstl: labeled and unlabeled feature dimensions differ");
  }
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ArgumentError("gamma must be >= 0");
  if (rho && !(*rho >= 0.0)) throw ArgumentError("rho must be >= 0");
  if (sup_iters < 0) throw ArgumentError("sup_iters must be >= 0");

  // Labeled pairs lead; unlabeled samples follow and only enter the
  // transform terms.
  const Index pairs = labeled.faces.cols();
  const MatrixXd F = hcat(labeled.faces, unlabeled.faces);
  const MatrixXd S = hcat(labeled.skulls, unlabeled.skulls);
  validate_features(F, "faces");
  validate_features(S, "skulls");

  CoupledModel model = fit_ustl(F, S, params);
  model.gamma = gamma;

  const int tau = params.tau;
  const double lambda = params.lambda;
  const double epsilon = params.epsilon;

  if (gamma == 0.0) {
    // Decoupled: the joint problem is two independent transform fits, which
    // is exactly the unsupervised model on the pooled data.
    model.W = MatrixXd::Ones(d, d);
    model.rho = rho.value_or(0.0);
    model.joint_trace = summed_trace(model.face_trace, model.skull_trace);
    return model;
  }

  MatrixXd Z_f = tl::sparse_code(model.T_f, F, tau).Z;
  MatrixXd Z_s = tl::sparse_code(model.T_s, S, tau).Z;
  model.rho = rho.value_or(default_rho(Z_f.leftCols(pairs)));

  double prev = pooled_objective(model, F, S, Z_f, Z_s, pairs);
  model.joint_trace.push_back(prev);

  for (int cycle = 0; cycle < sup_iters; ++cycle) {
    CoupledModel next = model;
    MatrixXd next_Z_f = tl::sparse_code(next.T_f, F, tau).Z;
    next_Z_f.leftCols(pairs) =
        coupled_sparse_code_f(next.T_f, labeled.faces, Z_s.leftCols(pairs), next.W, gamma, tau).Z;
    MatrixXd next_Z_s = tl::sparse_code(next.T_s, S, tau).Z;
    next_Z_s.leftCols(pairs) =
        coupled_sparse_code_s(next.T_s, labeled.skulls, next_Z_f.leftCols(pairs), next.W, gamma, tau).Z;
    next.T_f = tl::update_transform(F, next_Z_f, lambda, epsilon);
    next.T_s = tl::update_transform(S, next_Z_s, lambda, epsilon);
    next.W = update_W(next_Z_f.leftCols(pairs), next_Z_s.leftCols(pairs), next.rho);

    const double value = pooled_objective(next, F, S, next_Z_f, next_Z_s, pairs);
    if (value > prev + 1e-6 * (1.0 + std::abs(prev))) break;  // roll back

    next.joint_trace.push_back(value);
    model = std::move(next);
    Z_f = std::move(next_Z_f);
    Z_s = std::move(next_Z_s);
    const double change = std::abs(prev - value) / std::max(std::abs(prev), 1e-300);
    prev = value;
    if (change < params.tol) break;
  }
  return model;
}

MatrixXd pairwise_distances(const MatrixXd& probes, const MatrixXd& gallery) {
  if (probes.rows() != gallery.rows()) throw ArgumentError("distance: dimension mismatch");
  MatrixXd out(probes.cols(), gallery.cols());
  for (Index j = 0; j < gallery.cols(); ++j) {
    for (Index i = 0; i < probes.cols(); ++i) {
      out(i, j) = (probes.col(i) - gallery.col(j)).norm();
    }
  }
  return out;
}

MatchScoreMatrix match(const CoupledModel& model, const FeatureMatrix& gallery_faces,
                       const FeatureMatrix& probe_skulls, std::vector<std::string> gallery_ids,
                       std::vector<std::string> probe_ids) {
  const Index d = model.T_f.rows();
  if (gallery_faces.rows() != d || probe_skulls.rows() != d) {
    throw ArgumentError("match: feature dimension does not match the model");
  }
  if (!gallery_ids.empty() && static_cast<Index>(gallery_ids.size()) != gallery_faces.cols()) {
    throw ArgumentError("match: gallery id count differs from gallery size");
  }
  if (!probe_ids.empty() && static_cast<Index>(probe_ids.size()) != probe_skulls.cols()) {
    throw ArgumentError("match: probe id count differs from probe count");
  }
  const int tau = model.params.tau;
  MatrixXd Z_f = tl::sparse_code(model.T_f, gallery_faces, tau).Z;
  const MatrixXd Z_s = tl::sparse_code(model.T_s, probe_skulls, tau).Z;
  if (model.coupled()) Z_f = model.W * Z_f;

  return MatchScoreMatrix{pairwise_distances(Z_s, Z_f), std::move(probe_ids),
                          std::move(gallery_ids)};
}

}  // namespace xdtl::coupled
