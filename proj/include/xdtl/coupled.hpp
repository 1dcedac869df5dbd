#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xdtl/tlcore.hpp"

namespace xdtl::coupled {

// Face- and skull-domain samples. When `paired`, column i of `faces` and
// column i of `skulls` belong to the same subject.
struct DomainBatch {
  FeatureMatrix faces;
  FeatureMatrix skulls;
  bool paired = false;

  static DomainBatch unpaired(FeatureMatrix faces, FeatureMatrix skulls);
  static DomainBatch paired_batch(FeatureMatrix faces, FeatureMatrix skulls);
};

struct CoupledModel {
  Eigen::MatrixXd T_f;
  Eigen::MatrixXd T_s;
  Eigen::MatrixXd W;   // maps face codes into the skull code space
  double gamma = 0.0;  // supervision weight; 0 means no coupling
  double rho = 0.0;    // ridge term of the W solve
  tl::TransformParams params;
  std::vector<double> face_trace;   // unsupervised face fit
  std::vector<double> skull_trace;  // unsupervised skull fit
  std::vector<double> joint_trace;  // supervised phase; empty for US-TL

  bool coupled() const { return gamma != 0.0; }
};

// Euclidean distances, lower is better. Rows are probes, columns gallery.
struct MatchScoreMatrix {
  Eigen::MatrixXd scores;
  std::vector<std::string> probe_ids;
  std::vector<std::string> gallery_ids;
};

/// Unsupervised two-domain model: T_f is fit on faces from the identity; T_s
/// is then fit on skulls starting from the converged T_f. W is all-ones and
/// gamma is 0.
CoupledModel fit_ustl(const FeatureMatrix& faces, const FeatureMatrix& skulls,
                      const tl::TransformParams& params);

/// Two transform-learning objectives plus gamma * ||W Z_f - Z_s||_F^2.
double joint_objective(const CoupledModel& model, const DomainBatch& batch,
                       const Eigen::MatrixXd& Z_f, const Eigen::MatrixXd& Z_s);

/// Ridge least squares: argmin_W ||W Z_f - Z_s||_F^2 + rho ||W||_F^2.
/// Throws NumericalError when rho == 0 and Z_f Z_f^T is singular.
Eigen::MatrixXd update_W(const Eigen::MatrixXd& Z_f, const Eigen::MatrixXd& Z_s, double rho);

// 1e-6 * trace(Z_f Z_f^T) / d.
double default_rho(const Eigen::MatrixXd& Z_f);

/// Face codes under coupling: per column solve
/// (I + gamma W^T W) z = T_f x + gamma W^T z_s, then keep the top tau entries.
/// Exact for tau == d; with gamma == 0 this is tl::sparse_code.
tl::CodedBatch coupled_sparse_code_f(const Eigen::MatrixXd& T_f, const FeatureMatrix& X_f,
                                     const Eigen::MatrixXd& Z_s, const Eigen::MatrixXd& W,
                                     double gamma, int tau);

/// Skull codes under coupling. The subproblem is separable, so
/// thresholding (T_s x + gamma W z_f) / (1 + gamma) is exact.
tl::CodedBatch coupled_sparse_code_s(const Eigen::MatrixXd& T_s, const FeatureMatrix& X_s,
                                     const Eigen::MatrixXd& Z_f, const Eigen::MatrixXd& W,
                                     double gamma, int tau);

/// Semi-supervised fit. The transform terms range over the labeled pairs and
/// every unlabeled sample; the supervision term over the pairs only.
///  1. fit_ustl on all faces and all skulls;
///  2. W <- ones;
///  3. up to sup_iters cycles of coding (coupled for paired columns, plain
///     for the rest), closed-form transform updates and the W solve.
/// A cycle whose objective rises by more than 1e-6 * (1 + |prev|) is rolled
/// back and ends training. With gamma == 0 the problem decouples and the
/// result is the step-1 model itself, W all-ones. The unlabeled batch may be
/// empty in either domain; it should not repeat the labeled samples.
CoupledModel fit_sstl(const DomainBatch& unlabeled, const DomainBatch& labeled,
                      const tl::TransformParams& params, double gamma,
                      std::optional<double> rho, int sup_iters);

MatchScoreMatrix match(const CoupledModel& model, const FeatureMatrix& gallery_faces,
                       const FeatureMatrix& probe_skulls,
                       std::vector<std::string> gallery_ids = {},
                       std::vector<std::string> probe_ids = {});

// Pairwise Euclidean distances between the columns of probes and gallery.
Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& probes, const Eigen::MatrixXd& gallery);

}  // namespace xdtl::coupled
