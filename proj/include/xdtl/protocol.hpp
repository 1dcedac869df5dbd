#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "xdtl/dataset.hpp"
#include "xdtl/evaluation.hpp"
#include "xdtl/features.hpp"
#include "xdtl/tlcore.hpp"

namespace xdtl::protocol {

enum class Method { hog, lbp, dsift, pixels, dl, ustl_pixels, sstl_pixels, ustl_hog, sstl_hog };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);  // throws ArgumentError
const std::vector<Method>& all_methods();

struct PipelineConfig {
  data::Protocol protocol = data::Protocol::P1;
  std::uint64_t seed = 0;
  data::RegistrationConfig registration;
  data::AugmentationSpec augmentation;
  bool augment_gallery = true;
  eval::Fusion fusion = eval::Fusion::min_per_identity;
  features::FeatureConfig features;  // kind is chosen per method

  // Transform learning.
  tl::TransformParams tl{.lambda = 1.0, .epsilon = 1.0, .tau = 24, .max_iters = 50, .tol = 1e-6};
  int reduce_dim = 24;  // PCA width in front of the transforms; 0 keeps raw features
  double gamma = 1.0;
  // Ridge of the W solve on unit-scaled codes; null selects 1e-6 * trace(Z_f Z_f^T) / d.
  std::optional<double> rho = 0.3;
  int sup_iters = 20;
  bool center_domains = true;  // subtract each modality's training mean before fitting

  // Dictionary baseline.
  int dl_atoms = 256;
  int dl_sparsity = 10;
  int dl_iters = 30;

  void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
// Missing keys keep their defaults; unknown keys raise ArgumentError.
void from_json(const nlohmann::json& j, PipelineConfig& c);

/// Full five-fold run for one method: register, augment the gallery, extract
/// features, fit on the training and unlabeled data, score probes and
/// summarize. Errors carry the failing fold and stage in their message.
eval::EvalReport run_protocol(const data::Corpus& corpus, Method method, const PipelineConfig& cfg);

// Several methods over one fold plan; registered images are shared.
std::vector<eval::EvalReport> run_protocol(const data::Corpus& corpus, std::span<const Method> methods,
                                           const PipelineConfig& cfg);

/// Writes results.json, cmc.csv, scores.csv and runconfig.json into out_dir
/// (created if needed). CMC rows run to the largest gallery; shorter folds
/// are padded with their terminal value.
void emit_report(const eval::EvalReport& report, const std::filesystem::path& out_dir);

eval::EvalReport load_report(const std::filesystem::path& results_json);

}  // namespace xdtl::protocol
