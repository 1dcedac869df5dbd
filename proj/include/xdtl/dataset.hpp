#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "xdtl/image.hpp"

namespace xdtl::data {

enum class Modality { face, skull };

std::string_view to_string(Modality m);

struct ManifestRecord {
  std::string sample_id;
  std::string subject_id;
  Modality modality = Modality::face;
  std::string path;
  bool labeled = false;
  std::optional<std::string> split_hint;
  bool extended_gallery = false;  // face-only gallery distractor

  bool operator==(const ManifestRecord&) const = default;
};

void to_json(nlohmann::json& j, const ManifestRecord& r);
void from_json(const nlohmann::json& j, ManifestRecord& r);

/// Checks unique sample ids and that every labeled subject has exactly one
/// labeled face and one labeled skull. Throws DataError otherwise.
void validate_manifest(std::span<const ManifestRecord> records);

/// Reads and validates a manifest JSON array. When `check_images` is set,
/// every path (relative paths resolve against the manifest's directory) must
/// be a readable file.
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path,
                                          bool check_images = true);

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records);

// Number of subjects with a labeled face/skull pair.
std::size_t count_pairs(std::span<const ManifestRecord> records);

/// Luma conversion (0.299 R + 0.587 G + 0.114 B), scaling to [0, 1], centre
/// crop to a square and bilinear resize to size x size.
ImageTensor preprocess(const RawImage& raw, int size = kCanonicalSize);
ImageTensor preprocess(std::span<const std::uint8_t> encoded, int size = kCanonicalSize);

// Bilinear resize with pixel-centre alignment and replicate border.
ImageTensor resize_bilinear(const ImageTensor& img, int height, int width);

// Zero-mean normalized cross-correlation; nullopt if either image is constant.
std::optional<double> ncc(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Bilinear warp with replicate border: content moves by (dx, dy) pixels and
/// is scaled by `scale` about the image centre.
ImageTensor warp(const ImageTensor& img, double dx, double dy, double scale);

struct Registration {
  ImageTensor image;
  int dx = 0;
  int dy = 0;
  double scale = 1.0;
  double ncc = 0.0;
};

struct RegistrationConfig {
  bool enabled = true;
  int max_shift = 4;
  std::vector<double> scales{0.95, 1.0, 1.05};

  void validate() const;
};

/// Exhaustive area-based alignment: every integer shift in
/// [-max_shift, max_shift]^2 at every listed scale is scored by NCC against
/// the reference and the best warp returned. The identity is scored first
/// and replaced only on strict improvement; constant images come back as is.
Registration register_image(const ImageTensor& img, const ImageTensor& reference, int max_shift,
                            std::span<const double> scales);

struct AugmentationSpec {
  bool flip_y = true;
  std::vector<double> brightness_factors{0.8, 1.2};

  void validate() const;
  std::size_t copies_per_image() const;
};

ImageTensor flip_horizontal(const ImageTensor& img);

/// Per input image, in order: original, mirrored copy (if flip_y),
/// brightness-scaled copies in listed order, then mirrored brightness copies.
/// Values are clamped to [0, 1]. `source` (when given) receives, for every
/// output, the index of the input it came from.
std::vector<ImageTensor> augment(std::span<const ImageTensor> images, const AugmentationSpec& spec,
                                 std::vector<std::size_t>* source = nullptr);

enum class Protocol { P1, P2 };

std::string_view to_string(Protocol p);
Protocol protocol_from_string(std::string_view name);

inline constexpr int kFolds = 5;

struct Fold {
  std::vector<std::string> test_subjects;
  std::vector<std::string> gallery;        // face sample ids
  std::vector<std::string> probes;         // skull sample ids
  std::vector<std::string> train_faces;    // labeled faces of the other folds
  std::vector<std::string> train_skulls;   // their mates, same order
  std::vector<std::string> unlabeled;      // unlabeled non-gallery samples
};

struct FoldPlan {
  Protocol protocol = Protocol::P1;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
  std::vector<std::string> extended_gallery;  // P2 only
};

/// Seeded shuffle of labeled subjects into five near-equal folds. For every
/// test fold the gallery holds that fold's faces (plus the extended gallery
/// under P2), the probes its skulls; the remaining folds' pairs are training
/// pairs and all unlabeled, non-gallery records are unlabeled training data.
FoldPlan plan_folds(std::span<const ManifestRecord> records, Protocol protocol,
                    std::uint64_t seed);

nlohmann::json fold_plan_to_json(const FoldPlan& plan);

// In-memory corpus: records plus preprocessed images keyed by sample_id.
struct Corpus {
  std::vector<ManifestRecord> records;
  std::map<std::string, ImageTensor> images;

  const ImageTensor& image(const std::string& sample_id) const;
  const ManifestRecord& record(const std::string& sample_id) const;
};

// Loads the manifest and decodes + preprocesses every image.
Corpus load_corpus(const std::filesystem::path& manifest_path);

/// Synthetic paired-domain corpus. Each subject's face is a seeded mixture of
/// oriented Gabor patterns over a shared face-like template, plus Gaussian
/// noise. Its skull is a fixed degradation of the same clean identity
/// pattern (Gaussian blur sigma 2, contrast halved toward mid-grey, blended
/// 50/50 with gradient magnitude scaled to the same range) plus independent
/// noise. Also emits 2 * n_subjects unlabeled skulls of fresh identities.
Corpus synth_paired(int n_subjects, double noise, std::uint64_t seed);

// Unlabeled faces of fresh identities flagged as extended gallery.
Corpus synth_distractors(int count, double noise, std::uint64_t seed);

// Appends `extra` to `base`; sample ids must stay unique.
void merge_into(Corpus& base, Corpus extra);

// Writes images as PNG under dir and the manifest as dir/manifest.json.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);

// Gaussian blur with replicate border.
Eigen::MatrixXd gaussian_blur(const Eigen::MatrixXd& img, double sigma);

}  // namespace xdtl::data
