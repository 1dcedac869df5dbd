#include "xdtl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "xdtl/errors.hpp"

namespace xdtl::data {

using Eigen::Index;
using Eigen::MatrixXd;
using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Modality m) { return m == Modality::face ? "face" : "skull"; }

std::string_view to_string(Protocol p) { return p == Protocol::P1 ? "P1" : "P2"; }

Protocol protocol_from_string(std::string_view name) {
  if (name == "P1" || name == "p1" || name == "1") return Protocol::P1;
  if (name == "P2" || name == "p2" || name == "2") return Protocol::P2;
  throw ArgumentError("unknown protocol: " + std::string(name));
}

// ---------------------------------------------------------------- manifest

void to_json(json& j, const ManifestRecord& r) {
  j = json{{"sample_id", r.sample_id},
           {"subject_id", r.subject_id},
           {"modality", to_string(r.modality)},
           {"path", r.path},
           {"labeled", r.labeled}};
  if (r.split_hint) j["split_hint"] = *r.split_hint;
  if (r.extended_gallery) j["extended_gallery"] = true;
}

void from_json(const json& j, ManifestRecord& r) {
  static const std::set<std::string> kAllowed{"sample_id", "subject_id",  "modality",
                                              "path",      "labeled",     "split_hint",
                                              "extended_gallery"};
  if (!j.is_object()) throw DataError("manifest: record is not an object");
  for (const auto& [key, value] : j.items()) {
    if (!kAllowed.contains(key)) throw DataError("manifest: unknown key \"" + key + "\"");
  }
  try {
    r.sample_id = j.at("sample_id").get<std::string>();
    r.subject_id = j.at("subject_id").get<std::string>();
    const auto modality = j.at("modality").get<std::string>();
    if (modality == "face") {
      r.modality = Modality::face;
    } else if (modality == "skull") {
      r.modality = Modality::skull;
    } else {
      throw DataError("manifest: modality must be \"face\" or \"skull\", got \"" + modality + "\"");
    }
    r.path = j.at("path").get<std::string>();
    r.labeled = j.at("labeled").get<bool>();
    r.split_hint.reset();
    if (j.contains("split_hint") && !j["split_hint"].is_null()) {
      r.split_hint = j["split_hint"].get<std::string>();
    }
    r.extended_gallery = j.contains("extended_gallery") && j["extended_gallery"].get<bool>();
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  if (r.extended_gallery && r.modality != Modality::face) {
    throw DataError("manifest: extended gallery record " + r.sample_id + " is not a face");
  }
  if (r.extended_gallery && r.labeled) {
    throw DataError("manifest: extended gallery record " + r.sample_id + " is labeled");
  }
}

void validate_manifest(std::span<const ManifestRecord> records) {
  std::unordered_set<std::string> ids;
  struct Counts {
    int faces = 0, skulls = 0;
  };
  std::map<std::string, Counts> labeled;
  for (const auto& r : records) {
    if (r.sample_id.empty()) throw DataError("manifest: empty sample_id");
    if (!ids.insert(r.sample_id).second) {
      throw DataError("manifest: duplicate sample_id " + r.sample_id);
    }
    if (r.labeled) {
      auto& c = labeled[r.subject_id];
      (r.modality == Modality::face ? c.faces : c.skulls) += 1;
    }
  }
  for (const auto& [subject, c] : labeled) {
    if (c.faces > 1 || c.skulls > 1) {
      throw DataError("manifest: subject " + subject + " has more than one labeled pair member");
    }
    if (c.faces != 1 || c.skulls != 1) {
      throw DataError("manifest: dangling pair for subject " + subject);
    }
  }
}

std::size_t count_pairs(std::span<const ManifestRecord> records) {
  std::set<std::string> subjects;
  for (const auto& r : records)
    if (r.labeled) subjects.insert(r.subject_id);
  return subjects.size();
}

std::vector<ManifestRecord> load_manifest(const fs::path& path, bool check_images) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest: " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw DataError("manifest " + path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw DataError("manifest must be a JSON array");
  std::vector<ManifestRecord> records;
  records.reserve(j.size());
  for (const auto& item : j) records.push_back(item.get<ManifestRecord>());
  validate_manifest(records);

  if (check_images) {
    const fs::path base = path.parent_path();
    for (const auto& r : records) {
      const fs::path p = fs::path(r.path).is_absolute() ? fs::path(r.path) : base / r.path;
      std::ifstream probe(p, std::ios::binary);
      if (!fs::is_regular_file(p) || !probe) {
        throw DataError("unreadable image path for " + r.sample_id + ": " + p.string());
      }
    }
  }
  return records;
}

void write_manifest(const fs::path& path, std::span<const ManifestRecord> records) {
  json j = json::array();
  for (const auto& r : records) j.push_back(r);
  std::ofstream os(path);
  if (!os) throw DataError("cannot write manifest: " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw DataError("write failed: " + path.string());
}

// ------------------------------------------------------------- preprocessing

namespace {

double sample_bilinear(const MatrixXd& I, double sy, double sx) {
  const Index h = I.rows();
  const Index w = I.cols();
  const double fy0 = std::floor(sy);
  const double fx0 = std::floor(sx);
  const double fy = sy - fy0;
  const double fx = sx - fx0;
  const auto y0 = static_cast<Index>(fy0);
  const auto x0 = static_cast<Index>(fx0);
  auto at = [&](Index y, Index x) {
    return I(std::clamp<Index>(y, 0, h - 1), std::clamp<Index>(x, 0, w - 1));
  };
  const double top = at(y0, x0) + fx * (at(y0, x0 + 1) - at(y0, x0));
  const double bottom = at(y0 + 1, x0) + fx * (at(y0 + 1, x0 + 1) - at(y0 + 1, x0));
  return top + fy * (bottom - top);
}

}  // namespace

ImageTensor resize_bilinear(const ImageTensor& img, int height, int width) {
  if (height < 1 || width < 1) throw ArgumentError("resize: target size must be positive");
  if (img.height() == height && img.width() == width) return img;
  ImageTensor out{MatrixXd(height, width), img.source_path};
  const double sy = static_cast<double>(img.height()) / height;
  const double sx = static_cast<double>(img.width()) / width;
  for (Index y = 0; y < height; ++y)
    for (Index x = 0; x < width; ++x)
      out.pixels(y, x) = sample_bilinear(img.pixels, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5);
  return out;
}

ImageTensor preprocess(const RawImage& raw, int size) {
  if (raw.width < 1 || raw.height < 1) throw DataError("preprocess: empty image");
  if (raw.channels != 1 && raw.channels != 3) throw DataError("preprocess: unsupported channels");
  if (raw.data.size() < static_cast<std::size_t>(raw.width) * raw.height * raw.channels) {
    throw DataError("preprocess: truncated pixel buffer");
  }
  const int side = std::min(raw.width, raw.height);
  const int x0 = (raw.width - side) / 2;
  const int y0 = (raw.height - side) / 2;
  ImageTensor cropped{MatrixXd(side, side), {}};
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const std::size_t at =
          (static_cast<std::size_t>(y + y0) * raw.width + static_cast<std::size_t>(x + x0)) *
          raw.channels;
      double v;
      if (raw.channels == 1) {
        v = raw.data[at];
      } else {
        v = 0.299 * raw.data[at] + 0.587 * raw.data[at + 1] + 0.114 * raw.data[at + 2];
      }
      cropped.pixels(y, x) = std::clamp(v / 255.0, 0.0, 1.0);
    }
  }
  return resize_bilinear(cropped, size, size);
}

ImageTensor preprocess(std::span<const std::uint8_t> encoded, int size) {
  return preprocess(image_io::decode(encoded), size);
}

MatrixXd gaussian_blur(const MatrixXd& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<std::size_t>(i + radius)];
  }
  for (double& v : k) v /= sum;
  const Index h = img.rows();
  const Index w = img.cols();
  MatrixXd tmp(h, w);
  MatrixXd out(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] * img(y, std::clamp<Index>(x + i, 0, w - 1));
      tmp(y, x) = acc;
    }
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] * tmp(std::clamp<Index>(y + i, 0, h - 1), x);
      out(y, x) = acc;
    }
  return out;
}

// --------------------------------------------------------------- registration

std::optional<double> ncc(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError("ncc: size mismatch");
  const MatrixXd ca = a.array() - a.mean();
  const MatrixXd cb = b.array() - b.mean();
  const double na = ca.norm();
  const double nb = cb.norm();
  if (na <= 1e-12 || nb <= 1e-12) return std::nullopt;
  return ca.cwiseProduct(cb).sum() / (na * nb);
}

ImageTensor warp(const ImageTensor& img, double dx, double dy, double scale) {
  if (!(scale > 0.0)) throw ArgumentError("warp: scale must be positive");
  const Index h = img.height();
  const Index w = img.width();
  const double cy = 0.5 * static_cast<double>(h - 1);
  const double cx = 0.5 * static_cast<double>(w - 1);
  ImageTensor out{MatrixXd(h, w), img.source_path};
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      out.pixels(y, x) =
          sample_bilinear(img.pixels, cy + (y - cy - dy) / scale, cx + (x - cx - dx) / scale);
  return out;
}

void RegistrationConfig::validate() const {
  if (max_shift < 0 || max_shift > 8) throw ArgumentError("registration: max_shift must be in [0, 8]");
  if (scales.empty()) throw ArgumentError("registration: no scales");
  for (double s : scales)
    if (!(s >= 0.9 && s <= 1.1)) throw ArgumentError("registration: scales must lie in [0.9, 1.1]");
}

Registration register_image(const ImageTensor& img, const ImageTensor& reference, int max_shift,
                            std::span<const double> scales) {
  if (img.height() != reference.height() || img.width() != reference.width()) {
    throw ArgumentError("register: image and reference sizes differ");
  }
  RegistrationConfig{true, max_shift, {scales.begin(), scales.end()}}.validate();
  Registration best{img, 0, 0, 1.0, 0.0};
  const auto base = ncc(img.pixels, reference.pixels);
  if (!base) return best;
  best.ncc = *base;

  for (double scale : scales) {
    for (int dy = -max_shift; dy <= max_shift; ++dy) {
      for (int dx = -max_shift; dx <= max_shift; ++dx) {
        if (dx == 0 && dy == 0 && scale == 1.0) continue;
        ImageTensor cand = warp(img, dx, dy, scale);
        const auto score = ncc(cand.pixels, reference.pixels);
        if (score && *score > best.ncc) {
          best = Registration{std::move(cand), dx, dy, scale, *score};
        }
      }
    }
  }
  return best;
}

// -------------------------------------------------------------- augmentation

void AugmentationSpec::validate() const {
  for (double f : brightness_factors)
    if (!(f > 0.0) || !std::isfinite(f)) throw ArgumentError("augmentation: factors must be > 0");
}

std::size_t AugmentationSpec::copies_per_image() const {
  const std::size_t variants = flip_y ? 2 : 1;
  return variants * (1 + brightness_factors.size());
}

ImageTensor flip_horizontal(const ImageTensor& img) {
  return ImageTensor{img.pixels.rowwise().reverse(), img.source_path};
}

std::vector<ImageTensor> augment(std::span<const ImageTensor> images, const AugmentationSpec& spec,
                                 std::vector<std::size_t>* source) {
  spec.validate();
  std::vector<ImageTensor> out;
  out.reserve(images.size() * spec.copies_per_image());
  if (source) source->clear();
  auto scaled = [](const ImageTensor& img, double f) {
    return ImageTensor{(img.pixels * f).cwiseMax(0.0).cwiseMin(1.0), img.source_path};
  };
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageTensor& img = images[i];
    const std::size_t before = out.size();
    out.push_back(img);
    std::optional<ImageTensor> mirrored;
    if (spec.flip_y) {
      mirrored = flip_horizontal(img);
      out.push_back(*mirrored);
    }
    for (double f : spec.brightness_factors) out.push_back(scaled(img, f));
    if (mirrored) {
      for (double f : spec.brightness_factors) out.push_back(scaled(*mirrored, f));
    }
    if (source) source->insert(source->end(), out.size() - before, i);
  }
  return out;
}

// -------------------------------------------------------------- fold planning

FoldPlan plan_folds(std::span<const ManifestRecord> records, Protocol protocol,
                    std::uint64_t seed) {
  validate_manifest(records);

  std::map<std::string, std::pair<std::string, std::string>> pairs;  // subject -> (face, skull)
  std::vector<std::string> extended;
  for (const auto& r : records) {
    if (r.labeled) {
      auto& p = pairs[r.subject_id];
      (r.modality == Modality::face ? p.first : p.second) = r.sample_id;
    } else if (r.extended_gallery) {
      extended.push_back(r.sample_id);
    }
  }
  if (pairs.size() < static_cast<std::size_t>(kFolds)) {
    throw ArgumentError("plan_folds: need at least 5 labeled subjects, found " +
                        std::to_string(pairs.size()));
  }
  if (protocol == Protocol::P2 && extended.empty()) {
    throw DataError("plan_folds: protocol P2 needs extended-gallery records in the manifest");
  }

  std::vector<std::string> subjects;
  for (const auto& [s, p] : pairs) subjects.push_back(s);
  std::mt19937_64 rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);

  FoldPlan plan;
  plan.protocol = protocol;
  plan.seed = seed;
  if (protocol == Protocol::P2) plan.extended_gallery = extended;

  const std::size_t n = subjects.size();
  std::vector<std::size_t> fold_of(n);
  std::size_t cursor = 0;
  for (int f = 0; f < kFolds; ++f) {
    const std::size_t size = n / kFolds + (static_cast<std::size_t>(f) < n % kFolds ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) fold_of[cursor++] = static_cast<std::size_t>(f);
  }

  plan.folds.resize(kFolds);
  for (int f = 0; f < kFolds; ++f) {
    Fold& fold = plan.folds[static_cast<std::size_t>(f)];
    std::unordered_set<std::string> test;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& [face, skull] = pairs.at(subjects[i]);
      if (fold_of[i] == static_cast<std::size_t>(f)) {
        fold.test_subjects.push_back(subjects[i]);
        fold.gallery.push_back(face);
        fold.probes.push_back(skull);
        test.insert(subjects[i]);
      } else {
        fold.train_faces.push_back(face);
        fold.train_skulls.push_back(skull);
      }
    }
    if (protocol == Protocol::P2) {
      fold.gallery.insert(fold.gallery.end(), extended.begin(), extended.end());
    }
    for (const auto& r : records) {
      if (!r.labeled && !r.extended_gallery && !test.contains(r.subject_id)) {
        fold.unlabeled.push_back(r.sample_id);
      }
    }
  }
  return plan;
}

json fold_plan_to_json(const FoldPlan& plan) {
  json folds = json::array();
  for (const auto& f : plan.folds) {
    folds.push_back(json{{"test_subjects", f.test_subjects},
                         {"gallery", f.gallery},
                         {"probes", f.probes},
                         {"train_faces", f.train_faces},
                         {"train_skulls", f.train_skulls},
                         {"unlabeled", f.unlabeled}});
  }
  return json{{"protocol", to_string(plan.protocol)},
              {"seed", plan.seed},
              {"extended_gallery", plan.extended_gallery},
              {"folds", folds}};
}

// ------------------------------------------------------------------- corpus

const ImageTensor& Corpus::image(const std::string& sample_id) const {
  auto it = images.find(sample_id);
  if (it == images.end()) throw DataError("no image for sample " + sample_id);
  return it->second;
}

const ManifestRecord& Corpus::record(const std::string& sample_id) const {
  for (const auto& r : records)
    if (r.sample_id == sample_id) return r;
  throw DataError("no record for sample " + sample_id);
}

Corpus load_corpus(const fs::path& manifest_path) {
  Corpus corpus;
  corpus.records = load_manifest(manifest_path, true);
  const fs::path base = manifest_path.parent_path();
  for (const auto& r : corpus.records) {
    const fs::path p = fs::path(r.path).is_absolute() ? fs::path(r.path) : base / r.path;
    ImageTensor img;
    try {
      img = preprocess(image_io::read_file(p));
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " (" + p.string() + ")");
    }
    img.source_path = p.string();
    corpus.images.emplace(r.sample_id, std::move(img));
  }
  return corpus;
}

void merge_into(Corpus& base, Corpus extra) {
  for (auto& r : extra.records) base.records.push_back(std::move(r));
  for (auto& [id, img] : extra.images) {
    if (!base.images.emplace(id, std::move(img)).second) {
      throw DataError("merge: duplicate sample_id " + id);
    }
  }
  validate_manifest(base.records);
}

void write_corpus(const fs::path& dir, const Corpus& corpus) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& r : corpus.records) {
    const fs::path p = dir / r.path;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw DataError("cannot create " + p.parent_path().string() + ": " + ec.message());
    image_io::write_png(p, corpus.image(r.sample_id));
  }
  write_manifest(dir / "manifest.json", corpus.records);
}

// ---------------------------------------------------------------- synthesis

namespace {

constexpr int kSize = kCanonicalSize;

// Shared face-like layout: bright oval head, darker eye sockets and mouth.
MatrixXd face_template() {
  MatrixXd t(kSize, kSize);
  const double c = 0.5 * (kSize - 1);
  auto blob = [](double y, double x, double cy, double cx, double ry, double rx) {
    const double r = ((y - cy) * (y - cy)) / (ry * ry) + ((x - cx) * (x - cx)) / (rx * rx);
    return std::exp(-2.0 * r);
  };
  for (int y = 0; y < kSize; ++y) {
    for (int x = 0; x < kSize; ++x) {
      double v = 0.15 + 0.4 * blob(y, x, c, c, 26.0, 20.0);
      v -= 0.15 * blob(y, x, 24.0, 21.0, 4.0, 6.0);
      v -= 0.15 * blob(y, x, 24.0, 42.0, 4.0, 6.0);
      v -= 0.10 * blob(y, x, 46.0, c, 3.0, 9.0);
      t(y, x) = v;
    }
  }
  return t;
}

// Seeded mixture of Gabor patterns defining one identity.
MatrixXd identity_pattern(std::mt19937_64& rng, const MatrixXd& base) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MatrixXd p = base;
  constexpr int kComponents = 8;
  for (int k = 0; k < kComponents; ++k) {
    const double cy = 12.0 + 40.0 * unit(rng);
    const double cx = 12.0 + 40.0 * unit(rng);
    const double theta = std::numbers::pi * unit(rng);
    const double wavelength = 8.0 + 10.0 * unit(rng);
    const double envelope = 5.0 + 5.0 * unit(rng);
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    const double amp = (0.12 + 0.14 * unit(rng)) * (unit(rng) < 0.5 ? -1.0 : 1.0);
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    for (int y = 0; y < kSize; ++y) {
      for (int x = 0; x < kSize; ++x) {
        const double u = (x - cx) * ct + (y - cy) * st;
        const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        p(y, x) += amp * std::exp(-r2 / (2.0 * envelope * envelope)) *
                   std::cos(2.0 * std::numbers::pi * u / wavelength + phase);
      }
    }
  }
  return p;
}

MatrixXd gradient_magnitude(const MatrixXd& I) {
  const Index h = I.rows();
  const Index w = I.cols();
  MatrixXd g(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const double gx = 0.5 * (I(y, std::min(x + 1, w - 1)) - I(y, std::max<Index>(x - 1, 0)));
      const double gy = 0.5 * (I(std::min(y + 1, h - 1), x) - I(std::max<Index>(y - 1, 0), x));
      g(y, x) = std::hypot(gx, gy);
    }
  return g;
}

MatrixXd skull_from(const MatrixXd& pattern) {
  const MatrixXd blurred = gaussian_blur(pattern, 2.0);
  const MatrixXd compressed = (0.5 + 0.5 * (blurred.array() - 0.5)).matrix();
  // Gradient magnitude rescaled to the dynamic range of the compressed image
  // so both halves of the blend carry equal contrast.
  MatrixXd grad = gradient_magnitude(blurred);
  const double peak = grad.maxCoeff();
  if (peak > 0.0) grad *= (compressed.maxCoeff() - compressed.minCoeff()) / peak;
  return 0.5 * compressed + 0.5 * grad;
}

ImageTensor finish(const MatrixXd& clean, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd out = clean;
  if (noise > 0.0) {
    for (Index y = 0; y < out.rows(); ++y)
      for (Index x = 0; x < out.cols(); ++x) out(y, x) += noise * normal(rng);
  }
  return ImageTensor{out.cwiseMax(0.0).cwiseMin(1.0), {}};
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return std::mt19937_64(seq);
}

std::string numbered(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%04d", prefix, i);
  return buf;
}

void add(Corpus& c, ManifestRecord r, ImageTensor img) {
  img.source_path = r.path;
  c.images.emplace(r.sample_id, std::move(img));
  c.records.push_back(std::move(r));
}

}  // namespace

Corpus synth_paired(int n_subjects, double noise, std::uint64_t seed) {
  if (n_subjects < kFolds) throw ArgumentError("synth_paired: need at least 5 subjects");
  if (!(noise >= 0.0)) throw ArgumentError("synth_paired: noise must be >= 0");
  const MatrixXd base = face_template();
  Corpus c;
  auto identities = stream(seed, 1);
  auto noise_rng = stream(seed, 2);
  for (int i = 1; i <= n_subjects; ++i) {
    const MatrixXd pattern = identity_pattern(identities, base);
    const std::string subject = numbered('S', i);
    add(c, {subject + "_face", subject, Modality::face, "images/" + subject + "_face.png", true, {}, false},
        finish(pattern, noise, noise_rng));
    add(c, {subject + "_skull", subject, Modality::skull, "images/" + subject + "_skull.png", true, {}, false},
        finish(skull_from(pattern), noise, noise_rng));
  }
  auto unlabeled = stream(seed, 3);
  for (int i = 1; i <= 2 * n_subjects; ++i) {
    const MatrixXd pattern = identity_pattern(unlabeled, base);
    const std::string subject = numbered('U', i);
    add(c, {subject + "_skull", subject, Modality::skull, "images/" + subject + "_skull.png", false, {}, false},
        finish(skull_from(pattern), noise, noise_rng));
  }
  return c;
}

Corpus synth_distractors(int count, double noise, std::uint64_t seed) {
  if (count < 0) throw ArgumentError("synth_distractors: count must be >= 0");
  const MatrixXd base = face_template();
  Corpus c;
  auto identities = stream(seed, 4);
  auto noise_rng = stream(seed, 5);
  for (int i = 1; i <= count; ++i) {
    const MatrixXd pattern = identity_pattern(identities, base);
    const std::string subject = numbered('D', i);
    add(c, {subject + "_face", subject, Modality::face, "images/" + subject + "_face.png", false, {}, true},
        finish(pattern, noise, noise_rng));
  }
  return c;
}

}  // namespace xdtl::data
