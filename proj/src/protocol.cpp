#include "xdtl/protocol.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>

#include "xdtl/coupled.hpp"
#include "xdtl/dictbase.hpp"
#include "xdtl/errors.hpp"

namespace xdtl::protocol {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using nlohmann::json;

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 9> kMethodNames{{
    {Method::hog, "hog"},
    {Method::lbp, "lbp"},
    {Method::dsift, "dsift"},
    {Method::pixels, "pixels"},
    {Method::dl, "dl"},
    {Method::ustl_pixels, "ustl_pixels"},
    {Method::sstl_pixels, "sstl_pixels"},
    {Method::ustl_hog, "ustl_hog"},
    {Method::sstl_hog, "sstl_hog"},
}};

std::string tagged(int fold, std::string_view stage, const char* what) {
  return "fold " + std::to_string(fold) + ", " + std::string(stage) + ": " + what;
}

// Runs f, prefixing any toolkit error with the fold and stage.
template <class F>
auto staged(int fold, std::string_view stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ArgumentError& e) {
    throw ArgumentError(tagged(fold, stage, e.what()));
  } catch (const DataError& e) {
    throw DataError(tagged(fold, stage, e.what()));
  } catch (const DomainError& e) {
    throw DomainError(tagged(fold, stage, e.what()));
  } catch (const NumericalError& e) {
    throw NumericalError(tagged(fold, stage, e.what()));
  }
}

std::uint64_t derive_seed(std::uint64_t seed, int fold, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold), stream};
  std::mt19937_64 rng(seq);
  return rng();
}

bool is_transform_method(Method m) {
  return m == Method::ustl_pixels || m == Method::sstl_pixels || m == Method::ustl_hog ||
         m == Method::sstl_hog;
}

bool is_semi_supervised(Method m) { return m == Method::sstl_pixels || m == Method::sstl_hog; }

features::Kind base_kind(Method m) {
  switch (m) {
    case Method::hog:
    case Method::ustl_hog:
    case Method::sstl_hog:
      return features::Kind::hog;
    case Method::lbp:
      return features::Kind::lbp;
    case Method::dsift:
      return features::Kind::dsift;
    default:
      return features::Kind::pixels;
  }
}

// Images of one fold after registration, grouped by role.
struct FoldImages {
  std::vector<ImageTensor> gallery;  // augmented
  std::vector<std::string> gallery_ids;
  std::vector<ImageTensor> probes;
  std::vector<std::string> probe_ids;
  std::vector<ImageTensor> train_faces;
  std::vector<ImageTensor> train_skulls;
  std::vector<ImageTensor> unlabeled_faces;
  std::vector<ImageTensor> unlabeled_skulls;
};

ImageTensor mean_image(const data::Corpus& corpus, const std::vector<std::string>& ids) {
  if (ids.empty()) throw DataError("no training images to build a registration reference");
  ImageTensor mean;
  mean.pixels = corpus.image(ids.front()).pixels;
  for (std::size_t i = 1; i < ids.size(); ++i) {
    const auto& p = corpus.image(ids[i]).pixels;
    if (p.rows() != mean.pixels.rows() || p.cols() != mean.pixels.cols()) {
      throw DataError("training images differ in size");
    }
    mean.pixels += p;
  }
  mean.pixels /= static_cast<double>(ids.size());
  return mean;
}

// Registers each image against the training mean of its own modality.
FoldImages prepare_fold(const data::Corpus& corpus, const data::Fold& fold, int index,
                        const PipelineConfig& cfg) {
  FoldImages out;
  const bool registering = cfg.registration.enabled;
  ImageTensor face_ref;
  ImageTensor skull_ref;
  if (registering) {
    staged(index, "registration reference", [&] {
      face_ref = mean_image(corpus, fold.train_faces);
      skull_ref = mean_image(corpus, fold.train_skulls);
    });
  }
  auto load = [&](const std::string& id) {
    const ImageTensor& img = corpus.image(id);
    if (!registering) return img;
    const bool face = corpus.record(id).modality == data::Modality::face;
    return data::register_image(img, face ? face_ref : skull_ref, cfg.registration.max_shift,
                                cfg.registration.scales)
        .image;
  };

  staged(index, "registration", [&] {
    std::vector<ImageTensor> gallery;
    std::vector<std::string> ids;
    for (const auto& id : fold.gallery) {
      gallery.push_back(load(id));
      ids.push_back(corpus.record(id).subject_id);
    }
    if (cfg.augment_gallery) {
      std::vector<std::size_t> source;
      out.gallery = data::augment(gallery, cfg.augmentation, &source);
      for (std::size_t s : source) out.gallery_ids.push_back(ids[s]);
    } else {
      out.gallery = std::move(gallery);
      out.gallery_ids = std::move(ids);
    }
    for (const auto& id : fold.probes) {
      out.probes.push_back(load(id));
      out.probe_ids.push_back(corpus.record(id).subject_id);
    }
    for (const auto& id : fold.train_faces) out.train_faces.push_back(load(id));
    for (const auto& id : fold.train_skulls) out.train_skulls.push_back(load(id));
    for (const auto& id : fold.unlabeled) {
      const bool face = corpus.record(id).modality == data::Modality::face;
      (face ? out.unlabeled_faces : out.unlabeled_skulls).push_back(load(id));
    }
  });
  return out;
}

MatrixXd hstack(std::initializer_list<const MatrixXd*> parts) {
  Index rows = 0;
  Index cols = 0;
  for (const auto* p : parts) {
    if (p->cols() == 0) continue;
    rows = p->rows();
    cols += p->cols();
  }
  MatrixXd out(rows, cols);
  Index at = 0;
  for (const auto* p : parts) {
    if (p->cols() == 0) continue;
    out.middleCols(at, p->cols()) = *p;
    at += p->cols();
  }
  return out;
}

FeatureMatrix extract_all(const std::vector<ImageTensor>& images, const features::FeatureConfig& fc) {
  if (images.empty()) return {};
  return features::batch_extract(images, fc);
}

coupled::MatchScoreMatrix score_fold(const FoldImages& imgs, Method method, int index,
                                     const PipelineConfig& cfg) {
  features::FeatureConfig fc = cfg.features;
  fc.kind = base_kind(method);

  FeatureMatrix gallery;
  FeatureMatrix probes;
  FeatureMatrix train_f;
  FeatureMatrix train_s;
  FeatureMatrix unl_f;
  FeatureMatrix unl_s;
  staged(index, "feature extraction", [&] {
    gallery = extract_all(imgs.gallery, fc);
    probes = extract_all(imgs.probes, fc);
    train_f = extract_all(imgs.train_faces, fc);
    train_s = extract_all(imgs.train_skulls, fc);
    unl_f = extract_all(imgs.unlabeled_faces, fc);
    unl_s = extract_all(imgs.unlabeled_skulls, fc);
    if (fc.standardize) {
      const auto z = features::Standardizer::fit(hstack({&train_f, &train_s, &unl_f, &unl_s}));
      for (auto* m : {&gallery, &probes, &train_f, &train_s, &unl_f, &unl_s}) {
        if (m->cols() > 0) *m = z.apply(*m);
      }
    }
  });

  coupled::MatchScoreMatrix scores;
  scores.gallery_ids = imgs.gallery_ids;
  scores.probe_ids = imgs.probe_ids;

  if (method == Method::dl) {
    staged(index, "dictionary training", [&] {
      const MatrixXd faces = hstack({&train_f, &unl_f});
      const int k = static_cast<int>(std::min<Index>(cfg.dl_atoms, faces.cols()));
      const int s = static_cast<int>(std::min<Index>({cfg.dl_sparsity, k, faces.rows()}));
      const auto dictionary =
          dict::fit_dictionary(faces, k, s, cfg.dl_iters, derive_seed(cfg.seed, index, 1));
      scores.scores = coupled::pairwise_distances(dict::dl_features(dictionary, probes),
                                                  dict::dl_features(dictionary, gallery));
    });
    return scores;
  }

  if (!is_transform_method(method)) {
    staged(index, "matching", [&] { scores.scores = coupled::pairwise_distances(probes, gallery); });
    return scores;
  }

  staged(index, "transform learning", [&] {
    MatrixXd faces = hstack({&train_f, &unl_f});
    MatrixXd skulls = hstack({&train_s, &unl_s});
    if (cfg.reduce_dim > 0) {
      const MatrixXd pooled = hstack({&faces, &skulls});
      const Index dim = std::min<Index>({cfg.reduce_dim, pooled.rows(), pooled.cols()});
      const auto pca = features::PcaProjection::fit(pooled, dim);
      faces = pca.apply(faces);
      skulls = pca.apply(skulls);
      for (auto* m : {&train_f, &train_s, &unl_f, &unl_s}) {
        if (m->cols() > 0) *m = pca.apply(*m);
      }
      gallery = pca.apply(gallery);
      probes = pca.apply(probes);
    }
    if (cfg.center_domains) {
      const Eigen::VectorXd face_mean = faces.rowwise().mean();
      const Eigen::VectorXd skull_mean = skulls.rowwise().mean();
      for (auto* m : {&faces, &train_f, &unl_f, &gallery}) {
        if (m->cols() > 0) m->colwise() -= face_mean;
      }
      for (auto* m : {&skulls, &train_s, &unl_s, &probes}) {
        if (m->cols() > 0) m->colwise() -= skull_mean;
      }
    }
    tl::TransformParams params = cfg.tl;
    params.tau = std::min<int>(params.tau, static_cast<int>(faces.rows()));
    params.seed = derive_seed(cfg.seed, index, 2);

    coupled::CoupledModel model;
    if (is_semi_supervised(method)) {
      model = coupled::fit_sstl(coupled::DomainBatch::unpaired(unl_f, unl_s),
                                coupled::DomainBatch::paired_batch(train_f, train_s), params,
                                cfg.gamma, cfg.rho, cfg.sup_iters);
    } else {
      model = coupled::fit_ustl(faces, skulls, params);
    }
    scores = coupled::match(model, gallery, probes, imgs.gallery_ids, imgs.probe_ids);
  });
  return scores;
}

eval::FoldResult evaluate_fold(const coupled::MatchScoreMatrix& scores, int index, eval::Fusion fusion) {
  return staged(index, "evaluation", [&] {
    eval::FoldResult r;
    r.fold = index;
    const auto rankings = eval::identify(scores, fusion);
    r.cmc = eval::cmc(rankings, scores.probe_ids);
    auto split = eval::score_split(scores, scores.probe_ids, fusion);
    r.genuine_scores = std::move(split.genuine);
    r.impostor_scores = std::move(split.impostor);
    r.probes = static_cast<int>(scores.probe_ids.size());
    r.gallery_identities = static_cast<int>(rankings.front().size());
    return r;
  });
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.17g", v);
  return buf.data();
}

std::ofstream open_text(const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  return os;
}

void close_text(std::ofstream& os, const fs::path& path) {
  os.flush();
  if (!os) throw DataError("write failed: " + path.string());
}

}  // namespace

std::string_view to_string(Method m) {
  for (const auto& [method, name] : kMethodNames)
    if (method == m) return name;
  return "unknown";
}

Method method_from_string(std::string_view name) {
  for (const auto& [method, n] : kMethodNames)
    if (n == name) return method;
  throw ArgumentError("unknown method: " + std::string(name));
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = [] {
    std::vector<Method> m;
    for (const auto& [method, name] : kMethodNames) m.push_back(method);
    return m;
  }();
  return methods;
}

void PipelineConfig::validate() const {
  registration.validate();
  augmentation.validate();
  features.validate();
  if (!(tl.lambda > 0.0) || !(tl.epsilon > 0.0) || tl.tau < 1 || tl.max_iters < 1 || !(tl.tol > 0.0)) {
    throw ArgumentError("transform parameters out of range");
  }
  if (reduce_dim < 0) throw ArgumentError("reduce_dim must be >= 0");
  if (!(gamma >= 0.0)) throw ArgumentError("gamma must be >= 0");
  if (rho && !(*rho >= 0.0)) throw ArgumentError("rho must be >= 0");
  if (sup_iters < 0) throw ArgumentError("sup_iters must be >= 0");
  if (dl_atoms < 1 || dl_sparsity < 1 || dl_iters < 0) throw ArgumentError("dictionary settings out of range");
}

void to_json(json& j, const PipelineConfig& c) {
  const auto& f = c.features;
  j = json{
      {"protocol", data::to_string(c.protocol)},
      {"seed", c.seed},
      {"registration",
       {{"enabled", c.registration.enabled},
        {"max_shift", c.registration.max_shift},
        {"scales", c.registration.scales}}},
      {"augmentation",
       {{"enabled", c.augment_gallery},
        {"flip_y", c.augmentation.flip_y},
        {"brightness_factors", c.augmentation.brightness_factors}}},
      {"fusion", eval::to_string(c.fusion)},
      {"features",
       {{"standardize", f.standardize},
        {"hog",
         {{"cell_size", f.hog.cell_size},
          {"block_cells", f.hog.block_cells},
          {"block_stride", f.hog.block_stride},
          {"bins", f.hog.bins},
          {"l2_clip", f.hog.l2_clip}}},
        {"lbp", {{"radius", f.lbp.radius}, {"neighbors", f.lbp.neighbors}, {"grid", f.lbp.grid}}},
        {"dsift",
         {{"step", f.dsift.step},
          {"patch", f.dsift.patch},
          {"spatial_bins", f.dsift.spatial_bins},
          {"orient_bins", f.dsift.orient_bins}}}}},
      {"transform",
       {{"lambda", c.tl.lambda},
        {"epsilon", c.tl.epsilon},
        {"tau", c.tl.tau},
        {"max_iters", c.tl.max_iters},
        {"tol", c.tl.tol},
        {"reduce_dim", c.reduce_dim},
        {"gamma", c.gamma},
        {"rho", c.rho ? json(*c.rho) : json(nullptr)},
        {"sup_iters", c.sup_iters},
        {"center_domains", c.center_domains}}},
      {"dictionary", {{"atoms", c.dl_atoms}, {"sparsity", c.dl_sparsity}, {"iters", c.dl_iters}}},
  };
}

namespace {

// Copies j[key] into out when present; rejects keys outside `allowed`.
void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw ArgumentError("config: " + std::string(where) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ArgumentError("config: unknown key " + std::string(where) + "." + key);
    }
  }
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

void from_json(const json& j, PipelineConfig& c) {
  try {
    check_keys(j,
               {"protocol", "seed", "registration", "augmentation", "fusion", "features", "transform",
                "dictionary"},
               "config");
    if (j.contains("protocol")) c.protocol = data::protocol_from_string(j.at("protocol").get<std::string>());
    take(j, "seed", c.seed);
    if (j.contains("registration")) {
      const auto& r = j.at("registration");
      check_keys(r, {"enabled", "max_shift", "scales"}, "registration");
      take(r, "enabled", c.registration.enabled);
      take(r, "max_shift", c.registration.max_shift);
      take(r, "scales", c.registration.scales);
    }
    if (j.contains("augmentation")) {
      const auto& a = j.at("augmentation");
      check_keys(a, {"enabled", "flip_y", "brightness_factors"}, "augmentation");
      take(a, "enabled", c.augment_gallery);
      take(a, "flip_y", c.augmentation.flip_y);
      take(a, "brightness_factors", c.augmentation.brightness_factors);
    }
    if (j.contains("fusion")) c.fusion = eval::fusion_from_string(j.at("fusion").get<std::string>());
    if (j.contains("features")) {
      const auto& f = j.at("features");
      check_keys(f, {"standardize", "hog", "lbp", "dsift"}, "features");
      take(f, "standardize", c.features.standardize);
      if (f.contains("hog")) {
        const auto& h = f.at("hog");
        check_keys(h, {"cell_size", "block_cells", "block_stride", "bins", "l2_clip"}, "features.hog");
        take(h, "cell_size", c.features.hog.cell_size);
        take(h, "block_cells", c.features.hog.block_cells);
        take(h, "block_stride", c.features.hog.block_stride);
        take(h, "bins", c.features.hog.bins);
        take(h, "l2_clip", c.features.hog.l2_clip);
      }
      if (f.contains("lbp")) {
        const auto& l = f.at("lbp");
        check_keys(l, {"radius", "neighbors", "grid"}, "features.lbp");
        take(l, "radius", c.features.lbp.radius);
        take(l, "neighbors", c.features.lbp.neighbors);
        take(l, "grid", c.features.lbp.grid);
      }
      if (f.contains("dsift")) {
        const auto& d = f.at("dsift");
        check_keys(d, {"step", "patch", "spatial_bins", "orient_bins"}, "features.dsift");
        take(d, "step", c.features.dsift.step);
        take(d, "patch", c.features.dsift.patch);
        take(d, "spatial_bins", c.features.dsift.spatial_bins);
        take(d, "orient_bins", c.features.dsift.orient_bins);
      }
    }
    if (j.contains("transform")) {
      const auto& t = j.at("transform");
      check_keys(t,
                 {"lambda", "epsilon", "tau", "max_iters", "tol", "reduce_dim", "gamma", "rho", "sup_iters", "center_domains"},
                 "transform");
      take(t, "lambda", c.tl.lambda);
      take(t, "epsilon", c.tl.epsilon);
      take(t, "tau", c.tl.tau);
      take(t, "max_iters", c.tl.max_iters);
      take(t, "tol", c.tl.tol);
      take(t, "reduce_dim", c.reduce_dim);
      take(t, "gamma", c.gamma);
      if (t.contains("rho")) {
        c.rho = t.at("rho").is_null() ? std::nullopt : std::optional<double>(t.at("rho").get<double>());
      }
      take(t, "sup_iters", c.sup_iters);
      take(t, "center_domains", c.center_domains);
    }
    if (j.contains("dictionary")) {
      const auto& d = j.at("dictionary");
      check_keys(d, {"atoms", "sparsity", "iters"}, "dictionary");
      take(d, "atoms", c.dl_atoms);
      take(d, "sparsity", c.dl_sparsity);
      take(d, "iters", c.dl_iters);
    }
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("config: ") + e.what());
  }
}

std::vector<eval::EvalReport> run_protocol(const data::Corpus& corpus, std::span<const Method> methods,
                                           const PipelineConfig& cfg) {
  cfg.validate();
  if (methods.empty()) throw ArgumentError("run_protocol: no methods");
  const data::FoldPlan plan = data::plan_folds(corpus.records, cfg.protocol, cfg.seed);

  std::vector<eval::EvalReport> reports(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    reports[m].method = std::string(to_string(methods[m]));
    reports[m].protocol = std::string(data::to_string(cfg.protocol));
    json echo = cfg;
    echo["method"] = reports[m].method;
    reports[m].config_echo = std::move(echo);
  }
  for (int f = 0; f < static_cast<int>(plan.folds.size()); ++f) {
    const FoldImages imgs = prepare_fold(corpus, plan.folds[static_cast<std::size_t>(f)], f, cfg);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      reports[m].per_fold.push_back(evaluate_fold(score_fold(imgs, methods[m], f, cfg), f, cfg.fusion));
    }
  }
  for (auto& r : reports) r.summarize();
  return reports;
}

eval::EvalReport run_protocol(const data::Corpus& corpus, Method method, const PipelineConfig& cfg) {
  const std::array<Method, 1> one{method};
  return std::move(run_protocol(corpus, one, cfg).front());
}

void emit_report(const eval::EvalReport& report, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create directory " + out_dir.string() + ": " + ec.message());

  {
    const fs::path p = out_dir / "results.json";
    auto os = open_text(p);
    os << json(report).dump(2) << '\n';
    close_text(os, p);
  }
  {
    const fs::path p = out_dir / "cmc.csv";
    auto os = open_text(p);
    std::size_t ranks = 0;
    os << "rank";
    for (const auto& f : report.per_fold) {
      ranks = std::max(ranks, f.cmc.size());
      os << ",fold_" << f.fold;
    }
    os << ",mean\n";
    for (std::size_t r = 0; r < ranks; ++r) {
      os << r + 1;
      double sum = 0.0;
      for (const auto& f : report.per_fold) {
        const double v = f.cmc.empty() ? 0.0 : f.cmc[std::min(r, f.cmc.size() - 1)];
        sum += v;
        os << ',' << format_double(v);
      }
      os << ',' << format_double(report.per_fold.empty() ? 0.0 : sum / static_cast<double>(report.per_fold.size()))
         << '\n';
    }
    close_text(os, p);
  }
  {
    const fs::path p = out_dir / "scores.csv";
    auto os = open_text(p);
    os << "fold,label,value\n";
    for (const auto& f : report.per_fold) {
      for (double v : f.genuine_scores) os << f.fold << ",genuine," << format_double(v) << '\n';
      for (double v : f.impostor_scores) os << f.fold << ",impostor," << format_double(v) << '\n';
    }
    close_text(os, p);
  }
  {
    const fs::path p = out_dir / "runconfig.json";
    auto os = open_text(p);
    os << report.config_echo.dump(2) << '\n';
    close_text(os, p);
  }
}

eval::EvalReport load_report(const fs::path& results_json) {
  std::ifstream is(results_json, std::ios::binary);
  if (!is) throw DataError("cannot open: " + results_json.string());
  try {
    return json::parse(is).get<eval::EvalReport>();
  } catch (const json::exception& e) {
    throw DataError("malformed report " + results_json.string() + ": " + e.what());
  }
}

}  // namespace xdtl::protocol
