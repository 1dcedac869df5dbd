// xdtl: synthetic corpora, fold plans, features, training and protocol runs.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xdtl/coupled.hpp"
#include "xdtl/dataset.hpp"
#include "xdtl/dictbase.hpp"
#include "xdtl/errors.hpp"
#include "xdtl/features.hpp"
#include "xdtl/protocol.hpp"
#include "xdtl/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xdtl;

namespace {

enum Exit { ok = 0, argument = 2, data_error = 3, numerical = 4 };

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os << text;
  if (!os.flush()) throw DataError("write failed: " + path.string());
}

// Header row of sample ids, then one row per feature dimension.
void write_feature_csv(const fs::path& path, const std::vector<std::string>& ids, const FeatureMatrix& X) {
  std::ostringstream os;
  for (std::size_t j = 0; j < ids.size(); ++j) os << (j ? "," : "") << ids[j];
  os << '\n';
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) os << (j ? "," : "") << fmt17(X(i, j));
    os << '\n';
  }
  write_text(path, os.str());
}

protocol::PipelineConfig read_config(const std::string& path) {
  protocol::PipelineConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream is(path);
  if (!is) throw ArgumentError("cannot open config " + path);
  try {
    json::parse(is).get_to(cfg);
  } catch (const json::parse_error& e) {
    throw ArgumentError("config " + path + ": " + e.what());
  }
  return cfg;
}

struct TrainingSet {
  std::vector<ImageTensor> pair_faces, pair_skulls;  // mated, same order
  std::vector<ImageTensor> faces, skulls;            // unlabeled only
};

// Every non-gallery record of the corpus, or the training side of one fold.
TrainingSet training_set(const data::Corpus& corpus, int fold, data::Protocol protocol, std::uint64_t seed) {
  TrainingSet t;
  if (fold < 0) {
    std::map<std::string, std::pair<const ImageTensor*, const ImageTensor*>> pairs;
    for (const auto& r : corpus.records) {
      if (r.extended_gallery) continue;
      const ImageTensor& img = corpus.image(r.sample_id);
      if (r.labeled) {
        auto& p = pairs[r.subject_id];
        (r.modality == data::Modality::face ? p.first : p.second) = &img;
      } else {
        (r.modality == data::Modality::face ? t.faces : t.skulls).push_back(img);
      }
    }
    for (const auto& [s, p] : pairs) {
      t.pair_faces.push_back(*p.first);
      t.pair_skulls.push_back(*p.second);
    }
    return t;
  }
  const auto plan = data::plan_folds(corpus.records, protocol, seed);
  if (fold >= static_cast<int>(plan.folds.size())) throw ArgumentError("--fold out of range");
  const auto& f = plan.folds[static_cast<std::size_t>(fold)];
  for (const auto& id : f.train_faces) t.pair_faces.push_back(corpus.image(id));
  for (const auto& id : f.train_skulls) t.pair_skulls.push_back(corpus.image(id));
  for (const auto& id : f.unlabeled) {
    (corpus.record(id).modality == data::Modality::face ? t.faces : t.skulls).push_back(corpus.image(id));
  }
  return t;
}

FeatureMatrix extract_or_empty(const std::vector<ImageTensor>& images, const features::FeatureConfig& fc,
                               Eigen::Index rows) {
  return images.empty() ? FeatureMatrix(rows, 0) : features::batch_extract(images, fc);
}

FeatureMatrix hcat(const FeatureMatrix& a, const FeatureMatrix& b) {
  FeatureMatrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Cross-domain face/skull identification with sparsifying transforms"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired corpus");
  std::string synth_out;
  int subjects = 50;
  int distractors = 0;
  double noise = 0.05;
  std::uint64_t synth_seed = 0;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--subjects", subjects, "Labeled subjects")->check(CLI::PositiveNumber);
  synth->add_option("--noise", noise, "Per-image noise standard deviation")->check(CLI::NonNegativeNumber);
  synth->add_option("--distractors", distractors, "Extended-gallery faces")->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", synth_seed, "Generator seed")->required();

  // folds
  auto* folds = app.add_subcommand("folds", "Write the five-fold plan as JSON");
  std::string folds_manifest, folds_out, folds_protocol = "P1";
  std::uint64_t folds_seed = 0;
  folds->add_option("--manifest", folds_manifest)->required();
  folds->add_option("--protocol", folds_protocol)->check(CLI::IsMember({"P1", "P2"}));
  folds->add_option("--seed", folds_seed)->required();
  folds->add_option("--out", folds_out, "Output file (default stdout)");

  // extract
  auto* extract = app.add_subcommand("extract", "Extract features for every manifest record");
  std::string ex_manifest, ex_out, ex_kind = "hog";
  extract->add_option("--manifest", ex_manifest)->required();
  extract->add_option("--kind", ex_kind)->check(CLI::IsMember({"pixels", "hog", "lbp", "dsift"}));
  extract->add_option("--out", ex_out, "CSV, or XFML matrix when the name ends in .xfml")->required();

  // train
  auto* train = app.add_subcommand("train", "Fit a model on all non-gallery data or one fold");
  std::string tr_manifest, tr_out, tr_method = "sstl_hog", tr_config, tr_protocol = "P1";
  std::uint64_t tr_seed = 0;
  int tr_fold = -1;
  train->add_option("--manifest", tr_manifest)->required();
  train->add_option("--method", tr_method)
      ->check(CLI::IsMember({"dl", "ustl_pixels", "sstl_pixels", "ustl_hog", "sstl_hog"}));
  train->add_option("--out", tr_out, "Model file (.xfml)")->required();
  train->add_option("--seed", tr_seed)->required();
  train->add_option("--fold", tr_fold, "Train on the training side of this fold")->check(CLI::Range(0, 4));
  train->add_option("--protocol", tr_protocol)->check(CLI::IsMember({"P1", "P2"}));
  train->add_option("--config", tr_config, "Pipeline config JSON");

  // eval
  auto* evalc = app.add_subcommand("eval", "Run the five-fold protocol and write reports");
  std::string ev_manifest, ev_out, ev_config, ev_protocol;
  std::vector<std::string> ev_methods{"hog"};
  std::uint64_t ev_seed = 0;
  bool ev_no_register = false, ev_no_augment = false, ev_standardize = false;
  evalc->add_option("--manifest", ev_manifest)->required();
  evalc->add_option("--out", ev_out, "Report directory")->required();
  evalc->add_option("--methods", ev_methods, "Methods, or 'all'")->delimiter(',');
  evalc->add_option("--protocol", ev_protocol)->check(CLI::IsMember({"P1", "P2"}));
  evalc->add_option("--seed", ev_seed, "Fold and fitting seed");
  evalc->add_option("--config", ev_config, "Pipeline config JSON");
  evalc->add_flag("--no-register", ev_no_register);
  evalc->add_flag("--no-augment", ev_no_augment);
  evalc->add_flag("--standardize", ev_standardize);

  // report
  auto* report = app.add_subcommand("report", "Summarize results.json files");
  std::vector<std::string> rp_files;
  report->add_option("results", rp_files, "results.json files or report directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : argument;
  }

  if (*synth) {
    data::Corpus corpus = data::synth_paired(subjects, noise, synth_seed);
    if (distractors > 0) data::merge_into(corpus, data::synth_distractors(distractors, noise, synth_seed + 1));
    data::write_corpus(synth_out, corpus);
    std::cout << "wrote " << corpus.records.size() << " records to " << (fs::path(synth_out) / "manifest.json").string()
              << '\n';
  } else if (*folds) {
    const auto records = data::load_manifest(folds_manifest, false);
    const auto plan = data::plan_folds(records, data::protocol_from_string(folds_protocol), folds_seed);
    const std::string text = data::fold_plan_to_json(plan).dump(2) + "\n";
    if (folds_out.empty()) {
      std::cout << text;
    } else {
      write_text(folds_out, text);
    }
  } else if (*extract) {
    const auto corpus = data::load_corpus(ex_manifest);
    features::FeatureConfig fc;
    fc.kind = features::kind_from_string(ex_kind);
    std::vector<ImageTensor> images;
    std::vector<std::string> ids;
    for (const auto& r : corpus.records) {
      images.push_back(corpus.image(r.sample_id));
      ids.push_back(r.sample_id);
    }
    if (images.empty()) throw DataError("manifest has no records");
    const FeatureMatrix X = features::batch_extract(images, fc);
    if (fs::path(ex_out).extension() == ".xfml") {
      io::save(ex_out, X);
    } else {
      write_feature_csv(ex_out, ids, X);
    }
  } else if (*train) {
    auto cfg = read_config(tr_config);
    cfg.seed = tr_seed;
    cfg.validate();
    const auto corpus = data::load_corpus(tr_manifest);
    const auto method = protocol::method_from_string(tr_method);
    const auto set = training_set(corpus, tr_fold, data::protocol_from_string(tr_protocol), tr_seed);
    features::FeatureConfig fc = cfg.features;
    fc.kind = (method == protocol::Method::ustl_hog || method == protocol::Method::sstl_hog) ? features::Kind::hog
                                                                                            : features::Kind::pixels;
    if (set.pair_faces.empty() && set.faces.empty()) throw DataError("no training faces");
    const ImageTensor& probe_img = set.pair_faces.empty() ? set.faces.front() : set.pair_faces.front();
    const Eigen::Index rows = features::extract(probe_img, fc).size();
    FeatureMatrix pf = extract_or_empty(set.pair_faces, fc, rows);
    FeatureMatrix uf = extract_or_empty(set.faces, fc, rows);
    if (method == protocol::Method::dl) {
      const FeatureMatrix faces = hcat(pf, uf);
      const int k = static_cast<int>(std::min<Eigen::Index>(cfg.dl_atoms, faces.cols()));
      const int s = std::min({cfg.dl_sparsity, k, static_cast<int>(faces.rows())});
      io::save(tr_out, dict::fit_dictionary(faces, k, s, cfg.dl_iters, tr_seed));
    } else {
      const bool semi = method == protocol::Method::sstl_hog || method == protocol::Method::sstl_pixels;
      if (semi && set.pair_faces.empty()) throw DataError("no labeled training pairs");
      if (set.pair_skulls.empty() && set.skulls.empty()) throw DataError("no training skulls");
      FeatureMatrix ps = extract_or_empty(set.pair_skulls, fc, rows);
      FeatureMatrix us = extract_or_empty(set.skulls, fc, rows);
      if (cfg.reduce_dim > 0) {
        const FeatureMatrix pooled = hcat(hcat(pf, uf), hcat(ps, us));
        const auto dim = std::min<Eigen::Index>({cfg.reduce_dim, pooled.rows(), pooled.cols()});
        const auto pca = features::PcaProjection::fit(pooled, dim);
        pf = pca.apply(pf);
        uf = pca.apply(uf);
        ps = pca.apply(ps);
        us = pca.apply(us);
        // Projection sidecar: first column is the mean, then the scaled basis.
        Eigen::MatrixXd proj(pca.basis.rows(), pca.basis.cols() + 1);
        proj << pca.mean, pca.scale * pca.basis;
        fs::path side = tr_out;
        side.replace_extension(".proj.xfml");
        io::save(side, proj);
      }
      auto params = cfg.tl;
      params.tau = std::min<int>(params.tau, static_cast<int>(pf.rows()));
      params.seed = tr_seed;
      const auto model = semi ? coupled::fit_sstl(coupled::DomainBatch::unpaired(uf, us),
                                                  coupled::DomainBatch::paired_batch(pf, ps), params, cfg.gamma,
                                                  cfg.rho, cfg.sup_iters)
                              : coupled::fit_ustl(hcat(pf, uf), hcat(ps, us), params);
      io::save(tr_out, model);
    }
    std::cout << "wrote " << tr_out << '\n';
  } else if (*evalc) {
    auto cfg = read_config(ev_config);
    if (evalc->count("--seed")) cfg.seed = ev_seed;
    if (!ev_protocol.empty()) cfg.protocol = data::protocol_from_string(ev_protocol);
    if (ev_no_register) cfg.registration.enabled = false;
    if (ev_no_augment) cfg.augment_gallery = false;
    if (ev_standardize) cfg.features.standardize = true;
    std::vector<protocol::Method> methods;
    for (const auto& m : ev_methods) {
      if (m == "all") {
        const auto& a = protocol::all_methods();
        methods.insert(methods.end(), a.begin(), a.end());
      } else {
        methods.push_back(protocol::method_from_string(m));
      }
    }
    const auto corpus = data::load_corpus(ev_manifest);
    const auto reports = protocol::run_protocol(corpus, methods, cfg);
    for (const auto& r : reports) {
      const fs::path dir = reports.size() == 1 ? fs::path(ev_out) : fs::path(ev_out) / r.method;
      protocol::emit_report(r, dir);
      std::printf("%-12s %s rank-1 %6.2f%%  rank-5 %6.2f%%\n", r.method.c_str(), r.protocol.c_str(), r.mean_rank1,
                  r.mean_rank5);
    }
  } else if (*report) {
    std::printf("%-12s %-8s %8s %8s %6s\n", "method", "protocol", "rank-1", "rank-5", "folds");
    for (const auto& f : rp_files) {
      fs::path p = f;
      if (fs::is_directory(p)) p /= "results.json";
      const auto r = protocol::load_report(p);
      std::printf("%-12s %-8s %7.2f%% %7.2f%% %6zu\n", r.method.c_str(), r.protocol.c_str(), r.mean_rank1,
                  r.mean_rank5, r.per_fold.size());
    }
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << '\n';
    return argument;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return data_error;
  } catch (const DomainError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return numerical;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return numerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return data_error;
  }
}
