#include "xdtl/evaluation.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "xdtl/errors.hpp"

namespace xdtl::eval {

using Eigen::Index;
using nlohmann::json;

std::string_view to_string(Fusion f) { return f == Fusion::none ? "none" : "min_per_identity"; }

Fusion fusion_from_string(std::string_view name) {
  if (name == "none") return Fusion::none;
  if (name == "min_per_identity" || name == "min") return Fusion::min_per_identity;
  throw ArgumentError("unknown fusion: " + std::string(name));
}

namespace {

void check_scores(const coupled::MatchScoreMatrix& scores) {
  if (scores.scores.cols() == 0) throw ArgumentError("identify: empty gallery");
  if (static_cast<Index>(scores.gallery_ids.size()) != scores.scores.cols()) {
    throw ArgumentError("identify: gallery ids do not match score columns");
  }
  if (!scores.scores.allFinite()) throw ArgumentError("identify: non-finite scores");
}

// Fused distances of one probe row, in first-appearance order of identities.
Ranking fused_row(const coupled::MatchScoreMatrix& scores, Index row, Fusion fusion) {
  Ranking entries;
  if (fusion == Fusion::none) {
    entries.reserve(scores.gallery_ids.size());
    for (Index j = 0; j < scores.scores.cols(); ++j) {
      entries.push_back({scores.gallery_ids[static_cast<std::size_t>(j)], scores.scores(row, j)});
    }
    return entries;
  }
  std::map<std::string, std::size_t> slot;
  for (Index j = 0; j < scores.scores.cols(); ++j) {
    const auto& id = scores.gallery_ids[static_cast<std::size_t>(j)];
    const double d = scores.scores(row, j);
    auto [it, inserted] = slot.try_emplace(id, entries.size());
    if (inserted) {
      entries.push_back({id, d});
    } else {
      entries[it->second].distance = std::min(entries[it->second].distance, d);
    }
  }
  return entries;
}

}  // namespace

std::vector<Ranking> identify(const coupled::MatchScoreMatrix& scores, Fusion fusion) {
  check_scores(scores);
  std::vector<Ranking> out;
  out.reserve(static_cast<std::size_t>(scores.scores.rows()));
  for (Index i = 0; i < scores.scores.rows(); ++i) {
    Ranking r = fused_row(scores, i, fusion);
    std::stable_sort(r.begin(), r.end(), [](const RankedEntry& a, const RankedEntry& b) {
      return a.distance < b.distance || (a.distance == b.distance && a.identity < b.identity);
    });
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<double> cmc(const std::vector<Ranking>& rankings, const std::vector<std::string>& true_ids) {
  if (rankings.size() != true_ids.size()) throw ArgumentError("cmc: one true id per probe required");
  if (rankings.empty()) throw ArgumentError("cmc: no probes");
  std::size_t length = 0;
  for (const auto& r : rankings) length = std::max(length, r.size());
  std::vector<double> hits(length, 0.0);
  for (std::size_t p = 0; p < rankings.size(); ++p) {
    const auto& r = rankings[p];
    auto it = std::find_if(r.begin(), r.end(),
                           [&](const RankedEntry& e) { return e.identity == true_ids[p]; });
    if (it == r.end()) {
      throw DataError("protocol error: mated identity " + true_ids[p] + " missing from gallery");
    }
    hits[static_cast<std::size_t>(it - r.begin())] += 1.0;
  }
  std::vector<double> curve(length);
  double acc = 0.0;
  for (std::size_t k = 0; k < length; ++k) {
    acc += hits[k];
    curve[k] = acc / static_cast<double>(rankings.size());
  }
  return curve;
}

ScoreSplit score_split(const coupled::MatchScoreMatrix& scores,
                       const std::vector<std::string>& true_ids, Fusion fusion) {
  check_scores(scores);
  if (static_cast<Index>(true_ids.size()) != scores.scores.rows()) {
    throw ArgumentError("score_split: one true id per probe required");
  }
  ScoreSplit out;
  for (Index i = 0; i < scores.scores.rows(); ++i) {
    for (const auto& e : fused_row(scores, i, fusion)) {
      (e.identity == true_ids[static_cast<std::size_t>(i)] ? out.genuine : out.impostor)
          .push_back(e.distance);
    }
  }
  return out;
}

double FoldResult::rank_accuracy(int rank) const {
  if (rank < 1) throw ArgumentError("rank must be >= 1");
  if (cmc.empty()) return 0.0;
  return cmc[std::min(static_cast<std::size_t>(rank), cmc.size()) - 1];
}

void EvalReport::summarize() {
  if (per_fold.empty()) {
    mean_rank1 = mean_rank5 = 0.0;
    return;
  }
  double r1 = 0.0;
  double r5 = 0.0;
  for (const auto& f : per_fold) {
    r1 += f.rank_accuracy(1);
    r5 += f.rank_accuracy(5);
  }
  const auto n = static_cast<double>(per_fold.size());
  mean_rank1 = 100.0 * r1 / n;
  mean_rank5 = 100.0 * r5 / n;
}

void to_json(json& j, const FoldResult& f) {
  j = json{{"fold", f.fold},
           {"probes", f.probes},
           {"gallery_identities", f.gallery_identities},
           {"rank_accuracies", f.cmc},
           {"genuine_scores", f.genuine_scores},
           {"impostor_scores", f.impostor_scores}};
}

void from_json(const json& j, FoldResult& f) {
  j.at("fold").get_to(f.fold);
  j.at("probes").get_to(f.probes);
  j.at("gallery_identities").get_to(f.gallery_identities);
  j.at("rank_accuracies").get_to(f.cmc);
  j.at("genuine_scores").get_to(f.genuine_scores);
  j.at("impostor_scores").get_to(f.impostor_scores);
}

void to_json(json& j, const EvalReport& r) {
  j = json{{"method", r.method},
           {"protocol", r.protocol},
           {"mean_rank1", r.mean_rank1},
           {"mean_rank5", r.mean_rank5},
           {"per_fold", r.per_fold},
           {"config_echo", r.config_echo}};
}

void from_json(const json& j, EvalReport& r) {
  j.at("method").get_to(r.method);
  j.at("protocol").get_to(r.protocol);
  j.at("mean_rank1").get_to(r.mean_rank1);
  j.at("mean_rank5").get_to(r.mean_rank5);
  j.at("per_fold").get_to(r.per_fold);
  r.config_echo = j.at("config_echo");
}

}  // namespace xdtl::eval
