#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "xdtl/coupled.hpp"

namespace xdtl::eval {

enum class Fusion { none, min_per_identity };

std::string_view to_string(Fusion f);
Fusion fusion_from_string(std::string_view name);

struct RankedEntry {
  std::string identity;
  double distance = 0.0;
};

// Gallery entries for one probe, best first.
using Ranking = std::vector<RankedEntry>;

/// Ranks gallery entries per probe by ascending distance; ties go to the
/// lexicographically smaller gallery id. With min_per_identity, columns
/// sharing a gallery id collapse to their minimum distance.
std::vector<Ranking> identify(const coupled::MatchScoreMatrix& scores, Fusion fusion);

/// CMC curve: entry r-1 is the fraction of probes whose true identity is
/// within the top r. Length is the longest ranking. Throws DataError when a
/// true identity is absent from its ranking.
std::vector<double> cmc(const std::vector<Ranking>& rankings, const std::vector<std::string>& true_ids);

struct ScoreSplit {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

/// Identity-level genuine (mated) and impostor distances after fusion.
/// Probe order is preserved; impostors follow gallery identity order.
ScoreSplit score_split(const coupled::MatchScoreMatrix& scores,
                       const std::vector<std::string>& true_ids, Fusion fusion);

struct FoldResult {
  int fold = 0;
  int probes = 0;
  int gallery_identities = 0;
  std::vector<double> cmc;  // fractions, ranks 1..gallery_identities
  std::vector<double> genuine_scores;
  std::vector<double> impostor_scores;

  double rank_accuracy(int rank) const;  // fraction, rank >= 1
  bool operator==(const FoldResult&) const = default;
};

struct EvalReport {
  std::string method;
  std::string protocol;
  std::vector<FoldResult> per_fold;
  double mean_rank1 = 0.0;  // percent
  double mean_rank5 = 0.0;  // percent
  nlohmann::json config_echo;

  // Recomputes mean_rank1 / mean_rank5 from per_fold.
  void summarize();
  bool operator==(const EvalReport&) const = default;
};

void to_json(nlohmann::json& j, const FoldResult& f);
void from_json(const nlohmann::json& j, FoldResult& f);
void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

}  // namespace xdtl::eval
