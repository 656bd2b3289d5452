#pragma once

// Leave-one-out ranking evaluation: HR@K, NDCG@K and the popularity baseline.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ablah/graph.hpp"
#include "ablah/model.hpp"

namespace ablah {

enum class SplitMode {
  // Hold out a fraction of each user's items, then pick the test item from it.
  HoldoutThenLeaveOneOut,
  // Hold out exactly one item per user.
  LeaveOneOut,
};

struct SplitConfig {
  SplitMode mode = SplitMode::HoldoutThenLeaveOneOut;
  double test_fraction = 0.2;
  std::uint64_t seed = 42;
};

struct Split {
  HinGraph train;  // walks and popularity use this graph only
  // Per user index: the held-out item, or nothing for users without interactions.
  std::vector<std::optional<std::uint32_t>> heldout;
  // Per user index: every interaction removed from the training graph.
  std::vector<std::vector<std::uint32_t>> removed;
};

Split leave_one_out_split(const HinGraph& g, const SplitConfig& config);

struct EvalConfig {
  std::vector<std::size_t> ks{5, 10};
  std::size_t candidate_negatives = 100;  // 0 ranks against the full catalog
  std::uint64_t seed = 42;
  std::size_t k_paths = 5;
  std::size_t l_max = 4;
  std::size_t threads = 1;

  void validate() const;
};

struct Candidate {
  std::uint32_t item = 0;
  double score = 0.0;
};

inline constexpr double kNoEvidence = -std::numeric_limits<double>::infinity();

// 1-based rank of the held-out item: ordered by score descending, then item
// index ascending. Independent of the order of `negatives`.
std::size_t rank_of(Candidate heldout, std::span<const Candidate> negatives);

// Items the user never interacted with in `full`, sampled without replacement.
std::vector<std::uint32_t> sample_candidates(const HinGraph& full, std::uint32_t user, std::uint32_t heldout,
                                             std::size_t count, std::uint64_t seed);

// ŷ from sampled paths, or kNoEvidence when no path exists.
double score_item(const ModelParams& params, const ModelConfig& model, const HinGraph& g, std::uint32_t user,
                  std::uint32_t item, std::size_t k_paths, std::size_t l_max, std::uint64_t seed);

struct HeldoutRank {
  std::size_t rank = 0;
  bool heldout_scored = false;
  std::size_t negatives_scored = 0;
};

HeldoutRank rank_heldout(const ModelParams& params, const ModelConfig& model, const HinGraph& g, std::uint32_t user,
                         std::uint32_t heldout, std::span<const std::uint32_t> negatives, std::size_t k_paths,
                         std::size_t l_max, std::uint64_t seed);

double hit_ratio(std::span<const std::size_t> ranks, std::size_t k);
double ndcg(std::span<const std::size_t> ranks, std::size_t k);

// Ranks by training interaction count.
class PopBaseline {
 public:
  explicit PopBaseline(const HinGraph& train);
  [[nodiscard]] double score(std::uint32_t item) const { return static_cast<double>(degree_.at(item)); }
  [[nodiscard]] std::size_t rank(std::uint32_t heldout, std::span<const std::uint32_t> negatives) const;

 private:
  std::vector<std::size_t> degree_;
};

struct UserRank {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  std::size_t rank = 0;
  std::size_t pop_rank = 0;
  std::size_t candidates = 0;
};

struct EvalReport {
  std::vector<std::size_t> ks;
  std::vector<double> hr, ndcg;          // model, one per K
  std::vector<double> pop_hr, pop_ndcg;  // baseline over the same users
  std::vector<UserRank> users;           // included users only
  std::size_t excluded = 0;              // no evidence for held-out item or any candidate

  [[nodiscard]] std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  [[nodiscard]] std::string to_table() const;
  [[nodiscard]] double hr_at(std::size_t k) const;
  [[nodiscard]] double ndcg_at(std::size_t k) const;
  [[nodiscard]] double pop_hr_at(std::size_t k) const;
};

EvalReport evaluate(const ModelParams& params, const ModelConfig& model, const HinGraph& full, const Split& split,
                    const EvalConfig& config);

}  // namespace ablah
