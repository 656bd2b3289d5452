#include "ablah/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

#include "ablah/rng.hpp"
#include "json.hpp"

namespace ablah {

Split leave_one_out_split(const HinGraph& g, const SplitConfig& config) {
  if (config.mode == SplitMode::HoldoutThenLeaveOneOut && !(config.test_fraction > 0.0 && config.test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
  Split out{g, std::vector<std::optional<std::uint32_t>>(g.users()), std::vector<std::vector<std::uint32_t>>(g.users())};
  for (std::uint32_t u = 0; u < g.users(); ++u) {
    const auto items = g.items_of(u);
    if (items.empty()) continue;
    Rng rng(derive_seed(config.seed, 0x73706c6974ULL, u));
    std::vector<std::uint32_t> order(items.begin(), items.end());
    std::size_t held = 1;
    if (config.mode == SplitMode::HoldoutThenLeaveOneOut) {
      const auto share = static_cast<std::size_t>(std::lround(config.test_fraction * static_cast<double>(order.size())));
      held = std::clamp<std::size_t>(share, 1, order.size());
    }
    // Partial shuffle; the first `held` entries form a uniform sample.
    for (std::size_t n = 0; n < held; ++n) std::swap(order[n], order[n + uniform_index(rng, order.size() - n)]);
    out.heldout[u] = order[0];
    out.removed[u].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
    std::sort(out.removed[u].begin(), out.removed[u].end());
  }

  auto is_removed = [&](NodeId user, NodeId item) {
    const auto& r = out.removed[user.index];
    return std::binary_search(r.begin(), r.end(), item.index);
  };
  out.train = g.filtered([&](const Edge& e) {
    if (e.a.type == kUserSlot && e.b.type == kItemSlot) return !is_removed(e.a, e.b);
    if (e.a.type == kItemSlot && e.b.type == kUserSlot) return !is_removed(e.b, e.a);
    return true;
  });
  return out;
}

void EvalConfig::validate() const {
  if (ks.empty()) throw ConfigError("eval ks must not be empty");
  for (std::size_t n = 0; n < ks.size(); ++n) {
    if (ks[n] == 0) throw ConfigError("eval ks must be positive");
    if (n > 0 && ks[n] <= ks[n - 1]) throw ConfigError("eval ks must be strictly ascending");
  }
  if (candidate_negatives != 0 && candidate_negatives < ks.back()) {
    throw ConfigError("candidate_negatives must be at least max(ks) = " + std::to_string(ks.back()));
  }
  if (k_paths == 0) throw ConfigError("eval k_paths must be at least 1");
  if (l_max < 2) throw ConfigError("eval l_max must be at least 2");
  if (threads == 0) throw ConfigError("threads must be at least 1");
}

std::size_t rank_of(Candidate heldout, std::span<const Candidate> negatives) {
  std::size_t ahead = 0;
  for (const Candidate& c : negatives) {
    if (c.item == heldout.item) throw ContractError("rank_of: the held-out item is among the negatives");
    if (c.score > heldout.score || (c.score == heldout.score && c.item < heldout.item)) ++ahead;
  }
  return ahead + 1;
}

std::vector<std::uint32_t> sample_candidates(const HinGraph& full, std::uint32_t user, std::uint32_t heldout,
                                             std::size_t count, std::uint64_t seed) {
  std::vector<std::uint32_t> pool;
  for (std::uint32_t j = 0; j < full.items(); ++j) {
    if (j != heldout && !full.interacted(user, j)) pool.push_back(j);
  }
  if (count == 0 || count >= pool.size()) return pool;
  Rng rng(derive_seed(seed, 0x63616e64ULL, user));
  for (std::size_t n = 0; n < count; ++n) std::swap(pool[n], pool[n + uniform_index(rng, pool.size() - n)]);
  pool.resize(count);
  return pool;
}

double score_item(const ModelParams& params, const ModelConfig& model, const HinGraph& g, std::uint32_t user,
                  std::uint32_t item, std::size_t k_paths, std::size_t l_max, std::uint64_t seed) {
  const PathSet paths = sample_paths(g, NodeId{kUserSlot, user}, NodeId{kItemSlot, item}, k_paths, l_max, seed);
  if (paths.empty()) return kNoEvidence;
  return predict(params, model, paths);
}

HeldoutRank rank_heldout(const ModelParams& params, const ModelConfig& model, const HinGraph& g, std::uint32_t user,
                         std::uint32_t heldout, std::span<const std::uint32_t> negatives, std::size_t k_paths,
                         std::size_t l_max, std::uint64_t seed) {
  if (std::find(negatives.begin(), negatives.end(), heldout) != negatives.end()) {
    throw ContractError("rank_heldout: the held-out item is among the negatives");
  }
  HeldoutRank out;
  const Candidate target{heldout, score_item(params, model, g, user, heldout, k_paths, l_max, seed)};
  out.heldout_scored = target.score != kNoEvidence;
  std::vector<Candidate> scored;
  scored.reserve(negatives.size());
  for (std::uint32_t j : negatives) {
    scored.push_back(Candidate{j, score_item(params, model, g, user, j, k_paths, l_max, seed)});
    if (scored.back().score != kNoEvidence) ++out.negatives_scored;
  }
  out.rank = rank_of(target, scored);
  return out;
}

double hit_ratio(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r : ranks) {
    if (r == 0) throw ContractError("ranks are 1-based");
    if (r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double ndcg(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t r : ranks) {
    if (r == 0) throw ContractError("ranks are 1-based");
    if (r <= k) total += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  }
  return total / static_cast<double>(ranks.size());
}

PopBaseline::PopBaseline(const HinGraph& train) : degree_(train.items()) {
  for (std::uint32_t j = 0; j < train.items(); ++j) degree_[j] = train.item_degree(j);
}

std::size_t PopBaseline::rank(std::uint32_t heldout, std::span<const std::uint32_t> negatives) const {
  std::vector<Candidate> scored;
  scored.reserve(negatives.size());
  for (std::uint32_t j : negatives) scored.push_back(Candidate{j, score(j)});
  return rank_of(Candidate{heldout, score(heldout)}, scored);
}

namespace {

std::size_t index_of(const std::vector<std::size_t>& ks, std::size_t k) {
  const auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw std::out_of_range("K = " + std::to_string(k) + " was not evaluated");
  return static_cast<std::size_t>(it - ks.begin());
}

struct UserOutcome {
  bool evaluated = false;
  bool excluded = false;
  UserRank rank;
};

}  // namespace

double EvalReport::hr_at(std::size_t k) const { return hr.at(index_of(ks, k)); }
double EvalReport::ndcg_at(std::size_t k) const { return ndcg.at(index_of(ks, k)); }
double EvalReport::pop_hr_at(std::size_t k) const { return pop_hr.at(index_of(ks, k)); }

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["ks"] = ks;
  j["hr"] = hr;
  j["ndcg"] = ndcg;
  j["pop_hr"] = pop_hr;
  j["pop_ndcg"] = pop_ndcg;
  j["users_evaluated"] = users.size();
  j["users_excluded"] = excluded;
  auto& rows = j["ranks"] = nlohmann::ordered_json::array();
  for (const UserRank& r : users) {
    rows.push_back({{"user", r.user}, {"item", r.item}, {"rank", r.rank}, {"pop_rank", r.pop_rank},
                    {"candidates", r.candidates}});
  }
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  EvalReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.ks = j.at("ks").get<std::vector<std::size_t>>();
    r.hr = j.at("hr").get<std::vector<double>>();
    r.ndcg = j.at("ndcg").get<std::vector<double>>();
    r.pop_hr = j.at("pop_hr").get<std::vector<double>>();
    r.pop_ndcg = j.at("pop_ndcg").get<std::vector<double>>();
    r.excluded = j.at("users_excluded");
    for (const auto& row : j.at("ranks")) {
      r.users.push_back(UserRank{row.at("user"), row.at("item"), row.at("rank"), row.at("pop_rank"),
                                 row.at("candidates")});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid evaluation report: ") + e.what());
  }
  return r;
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << std::left << std::setw(8) << "method";
  for (std::size_t k : ks) os << std::right << std::setw(10) << ("HR@" + std::to_string(k));
  for (std::size_t k : ks) os << std::right << std::setw(10) << ("NDCG@" + std::to_string(k));
  os << "\n";
  auto row = [&](const char* name, const std::vector<double>& a, const std::vector<double>& b) {
    os << std::left << std::setw(8) << name << std::right << std::fixed << std::setprecision(4);
    for (double v : a) os << std::setw(10) << v;
    for (double v : b) os << std::setw(10) << v;
    os << "\n";
  };
  row("POP", pop_hr, pop_ndcg);
  row("ABLAH", hr, ndcg);
  os << "users evaluated: " << users.size() << ", excluded (no connective evidence): " << excluded << "\n";
  return os.str();
}

EvalReport evaluate(const ModelParams& params, const ModelConfig& model, const HinGraph& full, const Split& split,
                    const EvalConfig& config) {
  config.validate();
  const PopBaseline pop(split.train);
  const std::uint64_t path_seed = derive_seed(config.seed, 0x7061746873ULL);
  std::vector<UserOutcome> outcomes(split.heldout.size());

  auto run = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t u = lo; u < hi; ++u) {
      if (!split.heldout[u]) continue;
      const auto user = static_cast<std::uint32_t>(u);
      const std::uint32_t item = *split.heldout[u];
      const auto negatives = sample_candidates(full, user, item, config.candidate_negatives, config.seed);
      const HeldoutRank r =
          rank_heldout(params, model, split.train, user, item, negatives, config.k_paths, config.l_max, path_seed);
      UserOutcome& o = outcomes[u];
      o.evaluated = true;
      o.excluded = !r.heldout_scored && r.negatives_scored == 0;
      o.rank = UserRank{user, item, r.rank, pop.rank(item, negatives), negatives.size() + 1};
    }
  };
  const std::size_t workers = std::min(config.threads, std::max<std::size_t>(1, outcomes.size()));
  if (workers <= 1) {
    run(0, outcomes.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t per = (outcomes.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = std::min(outcomes.size(), w * per);
      pool.emplace_back(run, lo, std::min(outcomes.size(), lo + per));
    }
  }

  EvalReport report;
  report.ks = config.ks;
  std::vector<std::size_t> ranks, pop_ranks;
  for (const UserOutcome& o : outcomes) {
    if (!o.evaluated) continue;
    if (o.excluded) {
      ++report.excluded;
      continue;
    }
    report.users.push_back(o.rank);
    ranks.push_back(o.rank.rank);
    pop_ranks.push_back(o.rank.pop_rank);
  }
  for (std::size_t k : config.ks) {
    report.hr.push_back(hit_ratio(ranks, k));
    report.ndcg.push_back(ndcg(ranks, k));
    report.pop_hr.push_back(hit_ratio(pop_ranks, k));
    report.pop_ndcg.push_back(ndcg(pop_ranks, k));
  }
  return report;
}

}  // namespace ablah
