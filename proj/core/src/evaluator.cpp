#include "stagecf/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "stagecf/recommender.hpp"

namespace stagecf {

namespace {

bool in_truth(std::span<const ItemId> truth, ItemId i) {
  return std::binary_search(truth.begin(), truth.end(), i);
}

}  // namespace

double recall_at_k(std::span<const ItemId> ranked, std::span<const ItemId> truth, std::size_t k) {
  if (truth.empty()) return 0.0;
  const std::size_t n = std::min(k, ranked.size());
  std::size_t hits = 0;
  for (std::size_t p = 0; p < n; ++p) hits += in_truth(truth, ranked[p]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double ndcg_at_k(std::span<const ItemId> ranked, std::span<const ItemId> truth, std::size_t k) {
  if (truth.empty()) return 0.0;
  const std::size_t n = std::min(k, ranked.size());
  double dcg = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    if (in_truth(truth, ranked[p])) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, truth.size());
  for (std::size_t p = 0; p < ideal; ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return dcg / idcg;
}

const char* to_string(PopularityGroup g) {
  switch (g) {
    case PopularityGroup::popular:
      return "popular";
    case PopularityGroup::medium:
      return "medium";
    case PopularityGroup::personal:
      return "personal";
  }
  return "unknown";
}

std::vector<PopularityGroup> popularity_groups(const InteractionMatrix& train) {
  const auto deg = train.item_degrees();
  const std::size_t n = deg.size();
  std::vector<ItemId> order(n);
  std::iota(order.begin(), order.end(), ItemId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&deg](ItemId a, ItemId b) { return deg[a] > deg[b]; });
  const std::size_t first_cut = (n + 2) / 3;
  const std::size_t second_cut = (2 * n + 2) / 3;
  std::vector<PopularityGroup> groups(n);
  for (std::size_t rank = 0; rank < n; ++rank) {
    groups[order[rank]] = rank < first_cut    ? PopularityGroup::popular
                          : rank < second_cut ? PopularityGroup::medium
                                              : PopularityGroup::personal;
  }
  return groups;
}

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

namespace {

struct Accumulator {
  std::size_t users = 0;
  std::map<std::size_t, std::pair<CompensatedSum, CompensatedSum>> sums;

  void add(std::span<const ItemId> ranked, std::span<const ItemId> truth,
           const std::vector<std::size_t>& cutoffs) {
    ++users;
    for (const auto k : cutoffs) {
      auto& [r, n] = sums[k];
      r.add(recall_at_k(ranked, truth, k));
      n.add(ndcg_at_k(ranked, truth, k));
    }
  }

  std::map<std::size_t, CutoffMetrics> means(const std::vector<std::size_t>& cutoffs) const {
    std::map<std::size_t, CutoffMetrics> out;
    for (const auto k : cutoffs) {
      CutoffMetrics m;
      if (users > 0) {
        const auto& [r, n] = sums.at(k);
        m.recall = r.value() / static_cast<double>(users);
        m.ndcg = n.value() / static_cast<double>(users);
      }
      out[k] = m;
    }
    return out;
  }
};

}  // namespace

MetricsReport evaluate(std::span<const RecommendationList> recommendations,
                       const InteractionMatrix& test, const EvaluateOptions& opts) {
  if (opts.cutoffs.empty()) throw std::invalid_argument("evaluate: no cutoffs");
  const std::size_t max_cutoff = *std::max_element(opts.cutoffs.begin(), opts.cutoffs.end());

  std::unordered_map<UserId, const RecommendationList*> by_user;
  for (const auto& list : recommendations) by_user[list.user] = &list;

  MetricsReport report;
  report.cutoffs = opts.cutoffs;
  Accumulator overall;
  std::map<PopularityGroup, Accumulator> per_group;
  static const std::vector<ItemId> kEmpty;

  for (UserId u = 0; u < test.n_users(); ++u) {
    const auto truth = test.row(u);
    if (truth.empty()) {
      ++report.users_skipped;
      continue;
    }
    const auto it = by_user.find(u);
    const std::vector<ItemId>& ranked = it == by_user.end() ? kEmpty : it->second->items;
    if (ranked.size() < max_cutoff) {
      std::size_t candidates = test.n_items();
      if (opts.train && u < opts.train->n_users()) candidates -= opts.train->user_degree(u);
      if (!opts.train || ranked.size() < std::min(max_cutoff, candidates)) {
        throw std::invalid_argument("evaluate: recommendation list of user " + std::to_string(u) +
                                    " has " + std::to_string(ranked.size()) +
                                    " items, cutoff is " + std::to_string(max_cutoff));
      }
    }
    overall.add(ranked, truth, opts.cutoffs);

    if (opts.groups) {
      std::map<PopularityGroup, std::vector<ItemId>> split;
      for (const ItemId i : truth) split[opts.groups->at(i)].push_back(i);
      for (const auto& [g, group_truth] : split) per_group[g].add(ranked, group_truth, opts.cutoffs);
    }
  }

  report.users_evaluated = overall.users;
  report.at = overall.means(opts.cutoffs);
  if (opts.groups) {
    for (const auto g : {PopularityGroup::popular, PopularityGroup::medium,
                         PopularityGroup::personal}) {
      GroupReport gr;
      gr.users = per_group[g].users;
      gr.at = per_group[g].means(opts.cutoffs);
      report.groups[g] = gr;
    }
  }
  return report;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash;
  j["git_revision"] = git_revision;
  j["users_evaluated"] = users_evaluated;
  j["users_skipped"] = users_skipped;
  auto metrics_json = [this](const std::map<std::size_t, CutoffMetrics>& at) {
    nlohmann::ordered_json m;
    for (const auto k : cutoffs) {
      m["recall@" + std::to_string(k)] = at.at(k).recall;
      m["ndcg@" + std::to_string(k)] = at.at(k).ndcg;
    }
    return m;
  };
  j["overall"] = metrics_json(at);
  if (!groups.empty()) {
    nlohmann::ordered_json g;
    for (const auto& [group, rep] : groups) {
      auto entry = metrics_json(rep.at);
      entry["users"] = rep.users;
      g[to_string(group)] = entry;
    }
    j["groups"] = g;
  }
  return j.dump(2) + "\n";
}

double random_ranker_recall(const InteractionMatrix& test, std::size_t k) {
  const double n = static_cast<double>(test.n_items());
  const double per_user = std::min(static_cast<double>(k), n) / n;
  std::size_t users = 0;
  for (UserId u = 0; u < test.n_users(); ++u) users += test.user_degree(u) > 0 ? 1 : 0;
  return users == 0 ? 0.0 : per_user;
}

double random_ranker_recall_masked(const InteractionMatrix& train, const InteractionMatrix& test,
                                   std::size_t k) {
  CompensatedSum sum;
  std::size_t users = 0;
  for (UserId u = 0; u < test.n_users(); ++u) {
    if (test.user_degree(u) == 0) continue;
    const double candidates =
        static_cast<double>(test.n_items() - (u < train.n_users() ? train.user_degree(u) : 0));
    sum.add(std::min(static_cast<double>(k), candidates) / candidates);
    ++users;
  }
  return users == 0 ? 0.0 : sum.value() / static_cast<double>(users);
}

}  // namespace stagecf
