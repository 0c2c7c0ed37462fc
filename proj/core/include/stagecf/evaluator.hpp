#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stagecf/interaction_store.hpp"

namespace stagecf {

struct RecommendationList;

/// |top-k ∩ truth| / |truth|. `truth` must be sorted; returns 0 for empty truth.
double recall_at_k(std::span<const ItemId> ranked, std::span<const ItemId> truth, std::size_t k);

/// Binary-relevance NDCG with log2(rank + 1) discounts.
double ndcg_at_k(std::span<const ItemId> ranked, std::span<const ItemId> truth, std::size_t k);

enum class PopularityGroup : std::uint8_t { popular = 0, medium = 1, personal = 2 };
const char* to_string(PopularityGroup g);

/// Items ordered by training count (descending, ties by id) and cut into
/// thirds at ceil(n/3) and ceil(2n/3).
std::vector<PopularityGroup> popularity_groups(const InteractionMatrix& train);

struct CutoffMetrics {
  double recall = 0.0;
  double ndcg = 0.0;
};

struct GroupReport {
  std::size_t users = 0;
  std::map<std::size_t, CutoffMetrics> at;
};

struct MetricsReport {
  std::vector<std::size_t> cutoffs;
  std::map<std::size_t, CutoffMetrics> at;
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;  // users with no held-out truth
  std::map<PopularityGroup, GroupReport> groups;
  std::string config_hash;
  std::string git_revision;

  /// Deterministic JSON rendering (fixed key order, 17 significant digits).
  std::string to_json() const;
};

inline const std::vector<std::size_t> kDefaultCutoffs{10, 20, 50};

struct EvaluateOptions {
  std::vector<std::size_t> cutoffs = kDefaultCutoffs;
  /// Per-item popularity group; enables the group breakdown.
  const std::vector<PopularityGroup>* groups = nullptr;
  /// Training history, used to tell a short list with exhausted candidates
  /// apart from a truncated one.
  const InteractionMatrix* train = nullptr;
};

/// Macro-averages Recall/NDCG over users with non-empty truth. Users absent
/// from `recommendations` are scored with an empty list. Throws
/// std::invalid_argument naming the user when a list is shorter than the
/// largest cutoff although more candidates were available (without `train`,
/// any short list for a user with truth is an error).
MetricsReport evaluate(std::span<const RecommendationList> recommendations,
                       const InteractionMatrix& test, const EvaluateOptions& opts = {});

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

/// Expected Recall@k of a uniformly random ranking of all n_items items,
/// macro-averaged over users with truth: min(k, n) / n per user.
double random_ranker_recall(const InteractionMatrix& test, std::size_t k);

/// Same null model when training items are excluded from the ranking:
/// per user min(k, c_u) / c_u with c_u = n_items - |train_u|.
double random_ranker_recall_masked(const InteractionMatrix& train, const InteractionMatrix& test,
                                   std::size_t k);

}  // namespace stagecf
