#include "stagecf/evaluator.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "oracles.hpp"
#include "stagecf/recommender.hpp"

namespace stagecf {
namespace {

using Items = std::vector<ItemId>;

TEST(RecallAtK, Definition) {
  EXPECT_DOUBLE_EQ(recall_at_k(Items{0, 2}, Items{0, 1}, 2), 0.5);
  EXPECT_DOUBLE_EQ(recall_at_k(Items{3, 1, 0}, Items{0, 1}, 3), 1.0);
  EXPECT_DOUBLE_EQ(recall_at_k(Items{3, 4}, Items{0, 1}, 2), 0.0);
  EXPECT_DOUBLE_EQ(recall_at_k(Items{0, 1}, Items{}, 2), 0.0);
  // Only the first k entries count.
  EXPECT_DOUBLE_EQ(recall_at_k(Items{5, 0}, Items{0}, 1), 0.0);
}

TEST(NdcgAtK, Definition) {
  EXPECT_DOUBLE_EQ(ndcg_at_k(Items{4, 1}, Items{4}, 2), 1.0);
  EXPECT_NEAR(ndcg_at_k(Items{1, 4}, Items{4}, 2), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(ndcg_at_k(Items{1, 4}, Items{4}, 2), 0.63093, 1e-5);
  EXPECT_DOUBLE_EQ(ndcg_at_k(Items{1, 2}, Items{4}, 2), 0.0);
}

TEST(NdcgAtK, IdealDcgCappedByTruthSize) {
  // Three truth items, k = 2, hits at ranks 1 and 2: DCG = IDCG.
  EXPECT_NEAR(ndcg_at_k(Items{0, 1, 9}, Items{0, 1, 2}, 2), 1.0, 1e-15);
  // Hit only at rank 3 with k = 3 and two truth items.
  const double expected = (1.0 / std::log2(4.0)) / (1.0 + 1.0 / std::log2(3.0));
  EXPECT_NEAR(ndcg_at_k(Items{7, 8, 1}, Items{1, 5}, 3), expected, 1e-15);
}

TEST(Metrics, MonotoneInKOnceIdealIsFull) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    Items ranked(30);
    std::iota(ranked.begin(), ranked.end(), 0u);
    std::shuffle(ranked.begin(), ranked.end(), rng);
    Items truth(ranked.begin(), ranked.begin() + 30);
    std::shuffle(truth.begin(), truth.end(), rng);
    truth.resize(1 + rep % 8);
    std::sort(truth.begin(), truth.end());
    double r = 0.0, n = 0.0;
    for (std::size_t k = 1; k <= 30; ++k) {
      const double rk = recall_at_k(ranked, truth, k);
      const double nk = ndcg_at_k(ranked, truth, k);
      EXPECT_GE(rk, r);
      // IDCG grows with k until k reaches |truth|, so NDCG is only monotone
      // from there on.
      if (k > truth.size()) EXPECT_GE(nk + 1e-15, n);
      EXPECT_LE(nk, 1.0 + 1e-15);
      r = rk;
      n = nk;
    }
  }
  // Below |truth| NDCG can fall: one hit at rank 1 of two truth items.
  EXPECT_DOUBLE_EQ(ndcg_at_k(Items{0, 5}, Items{0, 1}, 1), 1.0);
  EXPECT_LT(ndcg_at_k(Items{0, 5}, Items{0, 1}, 2), 1.0);
}

TEST(PopularityGroups, OneItemPerGroup) {
  const InteractionMatrix r(9, 3, {{0, 1, 2}, {0, 1}, {0, 1}, {0, 1}, {0, 1}, {0}, {0}, {0}, {0}});
  const auto g = popularity_groups(r);
  EXPECT_EQ(g[0], PopularityGroup::popular);
  EXPECT_EQ(g[1], PopularityGroup::medium);
  EXPECT_EQ(g[2], PopularityGroup::personal);
}

TEST(PopularityGroups, EqualCountsSplitById) {
  const InteractionMatrix r(1, 7, {{0, 1, 2, 3, 4, 5, 6}});
  const auto g = popularity_groups(r);
  // Cuts at ceil(7/3) = 3 and ceil(14/3) = 5.
  const std::vector<PopularityGroup> expected{
      PopularityGroup::popular, PopularityGroup::popular, PopularityGroup::popular,
      PopularityGroup::medium,  PopularityGroup::medium,  PopularityGroup::personal,
      PopularityGroup::personal};
  EXPECT_EQ(g, expected);
}

TEST(PopularityGroups, PartitionCoversEveryItem) {
  const auto r = oracle::random_matrix(30, 20, 0.3, 2);
  const auto g = popularity_groups(r);
  ASSERT_EQ(g.size(), 20u);
  const auto deg = r.item_degrees();
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t j = 0; j < 20; ++j) {
      if (deg[i] > deg[j]) EXPECT_LE(static_cast<int>(g[i]), static_cast<int>(g[j]));
    }
  }
}

TEST(Evaluate, HandComputedMacroAverage) {
  const InteractionMatrix test(3, 6, {{0, 1}, {2}, {3, 4, 5}});
  const std::vector<RecommendationList> recs{
      {0, {0, 5, 1}, {3, 2, 1}}, {1, {4, 3, 2}, {1, 1, 1}}, {2, {5, 0, 1}, {1, 1, 1}}};
  EvaluateOptions opts;
  opts.cutoffs = {1, 3};
  const auto report = evaluate(recs, test, opts);
  const double l3 = 1.0 / std::log2(3.0), l4 = 1.0 / std::log2(4.0);
  const double r1 = (0.5 + 0.0 + 1.0 / 3.0) / 3.0;
  const double r3 = (1.0 + 1.0 + 1.0 / 3.0) / 3.0;
  const double n1 = (1.0 + 0.0 + 1.0) / 3.0;
  const double n3 = ((1.0 + l4) / (1.0 + l3) + l4 / 1.0 + 1.0 / (1.0 + l3 + l4)) / 3.0;
  EXPECT_NEAR(report.at.at(1).recall, r1, 1e-12);
  EXPECT_NEAR(report.at.at(3).recall, r3, 1e-12);
  EXPECT_NEAR(report.at.at(1).ndcg, n1, 1e-12);
  EXPECT_NEAR(report.at.at(3).ndcg, n3, 1e-12);
  EXPECT_EQ(report.users_evaluated, 3u);
}

TEST(Evaluate, OracleListsScorePerfectRecall) {
  const auto test = oracle::random_matrix(25, 40, 0.1, 3);
  std::vector<RecommendationList> recs;
  std::size_t max_truth = 0;
  for (UserId u = 0; u < test.n_users(); ++u) {
    const auto row = test.row(u);
    max_truth = std::max(max_truth, row.size());
    RecommendationList l{u, Items(row.begin(), row.end()), {}};
    for (ItemId i = 0; i < 40 && l.items.size() < 50; ++i) {
      if (!test.contains(u, i)) l.items.push_back(i);
    }
    l.scores.assign(l.items.size(), 1);
    recs.push_back(l);
  }
  EvaluateOptions opts;
  opts.cutoffs = {max_truth, 20};
  const auto report = evaluate(recs, test, opts);
  EXPECT_DOUBLE_EQ(report.at.at(max_truth).recall, 1.0);
  EXPECT_DOUBLE_EQ(report.at.at(max_truth).ndcg, 1.0);
}

TEST(Evaluate, SkipsUsersWithoutTruth) {
  const InteractionMatrix test(3, 4, {{0}, {}, {}});
  const std::vector<RecommendationList> recs{{0, {0, 1}, {1, 1}}};
  EvaluateOptions opts;
  opts.cutoffs = {2};
  const auto report = evaluate(recs, test, opts);
  EXPECT_EQ(report.users_evaluated, 1u);
  EXPECT_EQ(report.users_skipped, 2u);
  EXPECT_DOUBLE_EQ(report.at.at(2).recall, 1.0);
}

TEST(Evaluate, ShortListNamesUser) {
  const InteractionMatrix test(2, 10, {{0}, {1}});
  const std::vector<RecommendationList> recs{{0, {0, 1, 2}, {1, 1, 1}}, {1, {1}, {1}}};
  EvaluateOptions opts;
  opts.cutoffs = {3};
  try {
    evaluate(recs, test, opts);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("user 1"), std::string::npos) << e.what();
  }
}

TEST(Evaluate, ShortListAllowedWhenCandidatesExhausted) {
  const InteractionMatrix train(1, 4, {{0, 1}});
  const InteractionMatrix test(1, 4, {{2}});
  const std::vector<RecommendationList> recs{{0, {2, 3}, {1, 1}}};
  EvaluateOptions opts;
  opts.cutoffs = {3};
  opts.train = &train;
  EXPECT_DOUBLE_EQ(evaluate(recs, test, opts).at.at(3).recall, 1.0);
}

TEST(Evaluate, GroupTruthSizesPartitionTruth) {
  const auto train = oracle::random_matrix(40, 30, 0.3, 6);
  const auto test = oracle::random_matrix(40, 30, 0.1, 7);
  const auto groups = popularity_groups(train);
  for (UserId u = 0; u < test.n_users(); ++u) {
    std::size_t total = 0;
    for (auto g : {PopularityGroup::popular, PopularityGroup::medium, PopularityGroup::personal}) {
      total += static_cast<std::size_t>(std::count_if(test.row(u).begin(), test.row(u).end(),
                                                      [&](ItemId i) { return groups[i] == g; }));
    }
    EXPECT_EQ(total, test.row(u).size());
  }
}

TEST(Evaluate, GroupMetricsUseRestrictedTruth) {
  // Items 0,1 popular; 2,3 medium; 4,5 personal.
  const InteractionMatrix train(6, 6, {{0, 1, 2}, {0, 1, 2}, {0, 1, 3}, {0, 3}, {4}, {}});
  const auto groups = popularity_groups(train);
  ASSERT_EQ(groups[0], PopularityGroup::popular);
  ASSERT_EQ(groups[2], PopularityGroup::medium);
  ASSERT_EQ(groups[5], PopularityGroup::personal);
  const InteractionMatrix test(6, 6, {{}, {}, {}, {}, {}, {0, 2, 5}});
  const std::vector<RecommendationList> recs{{5, {2, 4, 0}, {3, 2, 1}}};
  EvaluateOptions opts;
  opts.cutoffs = {2};
  opts.groups = &groups;
  const auto report = evaluate(recs, test, opts);
  EXPECT_DOUBLE_EQ(report.at.at(2).recall, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(report.groups.at(PopularityGroup::popular).at.at(2).recall, 0.0);
  EXPECT_DOUBLE_EQ(report.groups.at(PopularityGroup::medium).at.at(2).recall, 1.0);
  EXPECT_DOUBLE_EQ(report.groups.at(PopularityGroup::medium).at.at(2).ndcg, 1.0);
  EXPECT_DOUBLE_EQ(report.groups.at(PopularityGroup::personal).at.at(2).recall, 0.0);
  EXPECT_EQ(report.groups.at(PopularityGroup::medium).users, 1u);
}

TEST(Evaluate, RandomRankerMatchesNullModel) {
  // 200 users, 100 items, 20 held-out items per user.
  std::mt19937_64 rng(8);
  std::vector<std::vector<ItemId>> rows(200);
  Items all(100);
  std::iota(all.begin(), all.end(), 0u);
  for (auto& row : rows) {
    Items perm = all;
    std::shuffle(perm.begin(), perm.end(), rng);
    row.assign(perm.begin(), perm.begin() + 20);
  }
  const InteractionMatrix test(200, 100, rows);
  std::vector<RecommendationList> recs;
  for (UserId u = 0; u < 200; ++u) {
    Items perm = all;
    std::shuffle(perm.begin(), perm.end(), rng);
    perm.resize(50);
    recs.push_back({u, perm, std::vector<std::int32_t>(50, 0)});
  }
  const auto report = evaluate(recs, test);
  // Hypergeometric: E[hits in top 10] = 10 * 20 / 100, divided by |truth| = 20.
  const double null10 = 10.0 * 20.0 / 100.0 / 20.0;
  EXPECT_DOUBLE_EQ(random_ranker_recall(test, 10), null10);
  EXPECT_NEAR(report.at.at(10).recall, null10, 0.02);
  EXPECT_NEAR(report.at.at(50).recall, 0.5, 0.03);
}

TEST(RandomRanker, MaskedNullModel) {
  const InteractionMatrix train(2, 10, {{0, 1, 2, 3, 4, 5}, {0}});
  const InteractionMatrix test(2, 10, {{6}, {1, 2}});
  // Candidates 4 and 9: recall min(k, c) / c.
  EXPECT_DOUBLE_EQ(random_ranker_recall_masked(train, test, 2), (2.0 / 4.0 + 2.0 / 9.0) / 2.0);
  EXPECT_DOUBLE_EQ(random_ranker_recall_masked(train, test, 5), (1.0 + 5.0 / 9.0) / 2.0);
}

TEST(MetricsReport, JsonIsDeterministicAndCarriesHash) {
  const InteractionMatrix test(2, 5, {{0}, {1, 2}});
  const std::vector<RecommendationList> recs{{0, {0, 3}, {1, 1}}, {1, {2, 4}, {1, 1}}};
  EvaluateOptions opts;
  opts.cutoffs = {2};
  auto a = evaluate(recs, test, opts);
  auto b = evaluate(recs, test, opts);
  a.config_hash = b.config_hash = "00000000deadbeef";
  a.git_revision = b.git_revision = "abc123";
  EXPECT_EQ(a.to_json(), b.to_json());
  const auto j = nlohmann::json::parse(a.to_json());
  EXPECT_EQ(j["config_hash"], "00000000deadbeef");
  EXPECT_EQ(j["git_revision"], "abc123");
  EXPECT_DOUBLE_EQ(j["overall"]["recall@2"].get<double>(), 0.75);
}

TEST(CompensatedSum, RecoversSmallTerms) {
  CompensatedSum s;
  s.add(1e16);
  for (int i = 0; i < 1000; ++i) s.add(1.0);
  s.add(-1e16);
  EXPECT_EQ(s.value(), 1000.0);
}

}  // namespace
}  // namespace stagecf
