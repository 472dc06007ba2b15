// Copyright 2026 The oracle4rec Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "oracle4rec/eval.hpp"
#include "test_util.hpp"

using namespace oracle4rec;

namespace {

// Rank by sorting the candidates: score descending, then id ascending.
Index sort_rank(const std::vector<double>& scores, ItemId truth, std::vector<ItemId> cands) {
  std::sort(cands.begin(), cands.end(), [&](ItemId a, ItemId b) {
    const double sa = scores[a - 1], sb = scores[b - 1];
    return sa != sb ? sa > sb : a < b;
  });
  return std::find(cands.begin(), cands.end(), truth) - cands.begin() + 1;
}

Dataset categorized(std::vector<std::vector<ItemId>> seqs, Index n, Index cats) {
  Dataset ds;
  ds.num_users = static_cast<Index>(seqs.size());
  ds.num_items = n;
  for (Index u = 0; u < ds.num_users; ++u) ds.user_ids.push_back("u" + std::to_string(u));
  ds.item_ids.push_back("");
  ds.item_categories.assign(static_cast<std::size_t>(n + 1), {});
  for (Index c = 0; c < cats; ++c) ds.category_names.push_back("c" + std::to_string(c));
  for (Index i = 1; i <= n; ++i) {
    ds.item_ids.push_back("i" + std::to_string(i));
    ds.item_categories[i] = {static_cast<std::int32_t>(i % cats)};
  }
  ds.sequences = std::move(seqs);
  return ds;
}

}  // namespace

TEST_CASE("scores are dot products with the item table") {
  Embeddings<double> emb;
  emb.items = Matrix<double>(3, 2);
  emb.items << 9, 9, 1, 0, 0, 1;
  const RowVector<double> pred = (RowVector<double>(2) << 2, 1).finished();
  const auto s = score_all<double>(pred, emb);
  CHECK(s == std::vector<double>{2, 1});
  const std::vector<ItemId> both = {1, 2};
  CHECK(rank_of_truth<double>(s, 1, both) == 1);
  const auto z = score_all<double>(RowVector<double>::Zero(2), emb);
  CHECK(rank_of_truth<double>(z, 1, both) == 1);
  CHECK(rank_of_truth<double>(z, 2, both) == 2);
}

TEST_CASE("rank of truth matches a sort oracle") {
  Rng rng(1);
  std::vector<ItemId> all(100);
  std::iota(all.begin(), all.end(), 1);
  const std::vector<double> flat(100, 0.0);
  CHECK(rank_of_truth<double>(flat, 1, all) == 1);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 5 + static_cast<Index>(uniform_index(rng, 150));
    std::vector<double> scores(n);
    // Coarse values so ties are common.
    for (auto& x : scores) x = static_cast<double>(uniform_index(rng, 7)) - 3.0;
    std::vector<ItemId> cands;
    for (ItemId i = 1; i <= n; ++i)
      if (uniform_index(rng, 3) != 0) cands.push_back(i);
    if (cands.empty()) cands.push_back(1);
    const ItemId truth = cands[uniform_index(rng, cands.size())];
    CHECK(rank_of_truth<double>(scores, truth, cands) == sort_rank(scores, truth, cands));
  }
  const std::vector<ItemId> some = {1, 2};
  CHECK_THROWS_AS(rank_of_truth<double>(flat, 3, some), ProtocolError);
}

TEST_CASE("metric formulas") {
  CHECK(hr_at_k(1, 1) == 1.0);
  CHECK(ndcg_at_k(1, 10) == 1.0);
  CHECK(mrr(1) == 1.0);
  CHECK(hr_at_k(3, 5) == 1.0);
  CHECK(ndcg_at_k(3, 5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mrr(3) == doctest::Approx(1.0 / 3));
  CHECK(hr_at_k(11, 10) == 0.0);
  CHECK(ndcg_at_k(11, 10) == 0.0);
  for (Index r = 1; r <= 30; ++r)
    for (Index k = 1; k < 20; ++k) {
      CHECK(hr_at_k(r, k) <= hr_at_k(r, k + 1));
      CHECK(ndcg_at_k(r, k) <= ndcg_at_k(r, k + 1));
    }
  const auto rep = summarize_ranks({1, 3, 11, 2}, Protocol::sampled99, EvalTarget::test, 1);
  CHECK(rep.hr1 == 0.25);
  CHECK(rep.ndcg1 == rep.hr1);
  CHECK(rep.hr10 == 0.75);
  CHECK(rep.mrr == doctest::Approx((1 + 1.0 / 3 + 1.0 / 11 + 0.5) / 4));
  CHECK(rep.users == 4);
}

TEST_CASE("evaluation negatives") {
  const std::vector<ItemId> seq = {3, 7, 9, 120};
  const ItemSet set(seq);
  const auto a = sample_eval_negatives(set, 500, 1, 4);
  CHECK(a.size() == 99);
  CHECK(std::set<ItemId>(a.begin(), a.end()).size() == 99);
  for (ItemId v : a) {
    CHECK_FALSE(set.contains(v));
    CHECK(v >= 1);
    CHECK(v <= 500);
  }
  CHECK(sample_eval_negatives(set, 500, 1, 4) == a);
  CHECK(sample_eval_negatives(set, 500, 1, 5) != a);
  CHECK(sample_eval_negatives(set, 500, 2, 4) != a);
  CHECK(sample_eval_negatives(set, 130, 1, 4).size() == 99);
  CHECK(sample_eval_negatives(set, 20, 1, 4).size() == 17);
}

TEST_CASE("evaluation histories and protocols") {
  const auto split = split_leave_one_out(
      categorized({{1, 2, 3, 4, 5, 6}, {7, 8, 9, 10, 11}, {12, 13, 14}}, 150, 3));
  CHECK(eval_history(split, 0, EvalTarget::valid, 4) == std::vector<ItemId>{1, 2, 3, 4});
  CHECK(eval_history(split, 0, EvalTarget::test, 4) == std::vector<ItemId>{2, 3, 4, 5});
  CHECK(eval_history(split, 2, EvalTarget::valid, 4) == std::vector<ItemId>{0, 0, 0, 12});

  ModelConfig cfg;
  cfg.encoder.num_items = 150;
  cfg.encoder.length = 4;
  cfg.encoder.dim = 8;
  cfg.encoder.init_std = 0.5;
  cfg.guiding.future = 1;
  Model<double> model(cfg);
  const auto params = init_model_params<double>(cfg, 3);
  const auto s = evaluate(model, params, split, Protocol::sampled99, EvalTarget::test, 7);
  const auto again = evaluate(model, params, split, Protocol::sampled99, EvalTarget::test, 7, 3);
  const auto full = evaluate(model, params, split, Protocol::full, EvalTarget::test, 7);
  CHECK(s.ranks == again.ranks);
  CHECK(s.users == 3);
  CHECK(s.ndcg1 == s.hr1);
  CHECK(full.ndcg1 == full.hr1);
  for (Index u = 0; u < 3; ++u) {
    CHECK(s.ranks[u] <= 100);
    CHECK(full.ranks[u] >= s.ranks[u]);
  }
  // Sampled rank recomputed by hand from the same negatives.
  const auto pred = model.predict(params, eval_history(split, 1, EvalTarget::test, 4));
  const auto scores = score_all<double>(pred.row(0), params.shared);
  auto cands = sample_eval_negatives(ItemSet(split.full[1]), 150, 7, 1);
  cands.push_back(split.test_target[1]);
  CHECK(s.ranks[1] == sort_rank(scores, split.test_target[1], cands));
}

TEST_CASE("preference distributions and KL") {
  const std::vector<std::vector<std::int32_t>> cats = {{}, {0}, {0}, {1}, {0, 1}, {}};
  const std::vector<ItemId> aab = {1, 2, 3};
  auto p = preference_distribution(aab, cats, 2);
  CHECK(p[0] == doctest::Approx(2.0 / 3));
  CHECK(p[1] == doctest::Approx(1.0 / 3));
  const std::vector<ItemId> multi = {4};
  p = preference_distribution(multi, cats, 2);
  CHECK(p == std::vector<double>{0.5, 0.5});
  const std::vector<ItemId> none = {5};
  CHECK_THROWS_AS(preference_distribution(none, cats, 2), AnalysisError);

  const std::vector<std::vector<double>> real = {{1, 0}, {0.3, 0.7}};
  CHECK(preference_kl(real, real) == 0.0);
  CHECK(preference_kl({{1, 0}}, {{0.5, 0.5}}) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(preference_kl({{0.5, 0.5}, {1, 0}}, {{0.5, 0.5}, {0.5, 0.5}}) ==
        doctest::Approx(0.346574).epsilon(1e-6));
  CHECK(preference_kl({{1, 0}}, {{0, 1}}) == doctest::Approx(std::log(1e12)));
  CHECK(format_relative(0.176) == "+17.6%");
  CHECK(format_relative(-0.05) == "-5.0%");
}

TEST_CASE("preference comparison end to end") {
  const auto split = split_leave_one_out(
      categorized({{1, 2, 3, 4, 5, 6}, {7, 8, 9, 10, 11}, {12, 13, 14, 15}}, 30, 3));
  ModelConfig cfg;
  cfg.encoder.num_items = 30;
  cfg.encoder.length = 4;
  cfg.encoder.dim = 8;
  cfg.encoder.init_std = 0.5;
  cfg.guiding.future = 1;
  Model<double> model(cfg);
  const auto pa = init_model_params<double>(cfg, 1);
  const auto pb = init_model_params<double>(cfg, 2);
  const auto top = top_k_items(model, pa, split, 5);
  for (Index u = 0; u < 3; ++u) {
    CHECK(top[u].size() == 5);
    for (ItemId v : top[u]) {
      const auto& hist = split.full[u];
      const bool in_history = std::find(hist.begin(), hist.end() - 1, v) != hist.end() - 1;
      CHECK_FALSE(in_history);
    }
  }
  const auto same = analyze_preferences(model, pa, model, pa, split, 5);
  CHECK(same.kl_a == same.kl_b);
  CHECK(same.users == 3);
  const auto diff = analyze_preferences(model, pa, model, pb, split, 5);
  CHECK(diff.kl_a >= 0);
  CHECK(diff.relative_improvement == doctest::Approx((diff.kl_b - diff.kl_a) / diff.kl_b));
  // Real distributions come from the two held-out items.
  const std::vector<ItemId> held = {split.valid_target[0], split.test_target[0]};
  CHECK(diff.real[0] == preference_distribution(held, split.train.item_categories, 3));

  testing::TempDir dir("eval");
  write_prefdist_csv(diff, split, dir.path() / "prefdist.csv");
  std::ifstream in(dir.path() / "prefdist.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("user,category,real_p", 0) == 0);
  Index rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3 * 3);
}
