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
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "oracle4rec/training.hpp"
#include "test_util.hpp"

using namespace oracle4rec;

namespace {

Dataset from_sequences(std::vector<std::vector<ItemId>> seqs, Index num_items) {
  Dataset ds;
  ds.num_users = static_cast<Index>(seqs.size());
  ds.num_items = num_items;
  for (Index u = 0; u < ds.num_users; ++u) ds.user_ids.push_back("u" + std::to_string(u));
  ds.item_ids.push_back("");
  for (Index i = 1; i <= num_items; ++i) ds.item_ids.push_back("i" + std::to_string(i));
  ds.item_categories.assign(static_cast<std::size_t>(num_items + 1), {});
  ds.sequences = std::move(seqs);
  return ds;
}

SplitDataset toy_split() {
  return split_leave_one_out(from_sequences({{1, 2, 3, 4, 5, 6, 7, 8, 9},
                                             {3, 1, 4, 1, 5, 9, 2, 6},
                                             {10, 9, 8, 7, 6, 5, 4}},
                                            10));
}

ModelConfig toy_model(Index num_items) {
  ModelConfig cfg;
  cfg.encoder.num_items = num_items;
  cfg.encoder.length = 5;
  cfg.encoder.dim = 4;
  cfg.encoder.ff_dim = 5;
  cfg.encoder.quantile = 0.6;
  cfg.encoder.dropout = 0.2;
  cfg.encoder.init_std = 0.4;
  cfg.guiding.future = 2;
  cfg.guiding.gamma = 0.3;
  cfg.guiding.beta = 0.7;
  return cfg;
}

TrainConfig toy_train() {
  TrainConfig t;
  t.epochs = 2;
  t.batch = 4;
  t.lr1 = 0.01;
  t.lr2 = 0.01;
  t.seed = 3;
  t.val_protocol = Protocol::full;
  return t;
}

template <typename T>
bool same_params(ModelParams<T> a, ModelParams<T> b, ParamGroup only) {
  bool same = true;
  for_each_model_block(
      [&](const std::string&, ParamGroup g, Matrix<T>& x, Matrix<T>& y) {
        if (g == only && !bitwise_equal(x, y)) same = false;
      },
      a, b);
  return same;
}

std::vector<GradBlock> model_blocks(ModelParams<double>& p, ModelParams<double>& g) {
  std::vector<GradBlock> out;
  for_each_model_block(
      [&](const std::string& name, ParamGroup, Matrix<double>& v, Matrix<double>& d) {
        out.push_back({name, &v, &d});
      },
      p, g);
  return out;
}

std::vector<Example> all_examples(const Dataset& train) {
  return epoch_examples(train, 0, 1, 1, 1);
}

}  // namespace

TEST_CASE("epoch examples") {
  const auto split = toy_split();
  const auto ex = epoch_examples(split.train, 0, 5, 1, 1);
  std::set<std::pair<Index, Index>> got;
  for (const auto& e : ex) got.insert({e.user, e.target});
  std::set<std::pair<Index, Index>> want;
  for (Index u = 0; u < split.train.num_users; ++u)
    for (Index t = 2; t <= static_cast<Index>(split.train.sequences[u].size()); ++t) want.insert({u, t});
  CHECK(got == want);
  CHECK(ex.size() == want.size());

  const auto again = epoch_examples(split.train, 0, 5, 1, 1);
  CHECK(std::equal(ex.begin(), ex.end(), again.begin(),
                   [](auto a, auto b) { return a.user == b.user && a.target == b.target; }));
  const auto other = epoch_examples(split.train, 0, 5, 2, 1);
  CHECK_FALSE(std::equal(ex.begin(), ex.end(), other.begin(),
                         [](auto a, auto b) { return a.user == b.user && a.target == b.target; }));

  const auto sub = epoch_examples(split.train, 2, 5, 1, 1);
  CHECK(sub.size() == 6);
  for (Index u = 0; u < 3; ++u)
    CHECK(std::count_if(sub.begin(), sub.end(), [&](auto e) { return e.user == u; }) == 2);
}

TEST_CASE("batches line up windows, targets and negatives") {
  const auto split = toy_split();
  auto cfg = toy_model(10);
  std::vector<ItemSet> seen;
  for (const auto& s : split.train.sequences) seen.emplace_back(s);
  const auto ex = all_examples(split.train);
  Rng rng(1);
  const Batch b = make_batch(split.train, seen, ex, cfg, rng, true);
  const Index L = cfg.encoder.length;
  REQUIRE(b.size == static_cast<Index>(ex.size()));
  for (Index i = 0; i < b.size; ++i) {
    const auto& seq = split.train.sequences[ex[i].user];
    const auto h = build_history(seq, ex[i].target, L);
    CHECK(std::equal(h.begin(), h.end(), b.history.begin() + i * L));
    CHECK(b.positive[i] == seq[ex[i].target - 1]);
    CHECK_FALSE(seen[ex[i].user].contains(b.negative[i]));
    const auto g = build_global(seq, ex[i].target, L, cfg.guiding.future);
    for (Index r = 0; r < L; ++r) {
      const ItemId held = b.global[i * L + r];
      const ItemId next = b.next[i * L + r];
      CHECK(held == g.items[r]);
      if (held == 0 || next == 0) continue;
      const auto pos = std::find(seq.begin(), seq.end(), held) - seq.begin();
      if (std::count(seq.begin(), seq.end(), held) == 1) CHECK(seq[pos + 1] == next);
      CHECK_FALSE(seen[ex[i].user].contains(b.next_negative[i * L + r]));
    }
  }

  cfg.r2l_future = true;
  Rng rng2(1);
  const Batch r = make_batch(split.train, seen, ex, cfg, rng2, true);
  for (Index i = 0; i < r.size; ++i) {
    const auto& seq = split.train.sequences[ex[i].user];
    for (Index row = 0; row < L; ++row) {
      const ItemId held = r.global[i * L + row];
      const ItemId next = r.next[i * L + row];
      if (held == 0 || next == 0) continue;
      const auto pos = std::find(seq.begin(), seq.end(), held) - seq.begin();
      if (std::count(seq.begin(), seq.end(), held) == 1) CHECK(seq[pos - 1] == next);
    }
    // Weight 1 belongs to the row predicting the target itself.
    for (const auto& gr : r.guided[i])
      if (gr.weight_index == 1) CHECK(r.next[i * L + gr.row] == seq[ex[i].target - 1]);
  }
}

TEST_CASE("full objective gradients for every discrepancy and both encoders") {
  const auto split = toy_split();
  for (auto kind : {EncoderKind::attention, EncoderKind::recurrent}) {
    for (auto disc : {Discrepancy::kl, Discrepancy::js, Discrepancy::euclidean,
                      Discrepancy::cosine}) {
      CAPTURE(static_cast<int>(kind));
      CAPTURE(to_string(disc));
      auto cfg = toy_model(10);
      cfg.encoder.kind = kind;
      cfg.guiding.kind = disc;
      Model<double> model(cfg);
      auto params = init_model_params<double>(cfg, 4);
      std::vector<ItemSet> seen;
      for (const auto& s : split.train.sequences) seen.emplace_back(s);
      const auto ex = all_examples(split.train);
      Rng brng(2);
      const Batch batch = make_batch(split.train, seen, ex, cfg, brng, true);
      GradCheckOptions opts;
      opts.max_entries_per_block = 12;

      // Joint objective: gradients through both encoders.
      {
        auto grad = zeros_like(params);
        Rng r(7);
        joint_loss<double>(model, params, batch, 0.7, 0.9, &grad, r, true);
        auto loss = [&] {
          Rng rr(7);
          const auto l = joint_loss<double>(model, params, batch, 0.7, 0.9, nullptr, rr, true);
          return l.past + 0.9 * l.future + 0.7 * l.guide;
        };
        const auto report = check_gradients(loss, model_blocks(params, grad), opts);
        CAPTURE(report.worst_block);
        CHECK(report.max_rel_error <= 1e-4);
      }
      // Guided past objective: R is a constant built from a snapshot, so the
      // future blocks are left out of the comparison.
      {
        const Embeddings<double> snapshot = params.shared;
        auto grad = zeros_like(params);
        Rng r(8);
        past_phase_loss<double>(model, params, snapshot, batch, 0.7, &grad, r, true);
        auto loss = [&] {
          Rng rr(8);
          const auto l = past_phase_loss<double>(model, params, snapshot, batch, 0.7, nullptr, rr,
                                                 true);
          return l.past + 0.7 * l.guide;
        };
        auto blocks = model_blocks(params, grad);
        std::erase_if(blocks, [](const GradBlock& b) { return b.name.rfind("future.", 0) == 0; });
        const auto report = check_gradients(loss, blocks, opts);
        CAPTURE(report.worst_block);
        CHECK(report.max_rel_error <= 1e-4);
        bool future_zero = true;
        for_each_block(
            "", [&](const std::string&, Matrix<double>& g) { future_zero &= g.isZero(0.0); },
            grad.future);
        CHECK(future_zero);
      }
      // Future objective.
      {
        auto grad = zeros_like(params);
        Rng r(9);
        future_phase_loss<double>(model, params, batch, &grad, r, true);
        auto loss = [&] {
          Rng rr(9);
          return static_cast<double>(future_phase_loss<double>(model, params, batch, nullptr, rr, true));
        };
        CHECK(check_gradients(loss, model_blocks(params, grad), opts).max_rel_error <= 1e-4);
      }
    }
  }
}

TEST_CASE("phase isolation") {
  const auto split = toy_split();
  Trainer<double> tr(toy_model(10), toy_train(), split);
  const auto ex = all_examples(split.train);
  auto before = tr.params();
  tr.run_future_phase(ex, 1);
  CHECK(same_params(before, tr.params(), ParamGroup::past));
  CHECK_FALSE(same_params(before, tr.params(), ParamGroup::future));
  CHECK_FALSE(same_params(before, tr.params(), ParamGroup::shared));
  before = tr.params();
  tr.run_past_phase(ex, 1);
  CHECK(same_params(before, tr.params(), ParamGroup::future));
  CHECK_FALSE(same_params(before, tr.params(), ParamGroup::past));
  CHECK_FALSE(same_params(before, tr.params(), ParamGroup::shared));
}

TEST_CASE("future-exclusive parameters only reach the past update through R") {
  // With beta = 0 the future parameters are never read in the past phase.
  const auto split = toy_split();
  auto cfg = toy_model(10);
  cfg.encoder.dropout = 0.0;
  Model<double> model(cfg);
  auto params = init_model_params<double>(cfg, 4);
  std::vector<ItemSet> seen;
  for (const auto& s : split.train.sequences) seen.emplace_back(s);
  Rng brng(2);
  const Batch batch = make_batch(split.train, seen, all_examples(split.train), cfg, brng, true);
  auto grad_a = zeros_like(params);
  Rng r1(1);
  past_phase_loss<double>(model, params, params.shared, batch, 0.0, &grad_a, r1, true);
  params.future.attention[0].wq.array() += 0.25;
  auto grad_b = zeros_like(params);
  Rng r2(1);
  past_phase_loss<double>(model, params, params.shared, batch, 0.0, &grad_b, r2, true);
  CHECK(same_params(grad_a, grad_b, ParamGroup::past));
  CHECK(same_params(grad_a, grad_b, ParamGroup::shared));
}

TEST_CASE("beta = 0 phase step equals a past-only step") {
  const auto split = toy_split();
  auto guided_cfg = toy_model(10);
  guided_cfg.guiding.beta = 0.0;
  Trainer<double> a(guided_cfg, toy_train(), split);
  auto no_future = toy_train();
  no_future.use_future = false;
  Trainer<double> b(toy_model(10), no_future, split);
  const auto ex = epoch_examples(split.train, 0, 3, 1, 2);
  const auto la = a.run_past_phase(ex, 1);
  const auto lb = b.run_past_phase(ex, 1);
  CHECK(la.past == lb.past);
  CHECK(la.guide == 0.0);
  for (auto g : {ParamGroup::shared, ParamGroup::past, ParamGroup::future})
    CHECK(same_params(a.params(), b.params(), g));
}

TEST_CASE("training is deterministic and the two modes differ") {
  const auto split = toy_split();
  Trainer<double> a(toy_model(10), toy_train(), split);
  Trainer<double> b(toy_model(10), toy_train(), split);
  for (Index e = 1; e <= 2; ++e) {
    a.run_epoch(e);
    b.run_epoch(e);
  }
  for (auto g : {ParamGroup::shared, ParamGroup::past, ParamGroup::future})
    CHECK(same_params(a.params(), b.params(), g));

  auto joint_cfg = toy_train();
  joint_cfg.mode = TrainMode::joint;
  Trainer<double> j(toy_model(10), joint_cfg, split);
  for (Index e = 1; e <= 2; ++e) j.run_epoch(e);
  CHECK_FALSE(same_params(a.params(), j.params(), ParamGroup::past));
  CHECK_FALSE(same_params(a.params(), j.params(), ParamGroup::future));
}

TEST_CASE("joint mode without future and guiding terms trains the past encoder only") {
  const auto split = toy_split();
  auto t = toy_train();
  t.mode = TrainMode::joint;
  t.future_loss_weight = 0.0;
  auto cfg = toy_model(10);
  cfg.guiding.beta = 0.0;
  Trainer<double> j(cfg, t, split);
  const auto before = j.params();
  j.run_epoch(1);
  CHECK(same_params(before, j.params(), ParamGroup::future));
  CHECK_FALSE(same_params(before, j.params(), ParamGroup::past));
}

TEST_CASE("invalid configurations are rejected before training") {
  const auto split = toy_split();
  auto cfg = toy_model(10);
  cfg.guiding.future = cfg.encoder.length;
  CHECK_THROWS_AS(Trainer<double>(cfg, toy_train(), split), ConfigError);
  auto t = toy_train();
  t.epochs = 0;
  CHECK_THROWS_AS(Trainer<double>(toy_model(10), t, split), ConfigError);
  t = toy_train();
  t.lr1 = 0;
  CHECK_THROWS_AS(Trainer<double>(toy_model(10), t, split), ConfigError);
  CHECK_THROWS_AS(Trainer<double>(toy_model(9), toy_train(), split), ConfigError);
}

TEST_CASE("checkpoint reload reproduces validation metrics bitwise") {
  const auto split = toy_split();
  Trainer<float> tr(toy_model(10), toy_train(), split);
  tr.run_epoch(1);
  const MetricsReport m1 = tr.validate();
  testing::TempDir dir("training");
  save_checkpoint<float>(dir.path() / "checkpoint.bin", tr.model_config(), tr.params(), {});
  const auto loaded = load_checkpoint(dir.path() / "checkpoint.bin");
  Model<float> model(loaded.config);
  const MetricsReport m2 =
      evaluate(model, loaded.params, split, Protocol::full, EvalTarget::valid, toy_train().eval_seed);
  CHECK(m1.ranks == m2.ranks);
  CHECK(m1.mrr == m2.mrr);
  CHECK(m1.ndcg10 == m2.ndcg10);
}

TEST_CASE("full runs keep the best epoch") {
  const auto split = toy_split();
  auto t = toy_train();
  t.epochs = 6;
  t.patience = 2;
  Trainer<double> tr(toy_model(10), t, split);
  Index seen = 0;
  const TrainLog log = tr.train([&](const EpochRecord&) { ++seen; });
  CHECK(seen == static_cast<Index>(log.epochs.size()));
  CHECK(log.best_epoch >= 1);
  CHECK(tr.validate().mrr == log.best_val_mrr);
  double best = -1;
  for (const auto& e : log.epochs) best = std::max(best, e.val_mrr);
  CHECK(best == log.best_val_mrr);
  for (const auto& e : log.epochs) {
    CHECK(e.loss_past > 0);
    CHECK(e.loss_future > 0);
    CHECK(e.loss_guide > 0);
  }
  testing::TempDir dir("trainlog");
  write_trainlog_csv(log, dir.path() / "trainlog.csv");
  std::ifstream in(dir.path() / "trainlog.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("epoch,L_p,L_f,L_g,val_MRR", 0) == 0);
}

TEST_CASE("a two-user toy set is memorized") {
  // Each user cycles through a few items of a larger catalogue, so the
  // held-out items follow transitions seen in training.
  std::vector<ItemId> a, b;
  for (int i = 0; i < 15; ++i) {
    a.push_back(static_cast<ItemId>(1 + i % 4));
    b.push_back(static_cast<ItemId>(5 + i % 4));
  }
  const auto split = split_leave_one_out(from_sequences({a, b}, 40));
  ModelConfig cfg;
  cfg.encoder.num_items = 40;
  cfg.encoder.length = 6;
  cfg.encoder.dim = 16;
  cfg.encoder.dropout = 0.0;
  cfg.encoder.quantile = 1.0;
  cfg.guiding.future = 2;
  TrainConfig t;
  t.lr1 = t.lr2 = 0.01;
  t.batch = 32;
  Trainer<double> tr(cfg, t, split);
  double loss = 1e9;
  Index epoch = 0;
  while (loss >= 0.1 && epoch < 500) loss = tr.run_epoch(++epoch).loss_past;
  MESSAGE("past loss " << loss << " after " << epoch << " epochs");
  CHECK(loss < 0.1);
  const auto test = evaluate(tr.model(), tr.params(), split, Protocol::sampled99, EvalTarget::test, 1);
  CHECK(test.hr1 == 1.0);
  CHECK(test.ndcg1 == test.hr1);
}

TEST_CASE("past loss falls on a small synthetic drift set") {
  DriftConfig d;
  d.num_users = 50;
  d.num_items = 20;
  d.seed = 1;
  const auto split = split_leave_one_out(generate_synthetic_drift(d));
  ModelConfig cfg;
  cfg.encoder.num_items = 20;
  cfg.encoder.length = 20;
  cfg.encoder.dim = 32;
  cfg.guiding.future = 5;
  TrainConfig t;
  t.batch = 64;
  t.seed = 1;
  Trainer<float> tr(cfg, t, split);
  std::vector<double> curve;
  for (Index e = 1; e <= 20; ++e) curve.push_back(tr.run_epoch(e).loss_past);
  const double head = (curve[0] + curve[1] + curve[2]) / 3.0;
  const double tail = (curve[17] + curve[18] + curve[19]) / 3.0;
  MESSAGE("smoothed past loss " << head << " -> " << tail);
  CHECK(tail <= 0.7 * head);
}

TEST_CASE("ablation catalogue") {
  const auto& cat = ablation_catalog();
  CHECK(cat.size() == 11);
  std::set<int> rows;
  for (const auto& a : cat) {
    rows.insert(a.row);
    ModelConfig m = toy_model(10);
    TrainConfig t = toy_train();
    apply_ablation(a.name, m, t);
  }
  CHECK(rows.size() == 11);
  ModelConfig m = toy_model(10);
  TrainConfig t = toy_train();
  apply_ablation("no_future", m, t);
  CHECK_FALSE(t.use_future);
  apply_ablation("r2l", m, t);
  CHECK(m.r2l_future);
  apply_ablation("future_only", m, t);
  CHECK(m.inference == InferenceEncoder::future);
  CHECK_THROWS_AS(apply_ablation("bogus", m, t), ConfigError);
}
