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

#include "oracle4rec/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace oracle4rec {

namespace {

// Stream tags for derive_rng.
constexpr std::uint64_t kTagTargets = 0x54415247u;
constexpr std::uint64_t kTagShuffle = 0x53485546u;
constexpr std::uint64_t kTagNegatives = 0x4e454753u;
constexpr std::uint64_t kTagDropout = 0x44524f50u;

using Clock = std::chrono::steady_clock;

// Batch-sized buffers are allocated and released many times per epoch; keep
// them on the heap instead of round-tripping through mmap.
void keep_large_allocations() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
#endif
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename T>
void check_finite(T value, const std::string& what, Index epoch, Index batch) {
  if (!std::isfinite(static_cast<double>(value))) {
    throw NumericError("non-finite " + what + " loss in epoch " + std::to_string(epoch) +
                       ", batch " + std::to_string(batch));
  }
}

}  // namespace

std::string to_string(TrainMode m) { return m == TrainMode::two_phase ? "two_phase" : "joint"; }

TrainMode parse_train_mode(const std::string& name) {
  if (name == "two_phase") return TrainMode::two_phase;
  if (name == "joint") return TrainMode::joint;
  throw ConfigError("train.mode: unknown mode '" + name + "' (two_phase, joint)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs: must be >= 1");
  if (batch < 1) throw ConfigError("train.batch: must be >= 1");
  if (!(lr1 > 0.0)) throw ConfigError("train.lr1: must be > 0");
  if (!(lr2 > 0.0)) throw ConfigError("train.lr2: must be > 0");
  if (targets_per_user < 0) throw ConfigError("train.targets_per_user: must be >= 0");
  if (patience < 0) throw ConfigError("train.patience: must be >= 0");
  if (!(future_loss_weight >= 0.0)) throw ConfigError("train.future_weight: must be >= 0");
  if (time_budget < 0.0) throw ConfigError("train.time_budget: must be >= 0");
}

std::vector<Example> epoch_examples(const Dataset& train, Index targets_per_user,
                                    std::uint64_t seed, Index epoch, Index phase) {
  std::vector<Example> out;
  std::vector<Index> pool;
  for (Index u = 0; u < train.num_users; ++u) {
    const Index m = static_cast<Index>(train.sequences[u].size());
    if (m < 2) continue;
    pool.resize(static_cast<std::size_t>(m - 1));
    std::iota(pool.begin(), pool.end(), Index{2});
    Index take = static_cast<Index>(pool.size());
    if (targets_per_user > 0 && targets_per_user < take) {
      Rng rng = derive_rng(seed, {kTagTargets, static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(u)});
      for (Index i = 0; i < targets_per_user; ++i) {
        const auto j = i + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(take - i)));
        std::swap(pool[i], pool[j]);
      }
      take = targets_per_user;
    }
    for (Index i = 0; i < take; ++i) out.push_back({u, pool[i]});
  }
  Rng rng = derive_rng(seed, {kTagShuffle, static_cast<std::uint64_t>(epoch),
                              static_cast<std::uint64_t>(phase)});
  for (std::size_t i = out.size(); i > 1; --i) {
    std::swap(out[i - 1], out[uniform_index(rng, i)]);
  }
  return out;
}

Batch make_batch(const Dataset& train, std::span<const ItemSet> seen, std::span<const Example> ex,
                 const ModelConfig& cfg, Rng& rng, bool with_future) {
  const Index L = cfg.encoder.length;
  const Index P = cfg.guiding.future;
  const Index n = train.num_items;
  Batch b;
  b.size = static_cast<Index>(ex.size());
  b.history.reserve(static_cast<std::size_t>(b.size * L));
  for (const auto& e : ex) {
    const auto& seq = train.sequences[e.user];
    const auto h = build_history(seq, e.target, L);
    b.history.insert(b.history.end(), h.begin(), h.end());
    b.positive.push_back(seq[e.target - 1]);
    b.negative.push_back(sample_negative(seen[e.user], n, rng));
    if (!with_future) continue;

    const Index m = static_cast<Index>(seq.size());
    const auto g = build_global(seq, e.target, L, P);
    const Index real = std::min(g.end, L);
    std::vector<ItemId> window(static_cast<std::size_t>(L), 0);
    std::vector<ItemId> next(static_cast<std::size_t>(L), 0);
    if (!cfg.r2l_future) {
      window = g.items;
      for (Index r = L - real; r < L; ++r) {
        const Index pos = g.end - (L - 1 - r);  // 1-based position held by row r
        if (pos + 1 <= m) next[r] = seq[pos];
      }
      b.guided.push_back(guided_rows(L, P, g.available_future));
    } else {
      for (Index k = 0; k < real; ++k) {
        const Index pos = g.end - k;
        window[L - real + k] = seq[pos - 1];
        if (pos - 1 >= 1) next[L - real + k] = seq[pos - 2];
      }
      b.guided.push_back(guided_rows_reversed(L, real, P, g.available_future));
    }
    b.global.insert(b.global.end(), window.begin(), window.end());
    for (Index r = 0; r < L; ++r) {
      b.next.push_back(next[r]);
      b.next_negative.push_back(next[r] != 0 ? sample_negative(seen[e.user], n, rng) : 0);
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Batch losses.
// ---------------------------------------------------------------------------

template <typename T>
T future_phase_loss(const Model<T>& model, const ModelParams<T>& params, const Batch& batch,
                    ModelParams<T>* grad, Rng& rng, bool training) {
  const Index L = model.length();
  const auto& enc = model.encoder();
  std::unique_ptr<typename SequenceEncoder<T>::Cache> cache;
  const Matrix<T> r = enc.forward(batch.global, params.shared, params.future, rng, training,
                                  grad ? &cache : nullptr);
  Matrix<T> dr;
  if (grad) dr = Matrix<T>::Zero(r.rows(), r.cols());
  const T scale = T(1) / static_cast<T>(batch.size);
  T total = 0;
  for (Index b = 0; b < batch.size; ++b) {
    const std::span<const ItemId> next(batch.next.data() + b * L, static_cast<std::size_t>(L));
    const std::span<const ItemId> neg(batch.next_negative.data() + b * L, static_cast<std::size_t>(L));
    total += future_loss<T>(r, b * L, next, neg, params.shared, grad ? &dr : nullptr,
                            grad ? &grad->shared : nullptr, scale);
  }
  if (grad) enc.backward(dr, *cache, params.shared, params.future, grad->shared, grad->future);
  return total * scale;
}

template <typename T>
LossParts<T> past_phase_loss(const Model<T>& model, const ModelParams<T>& params,
                             const Embeddings<T>& future_shared, const Batch& batch, double beta,
                             ModelParams<T>* grad, Rng& rng, bool training) {
  const Index L = model.length();
  const auto& enc = model.encoder();
  const auto& gcfg = model.config().guiding;
  std::unique_ptr<typename SequenceEncoder<T>::Cache> cache;
  const Matrix<T> q = enc.forward(batch.history, params.shared, params.past, rng, training,
                                  grad ? &cache : nullptr);
  bool guided = beta > 0.0 && !batch.global.empty();
  Matrix<T> r;
  if (guided) {
    Rng unused(0);
    r = enc.forward(batch.global, future_shared, params.future, unused, false, nullptr);
  }
  Matrix<T> dq;
  if (grad) dq = Matrix<T>::Zero(q.rows(), q.cols());
  const T scale = T(1) / static_cast<T>(batch.size);
  LossParts<T> out;
  RowVector<T> drow(q.cols());
  std::vector<GuidedRow> rows;
  for (Index b = 0; b < batch.size; ++b) {
    const Index last = b * L + L - 1;
    drow.setZero();
    out.past += past_loss<T>(q.row(last), batch.positive[b], batch.negative[b], params.shared,
                             grad ? &drow : nullptr, grad ? &grad->shared : nullptr, scale);
    if (guided && !batch.guided[b].empty()) {
      rows = batch.guided[b];
      for (auto& g : rows) g.row += b * L;
      out.guide += guiding_loss<T>(q.row(last), r, rows, gcfg, grad ? &drow : nullptr, nullptr,
                                   static_cast<T>(beta) * scale);
    }
    if (grad) dq.row(last) = drow;
  }
  if (grad) enc.backward(dq, *cache, params.shared, params.past, grad->shared, grad->past);
  out.past *= scale;
  out.guide *= scale;
  return out;
}

template <typename T>
LossParts<T> joint_loss(const Model<T>& model, const ModelParams<T>& params, const Batch& batch,
                        double beta, double future_weight, ModelParams<T>* grad, Rng& rng,
                        bool training) {
  const Index L = model.length();
  const auto& enc = model.encoder();
  const auto& gcfg = model.config().guiding;
  std::unique_ptr<typename SequenceEncoder<T>::Cache> qcache, rcache;
  const Matrix<T> q = enc.forward(batch.history, params.shared, params.past, rng, training,
                                  grad ? &qcache : nullptr);
  const Matrix<T> r = enc.forward(batch.global, params.shared, params.future, rng, training,
                                  grad ? &rcache : nullptr);
  Matrix<T> dq, dr;
  if (grad) {
    dq = Matrix<T>::Zero(q.rows(), q.cols());
    dr = Matrix<T>::Zero(r.rows(), r.cols());
  }
  const T scale = T(1) / static_cast<T>(batch.size);
  const T wf = static_cast<T>(future_weight);
  LossParts<T> out;
  RowVector<T> drow(q.cols());
  std::vector<GuidedRow> rows;
  for (Index b = 0; b < batch.size; ++b) {
    const Index last = b * L + L - 1;
    drow.setZero();
    out.past += past_loss<T>(q.row(last), batch.positive[b], batch.negative[b], params.shared,
                             grad ? &drow : nullptr, grad ? &grad->shared : nullptr, scale);
    if (wf > T(0)) {
      const std::span<const ItemId> next(batch.next.data() + b * L, static_cast<std::size_t>(L));
      const std::span<const ItemId> neg(batch.next_negative.data() + b * L,
                                        static_cast<std::size_t>(L));
      out.future += future_loss<T>(r, b * L, next, neg, params.shared, grad ? &dr : nullptr,
                                   grad ? &grad->shared : nullptr, wf * scale);
    }
    if (beta > 0.0 && !batch.guided[b].empty()) {
      rows = batch.guided[b];
      for (auto& g : rows) g.row += b * L;
      out.guide += guiding_loss<T>(q.row(last), r, rows, gcfg, grad ? &drow : nullptr,
                                   grad ? &dr : nullptr, static_cast<T>(beta) * scale);
    }
    if (grad) dq.row(last) = drow;
  }
  if (grad) {
    enc.backward(dq, *qcache, params.shared, params.past, grad->shared, grad->past);
    enc.backward(dr, *rcache, params.shared, params.future, grad->shared, grad->future);
  }
  out.past *= scale;
  out.future *= scale;
  out.guide *= scale;
  return out;
}

// ---------------------------------------------------------------------------
// Trainer.
// ---------------------------------------------------------------------------

template <typename T>
Trainer<T>::Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                    const SplitDataset& split)
    : model_(model_cfg), cfg_(train_cfg), split_(split) {
  keep_large_allocations();
  model_cfg.validate();
  cfg_.validate();
  if (model_cfg.encoder.num_items != split.train.num_items) {
    throw ConfigError("model item count does not match the dataset");
  }
  seen_.reserve(static_cast<std::size_t>(split.train.num_users));
  for (const auto& s : split.train.sequences) seen_.emplace_back(s);
  params_ = init_model_params<T>(model_cfg, cfg_.seed);
}

template <typename T>
void Trainer<T>::adam(AdamState<T>& state, double lr, bool include_past, bool include_future,
                      ModelParams<T>& grad) {
  std::vector<Matrix<T>*> ps;
  std::vector<const Matrix<T>*> gs;
  for_each_model_block(
      [&](const std::string&, ParamGroup group, Matrix<T>& p, Matrix<T>& g) {
        if (group == ParamGroup::past && !include_past) return;
        if (group == ParamGroup::future && !include_future) return;
        ps.push_back(&p);
        gs.push_back(&g);
      },
      params_, grad);
  AdamOptions opts;
  opts.lr = lr;
  adam_step<T>(ps, gs, state, opts);
}

template <typename T>
double Trainer<T>::run_future_phase(std::span<const Example> examples, Index epoch) {
  double total = 0;
  Index bi = 0;
  for (std::size_t lo = 0; lo < examples.size(); lo += static_cast<std::size_t>(cfg_.batch), ++bi) {
    const auto ex = examples.subspan(lo, std::min<std::size_t>(cfg_.batch, examples.size() - lo));
    const auto e = static_cast<std::uint64_t>(epoch);
    const auto b = static_cast<std::uint64_t>(bi);
    Rng neg_rng = derive_rng(cfg_.seed, {kTagNegatives, e, 1, b});
    Rng drop_rng = derive_rng(cfg_.seed, {kTagDropout, e, 1, b});
    const Batch batch = make_batch(split_.train, seen_, ex, model_.config(), neg_rng, true);
    ModelParams<T> grad = zeros_like(params_);
    const T loss = future_phase_loss<T>(model_, params_, batch, &grad, drop_rng, true);
    check_finite(loss, "future", epoch, bi);
    adam(adam_future_, cfg_.lr1, false, true, grad);
    total += static_cast<double>(loss) * static_cast<double>(ex.size());
  }
  return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

template <typename T>
LossParts<double> Trainer<T>::run_past_phase(std::span<const Example> examples, Index epoch) {
  LossParts<double> total;
  const double beta = cfg_.use_future && !cfg_.future_only ? model_.config().guiding.beta : 0.0;
  const bool with_future = beta > 0.0;
  const Embeddings<T> snapshot = with_future ? params_.shared : Embeddings<T>{};
  Index bi = 0;
  for (std::size_t lo = 0; lo < examples.size(); lo += static_cast<std::size_t>(cfg_.batch), ++bi) {
    const auto ex = examples.subspan(lo, std::min<std::size_t>(cfg_.batch, examples.size() - lo));
    const auto e = static_cast<std::uint64_t>(epoch);
    const auto b = static_cast<std::uint64_t>(bi);
    Rng neg_rng = derive_rng(cfg_.seed, {kTagNegatives, e, 2, b});
    Rng drop_rng = derive_rng(cfg_.seed, {kTagDropout, e, 2, b});
    const Batch batch = make_batch(split_.train, seen_, ex, model_.config(), neg_rng, with_future);
    ModelParams<T> grad = zeros_like(params_);
    const auto loss = past_phase_loss<T>(model_, params_, snapshot, batch, beta, &grad, drop_rng, true);
    check_finite(loss.past + static_cast<T>(beta) * loss.guide, "past", epoch, bi);
    adam(adam_past_, cfg_.lr2, true, false, grad);
    const double w = static_cast<double>(ex.size());
    total.past += static_cast<double>(loss.past) * w;
    total.guide += static_cast<double>(loss.guide) * w;
  }
  if (!examples.empty()) {
    total.past /= static_cast<double>(examples.size());
    total.guide /= static_cast<double>(examples.size());
  }
  return total;
}

template <typename T>
LossParts<double> Trainer<T>::run_joint(std::span<const Example> examples, Index epoch) {
  LossParts<double> total;
  const double beta = cfg_.use_future ? model_.config().guiding.beta : 0.0;
  Index bi = 0;
  for (std::size_t lo = 0; lo < examples.size(); lo += static_cast<std::size_t>(cfg_.batch), ++bi) {
    const auto ex = examples.subspan(lo, std::min<std::size_t>(cfg_.batch, examples.size() - lo));
    const auto e = static_cast<std::uint64_t>(epoch);
    const auto b = static_cast<std::uint64_t>(bi);
    Rng neg_rng = derive_rng(cfg_.seed, {kTagNegatives, e, 3, b});
    Rng drop_rng = derive_rng(cfg_.seed, {kTagDropout, e, 3, b});
    const Batch batch = make_batch(split_.train, seen_, ex, model_.config(), neg_rng, true);
    ModelParams<T> grad = zeros_like(params_);
    const auto loss = joint_loss<T>(model_, params_, batch, beta, cfg_.future_loss_weight, &grad,
                                    drop_rng, true);
    check_finite(loss.past + loss.future + loss.guide, "joint", epoch, bi);
    adam(adam_joint_, cfg_.lr2, true, true, grad);
    const double w = static_cast<double>(ex.size());
    total.past += static_cast<double>(loss.past) * w;
    total.future += static_cast<double>(loss.future) * w;
    total.guide += static_cast<double>(loss.guide) * w;
  }
  if (!examples.empty()) {
    const double m = static_cast<double>(examples.size());
    total.past /= m;
    total.future /= m;
    total.guide /= m;
  }
  return total;
}

template <typename T>
EpochRecord Trainer<T>::run_epoch(Index epoch) {
  const auto start = Clock::now();
  EpochRecord rec;
  rec.epoch = epoch;
  const auto& train = split_.train;
  if (cfg_.mode == TrainMode::joint) {
    const auto ex = epoch_examples(train, cfg_.targets_per_user, cfg_.seed, epoch, 3);
    const auto l = run_joint(ex, epoch);
    rec.loss_past = l.past;
    rec.loss_future = l.future;
    rec.loss_guide = l.guide;
  } else {
    if (cfg_.use_future || cfg_.future_only) {
      const auto ex = epoch_examples(train, cfg_.targets_per_user, cfg_.seed, epoch, 1);
      rec.loss_future = run_future_phase(ex, epoch);
    }
    if (!cfg_.future_only) {
      const auto ex = epoch_examples(train, cfg_.targets_per_user, cfg_.seed, epoch, 2);
      const auto l = run_past_phase(ex, epoch);
      rec.loss_past = l.past;
      rec.loss_guide = l.guide;
    }
  }
  rec.seconds = seconds_since(start);
  return rec;
}

template <typename T>
MetricsReport Trainer<T>::validate() const {
  return evaluate(model_, params_, split_, cfg_.val_protocol, EvalTarget::valid, cfg_.eval_seed);
}

template <typename T>
TrainLog Trainer<T>::train(const std::function<void(const EpochRecord&)>& on_epoch) {
  TrainLog log;
  const auto start = Clock::now();
  ModelParams<T> best = params_;
  log.best_val_mrr = -1.0;
  for (Index epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    EpochRecord rec = run_epoch(epoch);
    const auto val = validate();
    rec.val_mrr = val.mrr;
    rec.val_hr10 = val.hr10;
    rec.val_ndcg10 = val.ndcg10;
    log.epochs.push_back(rec);
    if (cfg_.verbose) {
      std::cerr << "epoch " << epoch << "  L_p " << std::setprecision(5) << rec.loss_past
                << "  L_f " << rec.loss_future << "  L_g " << rec.loss_guide << "  val MRR "
                << rec.val_mrr << "  HR@10 " << rec.val_hr10 << "  (" << std::setprecision(3)
                << rec.seconds << " s)\n";
    }
    if (on_epoch) on_epoch(rec);
    if (rec.val_mrr > log.best_val_mrr) {
      log.best_val_mrr = rec.val_mrr;
      log.best_epoch = epoch;
      best = params_;
    } else if (cfg_.patience > 0 && epoch - log.best_epoch >= cfg_.patience) {
      log.stopped_early = true;
      break;
    }
    if (cfg_.time_budget > 0.0 && seconds_since(start) >= cfg_.time_budget) {
      log.hit_time_budget = epoch < cfg_.epochs;
      break;
    }
  }
  params_ = std::move(best);
  return log;
}

void write_trainlog_csv(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,L_p,L_f,L_g,val_MRR,val_HR10,val_NDCG10,seconds\n";
  out << std::setprecision(9);
  for (const auto& r : log.epochs) {
    out << r.epoch << ',' << r.loss_past << ',' << r.loss_future << ',' << r.loss_guide << ','
        << r.val_mrr << ',' << r.val_hr10 << ',' << r.val_ndcg10 << ',' << r.seconds << '\n';
  }
}

// ---------------------------------------------------------------------------
// Ablations.
// ---------------------------------------------------------------------------

const std::vector<AblationSpec>& ablation_catalog() {
  static const std::vector<AblationSpec> catalog = {
      {"no_filter", 1, "without the noise filtering layers"},
      {"learnable_filter", 2, "learnable complex filter instead of the low-pass mask"},
      {"no_future", 3, "without the future encoder (past encoder only)"},
      {"gamma_zero", 4, "no attenuation of discrepancies (gamma = 0)"},
      {"joint", 5, "joint training of both encoders instead of two phases"},
      {"js", 6, "Jensen-Shannon divergence as the discrepancy"},
      {"euclidean", 7, "Euclidean distance as the discrepancy"},
      {"cosine", 8, "cosine distance as the discrepancy"},
      {"future_only", 9, "future encoder alone, used for prediction"},
      {"r2l", 10, "future encoder reads the global window right to left"},
      {"full", 11, "full model (KL divergence, left to right)"},
  };
  return catalog;
}

void apply_ablation(const std::string& name, ModelConfig& m, TrainConfig& t) {
  if (name == "no_filter") {
    m.encoder.use_filter = false;
  } else if (name == "learnable_filter") {
    m.encoder.learnable_filter = true;
  } else if (name == "no_future") {
    t.use_future = false;
  } else if (name == "gamma_zero") {
    m.guiding.gamma = 0.0;
  } else if (name == "joint") {
    t.mode = TrainMode::joint;
  } else if (name == "js") {
    m.guiding.kind = Discrepancy::js;
  } else if (name == "euclidean") {
    m.guiding.kind = Discrepancy::euclidean;
  } else if (name == "cosine") {
    m.guiding.kind = Discrepancy::cosine;
  } else if (name == "future_only") {
    t.future_only = true;
    m.inference = InferenceEncoder::future;
  } else if (name == "r2l") {
    m.r2l_future = true;
  } else if (name != "full") {
    throw ConfigError("unknown ablation '" + name + "' (see ablate --list)");
  }
}

#define ORACLE4REC_INSTANTIATE(T)                                                               \
  template T future_phase_loss<T>(const Model<T>&, const ModelParams<T>&, const Batch&,         \
                                  ModelParams<T>*, Rng&, bool);                                 \
  template LossParts<T> past_phase_loss<T>(const Model<T>&, const ModelParams<T>&,              \
                                           const Embeddings<T>&, const Batch&, double,          \
                                           ModelParams<T>*, Rng&, bool);                        \
  template LossParts<T> joint_loss<T>(const Model<T>&, const ModelParams<T>&, const Batch&,     \
                                      double, double, ModelParams<T>*, Rng&, bool);             \
  template class Trainer<T>;

ORACLE4REC_INSTANTIATE(float)
ORACLE4REC_INSTANTIATE(double)

#undef ORACLE4REC_INSTANTIATE

}  // namespace oracle4rec
