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

#include "oracle4rec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

namespace oracle4rec {

std::string to_string(Protocol p) { return p == Protocol::sampled99 ? "sampled99" : "full"; }

Protocol parse_protocol(const std::string& name) {
  if (name == "sampled99") return Protocol::sampled99;
  if (name == "full") return Protocol::full;
  throw ConfigError("unknown protocol '" + name + "' (sampled99, full)");
}

template <typename T>
std::vector<T> score_all(const Eigen::Ref<const RowVector<T>>& pred_row, const Embeddings<T>& emb) {
  const Index n = emb.items.rows() - 1;
  std::vector<T> scores(static_cast<std::size_t>(n));
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> out(scores.data(), n);
  out.noalias() = emb.items.bottomRows(n) * pred_row.transpose();
  return scores;
}

template <typename T>
Index rank_of_truth(std::span<const T> scores, ItemId truth, std::span<const ItemId> candidates) {
  if (truth < 1 || static_cast<std::size_t>(truth) > scores.size() ||
      std::find(candidates.begin(), candidates.end(), truth) == candidates.end()) {
    throw ProtocolError("rank_of_truth: item " + std::to_string(truth) +
                        " is not among the candidates");
  }
  const T s = scores[truth - 1];
  Index rank = 1;
  for (const ItemId c : candidates) {
    if (c == truth) continue;
    const T v = scores[c - 1];
    if (v > s || (v == s && c < truth)) ++rank;
  }
  return rank;
}

double hr_at_k(Index rank, Index k) { return rank <= k ? 1.0 : 0.0; }

double ndcg_at_k(Index rank, Index k) {
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

double mrr(Index rank) { return 1.0 / static_cast<double>(rank); }

MetricsReport summarize_ranks(std::vector<Index> ranks, Protocol protocol, EvalTarget target,
                              std::uint64_t seed) {
  MetricsReport r;
  r.protocol = protocol;
  r.target = target;
  r.seed = seed;
  r.users = static_cast<Index>(ranks.size());
  for (const Index k : ranks) {
    r.hr1 += hr_at_k(k, 1);
    r.hr5 += hr_at_k(k, 5);
    r.hr10 += hr_at_k(k, 10);
    r.ndcg1 += ndcg_at_k(k, 1);
    r.ndcg5 += ndcg_at_k(k, 5);
    r.ndcg10 += ndcg_at_k(k, 10);
    r.mrr += mrr(k);
  }
  if (r.users > 0) {
    const double m = static_cast<double>(r.users);
    for (double* v : {&r.hr1, &r.hr5, &r.hr10, &r.ndcg1, &r.ndcg5, &r.ndcg10, &r.mrr}) *v /= m;
  }
  r.ranks = std::move(ranks);
  return r;
}

std::vector<ItemId> sample_eval_negatives(const ItemSet& interacted, Index num_items,
                                          std::uint64_t seed, Index user, Index count) {
  const Index available = num_items - static_cast<Index>(interacted.size());
  std::vector<ItemId> out;
  if (available <= count) {
    for (ItemId v = 1; v <= num_items; ++v)
      if (!interacted.contains(v)) out.push_back(v);
    return out;
  }
  Rng rng = derive_rng(seed, {0x4556u, static_cast<std::uint64_t>(user)});
  std::vector<ItemId> chosen;
  while (static_cast<Index>(out.size()) < count) {
    const ItemId v = sample_negative(interacted, num_items, rng);
    const auto it = std::lower_bound(chosen.begin(), chosen.end(), v);
    if (it != chosen.end() && *it == v) continue;
    chosen.insert(it, v);
    out.push_back(v);
  }
  return out;
}

std::vector<ItemId> eval_history(const SplitDataset& split, Index user, EvalTarget target,
                                 Index length) {
  const auto& s = split.full[user];
  const Index t = static_cast<Index>(s.size()) - (target == EvalTarget::valid ? 1 : 0);
  return build_history(s, t, length);
}

Index eval_threads() {
  if (const char* env = std::getenv("ORACLE4REC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<Index>(v);
  }
  return 1;
}

template <typename T>
MetricsReport evaluate(const Model<T>& model, const ModelParams<T>& params,
                       const SplitDataset& split, Protocol protocol, EvalTarget target,
                       std::uint64_t seed, Index threads) {
  const Index users = split.train.num_users;
  const Index n = split.train.num_items;
  const Index L = model.length();
  if (threads <= 0) threads = eval_threads();
  constexpr Index kChunk = 128;
  const Index chunks = (users + kChunk - 1) / kChunk;
  std::vector<Index> ranks(static_cast<std::size_t>(users), 0);

  auto work = [&](Index first_chunk, Index stride) {
    for (Index c = first_chunk; c < chunks; c += stride) {
      const Index lo = c * kChunk;
      const Index hi = std::min(users, lo + kChunk);
      std::vector<ItemId> windows;
      windows.reserve(static_cast<std::size_t>((hi - lo) * L));
      for (Index u = lo; u < hi; ++u) {
        const auto h = eval_history(split, u, target, L);
        windows.insert(windows.end(), h.begin(), h.end());
      }
      const Matrix<T> rows = model.predict(params, windows);
      const Matrix<T> scores = rows * params.shared.items.bottomRows(n).transpose();
      for (Index u = lo; u < hi; ++u) {
        const ItemId truth = target == EvalTarget::valid ? split.valid_target[u] : split.test_target[u];
        std::span<const T> s(scores.row(u - lo).data(), static_cast<std::size_t>(n));
        std::vector<ItemId> candidates;
        if (protocol == Protocol::sampled99) {
          candidates = sample_eval_negatives(ItemSet(split.full[u]), n, seed, u);
          candidates.push_back(truth);
        } else {
          candidates.resize(static_cast<std::size_t>(n));
          for (Index v = 0; v < n; ++v) candidates[v] = static_cast<ItemId>(v + 1);
        }
        ranks[u] = rank_of_truth<T>(s, truth, candidates);
      }
    }
  };
  threads = std::max<Index>(1, std::min(threads, chunks));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (Index t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  return summarize_ranks(std::move(ranks), protocol, target, seed);
}

// ---------------------------------------------------------------------------
// Preference analysis.
// ---------------------------------------------------------------------------

std::vector<double> preference_distribution(std::span<const ItemId> items,
                                            const std::vector<std::vector<std::int32_t>>& item_categories,
                                            Index num_categories) {
  std::vector<double> counts(static_cast<std::size_t>(num_categories), 0.0);
  double total = 0.0;
  for (const ItemId v : items) {
    if (v < 0 || static_cast<std::size_t>(v) >= item_categories.size()) continue;
    for (const auto c : item_categories[v]) {
      if (c < 0 || c >= num_categories) throw AnalysisError("category index out of range");
      counts[c] += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) throw AnalysisError("preference_distribution: no categorized items");
  for (auto& c : counts) c /= total;
  return counts;
}

double preference_kl(const std::vector<std::vector<double>>& real,
                     const std::vector<std::vector<double>>& predicted, double eps) {
  if (real.size() != predicted.size()) throw AnalysisError("preference_kl: user sets differ");
  if (real.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t u = 0; u < real.size(); ++u) {
    if (real[u].size() != predicted[u].size()) throw AnalysisError("preference_kl: category mismatch");
    for (std::size_t c = 0; c < real[u].size(); ++c) {
      const double p = real[u][c];
      if (p > 0.0) total += p * std::log(p / std::max(predicted[u][c], eps));
    }
  }
  return total / static_cast<double>(real.size());
}

template <typename T>
std::vector<std::vector<ItemId>> top_k_items(const Model<T>& model, const ModelParams<T>& params,
                                             const SplitDataset& split, Index k) {
  const Index users = split.train.num_users;
  const Index n = split.train.num_items;
  const Index L = model.length();
  std::vector<std::vector<ItemId>> out(static_cast<std::size_t>(users));
  constexpr Index kChunk = 128;
  for (Index lo = 0; lo < users; lo += kChunk) {
    const Index hi = std::min(users, lo + kChunk);
    std::vector<ItemId> windows;
    for (Index u = lo; u < hi; ++u) {
      const auto h = eval_history(split, u, EvalTarget::test, L);
      windows.insert(windows.end(), h.begin(), h.end());
    }
    const Matrix<T> rows = model.predict(params, windows);
    const Matrix<T> scores = rows * params.shared.items.bottomRows(n).transpose();
    for (Index u = lo; u < hi; ++u) {
      const auto& full = split.full[u];
      const ItemSet seen(std::span<const ItemId>(full.data(), full.size() - 1));
      std::vector<ItemId> cands;
      for (ItemId v = 1; v <= n; ++v)
        if (!seen.contains(v)) cands.push_back(v);
      const Index take = std::min<Index>(k, static_cast<Index>(cands.size()));
      const auto row = scores.row(u - lo);
      std::partial_sort(cands.begin(), cands.begin() + take, cands.end(),
                        [&](ItemId a, ItemId b) {
                          const T sa = row(a - 1), sb = row(b - 1);
                          return sa > sb || (sa == sb && a < b);
                        });
      cands.resize(static_cast<std::size_t>(take));
      out[u] = std::move(cands);
    }
  }
  return out;
}

PreferenceReport compare_preferences(const SplitDataset& split,
                                     const std::vector<std::vector<ItemId>>& top_a,
                                     const std::vector<std::vector<ItemId>>& top_b) {
  const auto& ds = split.train;
  if (!ds.has_categories()) throw AnalysisError("dataset carries no category data");
  const Index C = static_cast<Index>(ds.category_names.size());
  PreferenceReport r;
  for (Index u = 0; u < ds.num_users; ++u) {
    const std::vector<ItemId> held = {split.valid_target[u], split.test_target[u]};
    try {
      auto real = preference_distribution(held, ds.item_categories, C);
      auto a = preference_distribution(top_a[u], ds.item_categories, C);
      auto b = preference_distribution(top_b[u], ds.item_categories, C);
      r.real.push_back(std::move(real));
      r.pred_a.push_back(std::move(a));
      r.pred_b.push_back(std::move(b));
      r.user_index.push_back(u);
    } catch (const AnalysisError&) {
      continue;  // user without categorized items on one side
    }
  }
  if (r.real.empty()) throw AnalysisError("no user has categorized items");
  r.users = static_cast<Index>(r.real.size());
  r.kl_a = preference_kl(r.real, r.pred_a);
  r.kl_b = preference_kl(r.real, r.pred_b);
  r.relative_improvement = r.kl_b > 0.0 ? (r.kl_b - r.kl_a) / r.kl_b : 0.0;
  return r;
}

template <typename T>
PreferenceReport analyze_preferences(const Model<T>& model_a, const ModelParams<T>& params_a,
                                     const Model<T>& model_b, const ModelParams<T>& params_b,
                                     const SplitDataset& split, Index k) {
  if (!split.train.has_categories()) throw AnalysisError("dataset carries no category data");
  return compare_preferences(split, top_k_items(model_a, params_a, split, k),
                             top_k_items(model_b, params_b, split, k));
}

void write_prefdist_csv(const PreferenceReport& report, const SplitDataset& split,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "user,category,real_p,model_a_p,model_b_p\n";
  const auto& ds = split.train;
  const Index C = static_cast<Index>(ds.category_names.size());
  for (std::size_t row = 0; row < report.real.size(); ++row) {
    const Index u = report.user_index[row];
    for (Index c = 0; c < C; ++c) {
      out << ds.user_ids[u] << ',' << ds.category_names[c] << ',' << report.real[row][c] << ','
          << report.pred_a[row][c] << ',' << report.pred_b[row][c] << '\n';
    }
  }
}

std::string format_relative(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.1f%%", 100.0 * fraction);
  return buf;
}

#define ORACLE4REC_INSTANTIATE(T)                                                              \
  template std::vector<T> score_all<T>(const Eigen::Ref<const RowVector<T>>&,                  \
                                       const Embeddings<T>&);                                  \
  template Index rank_of_truth<T>(std::span<const T>, ItemId, std::span<const ItemId>);        \
  template MetricsReport evaluate<T>(const Model<T>&, const ModelParams<T>&,                   \
                                     const SplitDataset&, Protocol, EvalTarget, std::uint64_t, \
                                     Index);                                                   \
  template std::vector<std::vector<ItemId>> top_k_items<T>(const Model<T>&,                    \
                                                           const ModelParams<T>&,              \
                                                           const SplitDataset&, Index);        \
  template PreferenceReport analyze_preferences<T>(const Model<T>&, const ModelParams<T>&,     \
                                                   const Model<T>&, const ModelParams<T>&,     \
                                                   const SplitDataset&, Index);

ORACLE4REC_INSTANTIATE(float)
ORACLE4REC_INSTANTIATE(double)

#undef ORACLE4REC_INSTANTIATE

}  // namespace oracle4rec
