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

// Ranking evaluation (sampled-99 and full ranking) and the per-user category
// preference analysis.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oracle4rec/model.hpp"
#include "oracle4rec/seqdata.hpp"

namespace oracle4rec {

enum class Protocol { sampled99, full };
enum class EvalTarget { valid, test };

std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& name);

/// Scores of items 1..n (entry v - 1 belongs to item v).
template <typename T>
std::vector<T> score_all(const Eigen::Ref<const RowVector<T>>& pred_row, const Embeddings<T>& emb);

/// 1 + #candidates scoring strictly higher + #equal-scored candidates with a
/// smaller item id. Throws ProtocolError if truth is not a candidate.
template <typename T>
Index rank_of_truth(std::span<const T> scores, ItemId truth, std::span<const ItemId> candidates);

double hr_at_k(Index rank, Index k);
double ndcg_at_k(Index rank, Index k);
double mrr(Index rank);

struct MetricsReport {
  Protocol protocol = Protocol::sampled99;
  EvalTarget target = EvalTarget::test;
  std::uint64_t seed = 0;
  double hr1 = 0, hr5 = 0, hr10 = 0;
  double ndcg1 = 0, ndcg5 = 0, ndcg10 = 0;
  double mrr = 0;
  Index users = 0;
  std::vector<Index> ranks;  // per evaluated user, in user order
};

/// Averages the metrics over `ranks`.
MetricsReport summarize_ranks(std::vector<Index> ranks, Protocol protocol, EvalTarget target,
                              std::uint64_t seed);

/// 99 distinct negatives (fewer if the catalogue is too small) drawn uniformly
/// from items outside `interacted`, from the user's own seeded stream.
std::vector<ItemId> sample_eval_negatives(const ItemSet& interacted, Index num_items,
                                          std::uint64_t seed, Index user, Index count = 99);

/// History window for scoring a user's validation or test item.
std::vector<ItemId> eval_history(const SplitDataset& split, Index user, EvalTarget target,
                                 Index length);

/// Worker count from ORACLE4REC_THREADS (default 1).
Index eval_threads();

template <typename T>
MetricsReport evaluate(const Model<T>& model, const ModelParams<T>& params,
                       const SplitDataset& split, Protocol protocol, EvalTarget target,
                       std::uint64_t seed, Index threads = 0);

// ---------------------------------------------------------------------------
// Preference analysis.
// ---------------------------------------------------------------------------

/// p(c) = A_c / sum A_c' over the categories of `items` (multi-category items
/// count once per category). Throws AnalysisError without categorized items.
std::vector<double> preference_distribution(std::span<const ItemId> items,
                                            const std::vector<std::vector<std::int32_t>>& item_categories,
                                            Index num_categories);

/// (1/M) sum_u sum_c p_u(c) ln(p_u(c) / max(q_u(c), eps)); 0 ln 0 = 0.
double preference_kl(const std::vector<std::vector<double>>& real,
                     const std::vector<std::vector<double>>& predicted, double eps = 1e-12);

/// Top-k items of a full ranking for each user's test history, excluding the
/// items already in that history.
template <typename T>
std::vector<std::vector<ItemId>> top_k_items(const Model<T>& model, const ModelParams<T>& params,
                                             const SplitDataset& split, Index k);

struct PreferenceReport {
  double kl_a = 0;
  double kl_b = 0;
  /// (kl_b - kl_a) / kl_b: positive when model a is closer to the real
  /// preferences than model b.
  double relative_improvement = 0;
  Index users = 0;
  std::vector<Index> user_index;  // dataset index of each analysed user
  std::vector<std::vector<double>> real, pred_a, pred_b;
};

/// Real distributions come from the held-out (validation and test) items;
/// predicted ones from each model's top-k list.
PreferenceReport compare_preferences(const SplitDataset& split,
                                     const std::vector<std::vector<ItemId>>& top_a,
                                     const std::vector<std::vector<ItemId>>& top_b);

template <typename T>
PreferenceReport analyze_preferences(const Model<T>& model_a, const ModelParams<T>& params_a,
                                     const Model<T>& model_b, const ModelParams<T>& params_b,
                                     const SplitDataset& split, Index k = 10);

/// user, category, real_p, model_a_p, model_b_p.
void write_prefdist_csv(const PreferenceReport& report, const SplitDataset& split,
                        const std::filesystem::path& path);

std::string format_relative(double fraction);

}  // namespace oracle4rec
