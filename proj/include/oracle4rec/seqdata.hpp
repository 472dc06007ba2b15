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

// Interaction logs, k-core filtering, leave-one-out splits and the fixed
// length windows the encoders consume.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "oracle4rec/common.hpp"

namespace oracle4rec {

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
  std::vector<std::string> categories;
};

/// Reads `user<TAB>item<TAB>timestamp[<TAB>cat1|cat2|...]` lines.
std::vector<Interaction> load_interactions(const std::filesystem::path& path);
std::vector<Interaction> parse_interactions(std::istream& in, const std::string& source = "<input>");

/// Per-user item sequences in chronological order. Item index 0 is the
/// padding item and never occurs inside a sequence.
struct Dataset {
  std::vector<std::vector<ItemId>> sequences;  // indexed by user
  Index num_users = 0;
  Index num_items = 0;
  std::vector<std::string> user_ids;  // internal -> external
  std::vector<std::string> item_ids;  // size n + 1, entry 0 is padding
  std::vector<std::string> category_names;
  std::vector<std::vector<std::int32_t>> item_categories;  // size n + 1
  /// Synthetic data only: latent favourite category per user per step.
  std::vector<std::vector<std::int32_t>> preference_trajectory;

  std::size_t num_interactions() const;
  double density() const;
  bool has_categories() const;
  /// Throws DataError when an invariant is broken.
  void validate(Index min_length = 1) const;
};

Dataset build_dataset(const std::vector<Interaction>& interactions, int min_count = 5);

/// Flattens a dataset back into interactions (timestamp = position) so it can
/// be fed through build_dataset again.
std::vector<Interaction> to_interactions(const Dataset& dataset);

struct SplitDataset {
  Dataset train;                         // sequences without their last two items
  std::vector<ItemId> valid_target;      // penultimate item per user
  std::vector<ItemId> test_target;       // last item per user
  std::vector<std::vector<ItemId>> full; // original sequences
};

SplitDataset split_leave_one_out(const Dataset& dataset);

/// Items v_{t-L} .. v_{t-1}, left padded with 0. `t` is 1-based and may be
/// |seq| + 1 (history for the item after the sequence).
std::vector<ItemId> build_history(std::span<const ItemId> seq, Index t, Index length);

struct GlobalWindow {
  std::vector<ItemId> items;  // length L, left padded
  Index end = 0;              // 1-based position of the last real item
  Index available_future = 0; // real items among positions t .. t+P
};

/// Window of length L ending at min(t + P, |seq|), left padded with 0.
GlobalWindow build_global(std::span<const ItemId> seq, Index t, Index length, Index future);

struct SequencePair {
  std::vector<ItemId> history;
  std::vector<ItemId> global;
  Index target_index = 0;
  Index available_future = 0;
};

SequencePair make_sequence_pair(std::span<const ItemId> seq, Index t, Index length,
                                Index future);

/// Sorted set of items a user interacted with.
class ItemSet {
 public:
  ItemSet() = default;
  explicit ItemSet(std::span<const ItemId> items);
  bool contains(ItemId item) const;
  std::size_t size() const { return items_.size(); }
  std::span<const ItemId> items() const { return items_; }

 private:
  std::vector<ItemId> items_;
};

/// Uniform item in [1, n] outside `interacted`.
ItemId sample_negative(const ItemSet& interacted, Index num_items, Rng& rng);

struct DriftConfig {
  Index num_users = 200;
  Index num_items = 100;
  Index num_categories = 5;
  double drift_rate = 0.1;
  Index min_length = 20;
  Index max_length = 40;
  /// Probability that a step draws from the current favourite category.
  double focus = 0.8;
  /// Zipf exponent of item popularity inside a category.
  double popularity_skew = 1.0;
  std::uint64_t seed = 1;
};

/// Users whose favourite category advances to the next category with
/// probability `drift_rate` at every step; items are split evenly across
/// categories. The favourite trajectory is kept in preference_trajectory.
Dataset generate_synthetic_drift(const DriftConfig& config);

/// JSON dataset file (schema "oracle4rec.dataset", version 1).
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Loads either a dataset file (.json) or a raw TSV log (k-core filtered).
Dataset load_any_dataset(const std::filesystem::path& path, int min_count = 5);

}  // namespace oracle4rec
