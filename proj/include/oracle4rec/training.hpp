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

// Two-phase training (future encoder first, then the guided past encoder),
// the joint-training ablation, batching over (user, target) examples and
// per-epoch logging.

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oracle4rec/eval.hpp"
#include "oracle4rec/model.hpp"
#include "oracle4rec/numerics.hpp"
#include "oracle4rec/seqdata.hpp"

namespace oracle4rec {

enum class TrainMode { two_phase, joint };
enum class Precision { float32, float64 };

std::string to_string(TrainMode m);
TrainMode parse_train_mode(const std::string& name);

struct TrainConfig {
  Index epochs = 200;
  Index batch = 256;
  double lr1 = 1e-3;  // future phase
  double lr2 = 1e-3;  // past phase (and joint mode)
  /// Targets sampled per user each epoch; 0 uses every target.
  Index targets_per_user = 0;
  TrainMode mode = TrainMode::two_phase;
  /// false: no future encoder at all (phase 1 skipped, guiding off).
  bool use_future = true;
  /// Train only the future encoder and predict with it.
  bool future_only = false;
  /// Weight of the future loss in joint mode.
  double future_loss_weight = 1.0;
  std::uint64_t seed = 1;
  /// Early stopping on validation MRR; 0 disables it.
  Index patience = 20;
  Protocol val_protocol = Protocol::sampled99;
  std::uint64_t eval_seed = 1;
  Precision precision = Precision::float32;
  /// Wall-clock cap in seconds for the whole run; 0 means none.
  double time_budget = 0.0;
  bool verbose = false;

  void validate() const;
};

/// One training example: user index and 1-based target position t in
/// [2, |training sequence|].
struct Example {
  Index user = 0;
  Index target = 0;
};

/// Deterministic in (seed, epoch, phase): per-user target subsampling, then
/// a shuffle.
std::vector<Example> epoch_examples(const Dataset& train, Index targets_per_user,
                                    std::uint64_t seed, Index epoch, Index phase);

/// Inputs for one batch. Every field is laid out example by example.
struct Batch {
  Index size = 0;
  std::vector<ItemId> history;        // B * L past-encoder windows
  std::vector<ItemId> positive;       // B targets
  std::vector<ItemId> negative;       // B sampled negatives
  std::vector<ItemId> global;         // B * L future-encoder windows (reversed for R2L)
  std::vector<ItemId> next;           // B * L next-item targets per future row (0 = skip)
  std::vector<ItemId> next_negative;  // B * L negatives per future row
  std::vector<std::vector<GuidedRow>> guided;  // rows of the example's own block
};

/// Negatives are drawn outside the user's training sequence.
Batch make_batch(const Dataset& train, std::span<const ItemSet> seen, std::span<const Example> ex,
                 const ModelConfig& cfg, Rng& rng, bool with_future);

template <typename T>
struct LossParts {
  T past = 0;
  T future = 0;
  T guide = 0;
};

/// Mean future loss over the batch; gradients into grad->future / shared.
template <typename T>
T future_phase_loss(const Model<T>& model, const ModelParams<T>& params, const Batch& batch,
                    ModelParams<T>* grad, Rng& rng, bool training);

/// Mean of L_p + beta L_g over the batch with R produced in inference mode from
/// `future_shared` (the embeddings as they were when the phase started) and the
/// current future parameters. Gradients flow into grad->past / shared only.
/// beta = 0 (or no guided rows) skips the future forward entirely.
template <typename T>
LossParts<T> past_phase_loss(const Model<T>& model, const ModelParams<T>& params,
                             const Embeddings<T>& future_shared, const Batch& batch, double beta,
                             ModelParams<T>* grad, Rng& rng, bool training);

/// Mean of L_p + w_f L_f + beta L_g with gradients through both encoders.
template <typename T>
LossParts<T> joint_loss(const Model<T>& model, const ModelParams<T>& params, const Batch& batch,
                        double beta, double future_weight, ModelParams<T>* grad, Rng& rng,
                        bool training);

struct EpochRecord {
  Index epoch = 0;
  double loss_past = 0;
  double loss_future = 0;
  double loss_guide = 0;
  double seconds = 0;
  double val_mrr = 0;
  double val_hr10 = 0;
  double val_ndcg10 = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  Index best_epoch = 0;
  double best_val_mrr = 0;
  bool stopped_early = false;
  bool hit_time_budget = false;
};

void write_trainlog_csv(const TrainLog& log, const std::filesystem::path& path);

template <typename T>
class Trainer {
 public:
  Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const SplitDataset& split);

  const Model<T>& model() const { return model_; }
  ModelParams<T>& params() { return params_; }
  const ModelParams<T>& params() const { return params_; }
  const ModelConfig& model_config() const { return model_.config(); }

  /// Phase 1 over `examples`; returns the mean future loss.
  double run_future_phase(std::span<const Example> examples, Index epoch);
  /// Phase 2 over `examples`; returns mean (past, guide) losses.
  LossParts<double> run_past_phase(std::span<const Example> examples, Index epoch);
  /// One joint-mode pass.
  LossParts<double> run_joint(std::span<const Example> examples, Index epoch);

  /// One epoch in the configured mode (no validation).
  EpochRecord run_epoch(Index epoch);

  /// Full run with validation after every epoch and early stopping; the best
  /// parameters by validation MRR are restored at the end.
  TrainLog train(const std::function<void(const EpochRecord&)>& on_epoch = {});

  MetricsReport validate() const;

 private:
  void adam(AdamState<T>& state, double lr, bool include_past, bool include_future,
            ModelParams<T>& grad);

  Model<T> model_;
  TrainConfig cfg_;
  const SplitDataset& split_;
  std::vector<ItemSet> seen_;
  ModelParams<T> params_;
  AdamState<T> adam_future_, adam_past_, adam_joint_;
};

/// Applies the switches of a named ablation to the configurations.
struct AblationSpec {
  std::string name;
  int row;  // ablation table row, 11 is the full model
  std::string description;
};

const std::vector<AblationSpec>& ablation_catalog();
void apply_ablation(const std::string& name, ModelConfig& model_cfg, TrainConfig& train_cfg);

}  // namespace oracle4rec
