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

// The two-encoder model: a past encoder over history windows, a future
// encoder over global windows, one shared item / positional embedding table.

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "oracle4rec/encoder.hpp"
#include "oracle4rec/guiding.hpp"

namespace oracle4rec {

/// Which encoder produces predictions at inference time.
enum class InferenceEncoder { past, future };

struct ModelConfig {
  EncoderConfig encoder;
  GuidingConfig guiding;
  bool r2l_future = false;  // future encoder reads the global window reversed
  InferenceEncoder inference = InferenceEncoder::past;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

enum class ParamGroup { shared, past, future };

template <typename T>
struct ModelParams {
  Embeddings<T> shared;
  EncoderParams<T> past;
  EncoderParams<T> future;
};

/// f(name, group, blocks...) over every parameter block, in checkpoint order.
template <typename F, typename... P>
void for_each_model_block(F&& f, ModelParams<P>&... m) {
  for_each_block(
      "shared.", [&](const std::string& n, auto&... b) { f(n, ParamGroup::shared, b...); },
      m.shared...);
  for_each_block(
      "past.", [&](const std::string& n, auto&... b) { f(n, ParamGroup::past, b...); }, m.past...);
  for_each_block(
      "future.", [&](const std::string& n, auto&... b) { f(n, ParamGroup::future, b...); },
      m.future...);
}

template <typename T>
ModelParams<T> init_model_params(const ModelConfig& cfg, std::uint64_t seed);

template <typename T>
ModelParams<T> zeros_like(const ModelParams<T>& p);

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& p);

/// Total number of scalars.
template <typename T>
Index parameter_count(const ModelParams<T>& p);

template <typename T>
bool bitwise_equal(const Matrix<T>& a, const Matrix<T>& b);

/// Holds the (stateless) encoder used by both parameter sets.
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const SequenceEncoder<T>& encoder() const { return *encoder_; }
  Index length() const { return cfg_.encoder.length; }

  /// Last-row prediction vectors (B x d) for B history windows, dropout off.
  Matrix<T> predict(const ModelParams<T>& params, std::span<const ItemId> histories) const;

 private:
  ModelConfig cfg_;
  std::unique_ptr<SequenceEncoder<T>> encoder_;
};

// ---------------------------------------------------------------------------
// Checkpoints: manifest.json next to checkpoint.bin (little-endian float32
// blocks in manifest order).
// ---------------------------------------------------------------------------

using ConfigEcho = std::map<std::string, std::string>;

template <typename T>
void save_checkpoint(const std::filesystem::path& bin_path, const ModelConfig& cfg,
                     const ModelParams<T>& params, const ConfigEcho& echo);

struct LoadedCheckpoint {
  ModelConfig config;
  ConfigEcho echo;
  ModelParams<float> params;
};

/// Accepts either the .bin path or the manifest path.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path manifest_path_for(const std::filesystem::path& bin_path);

}  // namespace oracle4rec
