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

// Sequence encoders. Both the past and the future encoder are instances of
// the same architecture with their own layer parameters and a shared item /
// positional embedding table.
//
// Batches are stored as (B * L) x d row-major matrices: sequence b occupies
// rows [b * L, (b + 1) * L). Every forward pass can fill a cache that the
// matching backward pass consumes; gradients accumulate into a parameter
// structure of the same shape.

#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "oracle4rec/common.hpp"
#include "oracle4rec/guiding.hpp"
#include "oracle4rec/numerics.hpp"

namespace oracle4rec {

enum class MaskMode {
  causal,   // additive -inf before the softmax, rows stay normalized
  literal,  // softmax over all positions, then zero the entries above the diagonal
};

enum class EncoderKind { attention, recurrent };

struct EncoderConfig {
  Index num_items = 0;
  Index length = 50;  // L
  Index dim = 64;     // d
  Index ff_dim = 0;   // 0 means d
  Index filter_layers = 1;     // G
  Index attention_layers = 2;  // K
  double quantile = 0.75;      // q
  bool use_filter = true;
  bool learnable_filter = false;
  double dropout = 0.5;
  double ln_eps = 1e-8;
  MaskMode mask_mode = MaskMode::causal;
  EncoderKind kind = EncoderKind::attention;
  double init_std = 0.02;

  Index hidden_ff() const { return ff_dim > 0 ? ff_dim : dim; }
};

// ---------------------------------------------------------------------------
// Parameters.
// ---------------------------------------------------------------------------

template <typename T>
struct Embeddings {
  Matrix<T> items;      // (n + 1) x d, row 0 is the padding item
  Matrix<T> positions;  // L x d
};

template <typename T>
struct FilterLayerParams {
  Matrix<T> ln_gain, ln_bias;
  Matrix<T> weight_re, weight_im;  // c x d, learnable-filter ablation only
};

template <typename T>
struct AttentionLayerParams {
  Matrix<T> wq, wk, wv;
  Matrix<T> w1, b1;
  Matrix<T> ln1_gain, ln1_bias;
  Matrix<T> w2, b2;
  Matrix<T> w3, b3;
  Matrix<T> ln2_gain, ln2_bias;
};

template <typename T>
struct RecurrentParams {
  Matrix<T> wz, uz, bz;
  Matrix<T> wr, ur, br;
  Matrix<T> wh, uh, bh;
  Matrix<T> wo, bo;
};

template <typename T>
struct EncoderParams {
  std::vector<FilterLayerParams<T>> filters;
  std::vector<AttentionLayerParams<T>> attention;
  RecurrentParams<T> recurrent;
};

/// Calls f(name, block...) for every parameter block of one or more
/// structurally identical parameter sets, in a fixed order. Empty blocks
/// (unused by the configuration) are skipped.
template <typename F, typename... P>
void for_each_block(const std::string& prefix, F&& f, Embeddings<P>&... e) {
  auto visit = [&](const char* name, auto&... m) {
    if ((... || (m.size() > 0))) f(prefix + name, m...);
  };
  visit("items", e.items...);
  visit("positions", e.positions...);
}

template <typename F, typename First, typename... Rest>
void for_each_block(const std::string& prefix, F&& f, EncoderParams<First>& first,
                    EncoderParams<Rest>&... rest) {
  auto visit = [&](const std::string& name, auto&... m) {
    if ((... || (m.size() > 0))) f(prefix + name, m...);
  };
  for (std::size_t g = 0; g < first.filters.size(); ++g) {
    const std::string p = "filter" + std::to_string(g) + ".";
#define O4R_VISIT(field) visit(p + #field, first.filters[g].field, rest.filters[g].field...)
    O4R_VISIT(ln_gain);
    O4R_VISIT(ln_bias);
    O4R_VISIT(weight_re);
    O4R_VISIT(weight_im);
#undef O4R_VISIT
  }
  for (std::size_t k = 0; k < first.attention.size(); ++k) {
    const std::string p = "attn" + std::to_string(k) + ".";
#define O4R_VISIT(field) visit(p + #field, first.attention[k].field, rest.attention[k].field...)
    O4R_VISIT(wq);
    O4R_VISIT(wk);
    O4R_VISIT(wv);
    O4R_VISIT(w1);
    O4R_VISIT(b1);
    O4R_VISIT(ln1_gain);
    O4R_VISIT(ln1_bias);
    O4R_VISIT(w2);
    O4R_VISIT(b2);
    O4R_VISIT(w3);
    O4R_VISIT(b3);
    O4R_VISIT(ln2_gain);
    O4R_VISIT(ln2_bias);
#undef O4R_VISIT
  }
#define O4R_VISIT(field) visit("gru." #field, first.recurrent.field, rest.recurrent.field...)
  O4R_VISIT(wz);
  O4R_VISIT(uz);
  O4R_VISIT(bz);
  O4R_VISIT(wr);
  O4R_VISIT(ur);
  O4R_VISIT(br);
  O4R_VISIT(wh);
  O4R_VISIT(uh);
  O4R_VISIT(bh);
  O4R_VISIT(wo);
  O4R_VISIT(bo);
#undef O4R_VISIT
}

/// Gaussian(0, init_std) weights, zero biases, identity layer-norm affines,
/// learnable filter weights 1 + 0i.
template <typename T>
EncoderParams<T> init_encoder_params(const EncoderConfig& cfg, Rng& rng);
template <typename T>
Embeddings<T> init_embeddings(const EncoderConfig& cfg, Rng& rng);

template <typename T>
EncoderParams<T> zeros_like(const EncoderParams<T>& p);
template <typename T>
Embeddings<T> zeros_like(const Embeddings<T>& e);

/// Standard normal draw from the project RNG (Box-Muller, platform independent).
double normal01(Rng& rng);

// ---------------------------------------------------------------------------
// Layers.
// ---------------------------------------------------------------------------

/// Ê = T[items] + E^P, one L-row block per sequence.
template <typename T>
Matrix<T> embed_lookup(std::span<const ItemId> items, Index length, const Embeddings<T>& emb);
template <typename T>
void embed_lookup_backward(const Matrix<T>& d_out, std::span<const ItemId> items, Index length,
                           Embeddings<T>& d_emb);

/// keep_count = min(c, max(1, round(q c))); q >= 1 keeps everything.
Index cutoff_keep_count(Index num_freq, double quantile);
/// Boolean mask over ascending frequencies: the keep_count lowest are kept.
std::vector<bool> cutoff_mask(std::span<const double> freq, double quantile);

/// Low-pass noise filter layer: LayerNorm(Dropout(IFFT(M * FFT(F))) + F).
template <typename T>
class NoiseFilterLayer {
 public:
  NoiseFilterLayer(Index length, Index dim, double quantile, bool learnable, double dropout,
                   double ln_eps);

  struct Cache {
    Matrix<T> input;
    Matrix<T> drop_mask;
    LayerNormCache<T> ln;
  };

  Matrix<T> forward(const Matrix<T>& x, const FilterLayerParams<T>& p, Rng& rng, bool training,
                    Cache* cache) const;
  Matrix<T> backward(const Matrix<T>& dy, const Cache& cache, const FilterLayerParams<T>& p,
                     FilterLayerParams<T>& grad) const;

  /// The filtering step alone, applied per sequence block.
  Matrix<T> apply_filter(const Matrix<T>& x, const FilterLayerParams<T>& p) const;
  Index keep_count() const { return keep_; }
  bool is_identity() const { return !learnable_ && keep_ == spectrum_size(length_); }

 private:
  Index length_, dim_, keep_;
  bool learnable_;
  double dropout_;
  T eps_;
  Matrix<T> lowpass_;  // L x L, symmetric
};

/// Single-head causal self-attention block followed by the position-wise
/// feed-forward block, each with dropout, residual and layer norm.
template <typename T>
class CausalAttentionLayer {
 public:
  CausalAttentionLayer(Index length, Index dim, double dropout, double ln_eps, MaskMode mode);

  struct Cache {
    Matrix<T> input, q, k, v;
    Matrix<T> probs;    // (B * L) x L attention rows
    Matrix<T> context;  // Z V
    Matrix<T> drop1;
    LayerNormCache<T> ln1;
    Matrix<T> mid;      // O
    Matrix<T> hidden_pre, hidden_act;
    Matrix<T> drop2;
    LayerNormCache<T> ln2;
  };

  Matrix<T> forward(const Matrix<T>& x, const AttentionLayerParams<T>& p, Rng& rng,
                    bool training, Cache* cache) const;
  Matrix<T> backward(const Matrix<T>& dy, const Cache& cache, const AttentionLayerParams<T>& p,
                     AttentionLayerParams<T>& grad) const;

 private:
  Index length_, dim_;
  double dropout_;
  T eps_;
  MaskMode mode_;
};

// ---------------------------------------------------------------------------
// Encoders.
// ---------------------------------------------------------------------------

template <typename T>
class SequenceEncoder {
 public:
  struct Cache {
    virtual ~Cache() = default;
  };

  virtual ~SequenceEncoder() = default;

  /// items holds B sequences of length L back to back. Returns (B * L) x d.
  virtual Matrix<T> forward(std::span<const ItemId> items, const Embeddings<T>& emb,
                            const EncoderParams<T>& p, Rng& rng, bool training,
                            std::unique_ptr<Cache>* cache) const = 0;
  virtual void backward(const Matrix<T>& d_out, const Cache& cache, const Embeddings<T>& emb,
                        const EncoderParams<T>& p, Embeddings<T>& d_emb,
                        EncoderParams<T>& d_p) const = 0;

  virtual Index length() const = 0;
};

/// Embedding lookup -> G noise filter layers -> K causal attention layers.
template <typename T>
class AttentionEncoder final : public SequenceEncoder<T> {
 public:
  explicit AttentionEncoder(const EncoderConfig& cfg);

  Matrix<T> forward(std::span<const ItemId> items, const Embeddings<T>& emb,
                    const EncoderParams<T>& p, Rng& rng, bool training,
                    std::unique_ptr<typename SequenceEncoder<T>::Cache>* cache) const override;
  void backward(const Matrix<T>& d_out, const typename SequenceEncoder<T>::Cache& cache,
                const Embeddings<T>& emb, const EncoderParams<T>& p, Embeddings<T>& d_emb,
                EncoderParams<T>& d_p) const override;
  Index length() const override { return cfg_.length; }

 private:
  EncoderConfig cfg_;
  std::vector<NoiseFilterLayer<T>> filters_;
  std::vector<CausalAttentionLayer<T>> attention_;
};

/// Embedding lookup -> single-layer GRU -> linear projection to d.
template <typename T>
class RecurrentEncoder final : public SequenceEncoder<T> {
 public:
  explicit RecurrentEncoder(const EncoderConfig& cfg);

  Matrix<T> forward(std::span<const ItemId> items, const Embeddings<T>& emb,
                    const EncoderParams<T>& p, Rng& rng, bool training,
                    std::unique_ptr<typename SequenceEncoder<T>::Cache>* cache) const override;
  void backward(const Matrix<T>& d_out, const typename SequenceEncoder<T>::Cache& cache,
                const Embeddings<T>& emb, const EncoderParams<T>& p, Embeddings<T>& d_emb,
                EncoderParams<T>& d_p) const override;
  Index length() const override { return cfg_.length; }

 private:
  EncoderConfig cfg_;
};

template <typename T>
std::unique_ptr<SequenceEncoder<T>> make_encoder(const EncoderConfig& cfg);

/// Single-sequence conveniences over the layer classes (B = 1).
template <typename T>
Matrix<T> noise_filter_layer(const Matrix<T>& f_prev, double quantile,
                             const FilterLayerParams<T>& p, Rng& rng, bool training,
                             double dropout = 0.0, double ln_eps = 1e-8);
template <typename T>
Matrix<T> causal_attention_layer(const Matrix<T>& s_prev, const AttentionLayerParams<T>& p,
                                 Rng& rng, bool training, double dropout = 0.0,
                                 double ln_eps = 1e-8, MaskMode mode = MaskMode::causal);

// ---------------------------------------------------------------------------
// Prediction head and losses.
// ---------------------------------------------------------------------------

inline constexpr double kProbClamp = 1e-7;

/// sigmoid(row . T[item]) clamped to [1e-7, 1 - 1e-7].
template <typename T>
T predict_prob(const Eigen::Ref<const RowVector<T>>& pred_row, ItemId item,
               const Embeddings<T>& emb);

/// -log P(positive) - log(1 - P(negative)); 0 for a padding positive.
/// Gradients are accumulated times `scale` when the pointers are non-null.
template <typename T>
T past_loss(const Eigen::Ref<const RowVector<T>>& pred_row, ItemId positive, ItemId negative,
            const Embeddings<T>& emb, RowVector<T>* d_row = nullptr,
            Embeddings<T>* d_emb = nullptr, T scale = T(1));

/// Sum over rows l of the binary term where row l predicts next_targets[l]
/// against negatives[l]; rows whose target is padding are skipped. `rows`
/// starts at `first_row` of `r` and spans next_targets.size() rows.
template <typename T>
T future_loss(const Matrix<T>& r, Index first_row, std::span<const ItemId> next_targets,
              std::span<const ItemId> negatives, const Embeddings<T>& emb,
              Matrix<T>* d_r = nullptr, Embeddings<T>* d_emb = nullptr, T scale = T(1));

}  // namespace oracle4rec
