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

#include "oracle4rec/encoder.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace oracle4rec {

double normal01(Rng& rng) {
  // Box-Muller on (0, 1] so the log never sees 0.
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

template <typename T>
Matrix<T> gaussian(Index rows, Index cols, double std, Rng& rng) {
  Matrix<T> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(std * normal01(rng));
  return m;
}

template <typename T>
Matrix<T> ones_row(Index d) {
  return Matrix<T>::Ones(1, d);
}

template <typename T>
Matrix<T> zeros_row(Index d) {
  return Matrix<T>::Zero(1, d);
}

template <typename T>
void zero_fill(Matrix<T>& m) {
  m.setZero();
}

// Row j of every L-row block, as a B x d strided view.
template <typename T>
using StridedRows = Eigen::Map<Matrix<T>, 0, Eigen::OuterStride<>>;

template <typename T>
StridedRows<T> step_rows(Matrix<T>& m, Index j, Index length) {
  const Index batch = m.rows() / length;
  return StridedRows<T>(m.data() + j * m.cols(), batch, m.cols(),
                        Eigen::OuterStride<>(length * m.cols()));
}

template <typename T>
Eigen::Map<const Matrix<T>, 0, Eigen::OuterStride<>> step_rows(const Matrix<T>& m, Index j,
                                                               Index length) {
  const Index batch = m.rows() / length;
  return Eigen::Map<const Matrix<T>, 0, Eigen::OuterStride<>>(
      m.data() + j * m.cols(), batch, m.cols(), Eigen::OuterStride<>(length * m.cols()));
}

template <typename T>
Matrix<T> add_bias(Matrix<T> x, const Matrix<T>& b) {
  x.rowwise() += b.row(0);
  return x;
}

template <typename T>
Matrix<T> apply_mask(const Matrix<T>& x, const Matrix<T>& mask) {
  if (mask.size() == 0) return x;
  return x.cwiseProduct(mask);
}

template <typename T>
void check_batch(const Matrix<T>& x, Index length, Index dim, const char* who) {
  if (x.cols() != dim || x.rows() % length != 0) {
    throw NumericError(std::string(who) + ": expected (B*" + std::to_string(length) + ") x " +
                       std::to_string(dim) + " input, got " + std::to_string(x.rows()) + " x " +
                       std::to_string(x.cols()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameter construction.
// ---------------------------------------------------------------------------

template <typename T>
Embeddings<T> init_embeddings(const EncoderConfig& cfg, Rng& rng) {
  Embeddings<T> e;
  e.items = gaussian<T>(cfg.num_items + 1, cfg.dim, cfg.init_std, rng);
  e.positions = gaussian<T>(cfg.length, cfg.dim, cfg.init_std, rng);
  return e;
}

template <typename T>
EncoderParams<T> init_encoder_params(const EncoderConfig& cfg, Rng& rng) {
  const Index d = cfg.dim;
  const Index ff = cfg.hidden_ff();
  const double s = cfg.init_std;
  EncoderParams<T> p;
  if (cfg.kind == EncoderKind::recurrent) {
    // Fan-in scaled; this encoder has no residuals or normalization.
    auto& r = p.recurrent;
    const double sr = 1.0 / std::sqrt(static_cast<double>(d));
    r.wz = gaussian<T>(d, d, sr, rng);
    r.uz = gaussian<T>(d, d, sr, rng);
    r.bz = zeros_row<T>(d);
    r.wr = gaussian<T>(d, d, sr, rng);
    r.ur = gaussian<T>(d, d, sr, rng);
    r.br = zeros_row<T>(d);
    r.wh = gaussian<T>(d, d, sr, rng);
    r.uh = gaussian<T>(d, d, sr, rng);
    r.bh = zeros_row<T>(d);
    r.wo = gaussian<T>(d, d, sr, rng);
    r.bo = zeros_row<T>(d);
    return p;
  }
  if (cfg.use_filter) {
    const Index c = spectrum_size(cfg.length);
    for (Index g = 0; g < cfg.filter_layers; ++g) {
      FilterLayerParams<T> f;
      f.ln_gain = ones_row<T>(d);
      f.ln_bias = zeros_row<T>(d);
      if (cfg.learnable_filter) {
        f.weight_re = Matrix<T>::Ones(c, d);
        f.weight_im = Matrix<T>::Zero(c, d);
      }
      p.filters.push_back(std::move(f));
    }
  }
  for (Index k = 0; k < cfg.attention_layers; ++k) {
    AttentionLayerParams<T> a;
    a.wq = gaussian<T>(d, d, s, rng);
    a.wk = gaussian<T>(d, d, s, rng);
    a.wv = gaussian<T>(d, d, s, rng);
    a.w1 = gaussian<T>(d, d, s, rng);
    a.b1 = zeros_row<T>(d);
    a.ln1_gain = ones_row<T>(d);
    a.ln1_bias = zeros_row<T>(d);
    a.w2 = gaussian<T>(d, ff, s, rng);
    a.b2 = zeros_row<T>(ff);
    a.w3 = gaussian<T>(ff, d, s, rng);
    a.b3 = zeros_row<T>(d);
    a.ln2_gain = ones_row<T>(d);
    a.ln2_bias = zeros_row<T>(d);
    p.attention.push_back(std::move(a));
  }
  return p;
}

template <typename T>
EncoderParams<T> zeros_like(const EncoderParams<T>& p) {
  EncoderParams<T> z = p;
  for_each_block("", [](const std::string&, Matrix<T>& m) { m.setZero(); }, z);
  return z;
}

template <typename T>
Embeddings<T> zeros_like(const Embeddings<T>& e) {
  return {Matrix<T>::Zero(e.items.rows(), e.items.cols()),
          Matrix<T>::Zero(e.positions.rows(), e.positions.cols())};
}

// ---------------------------------------------------------------------------
// Embedding lookup.
// ---------------------------------------------------------------------------

template <typename T>
Matrix<T> embed_lookup(std::span<const ItemId> items, Index length, const Embeddings<T>& emb) {
  if (length != emb.positions.rows() || items.size() % length != 0) {
    throw IndexError("embed_lookup: sequence length does not match the positional table");
  }
  const Index n = emb.items.rows() - 1;
  Matrix<T> out(static_cast<Index>(items.size()), emb.items.cols());
  for (std::size_t r = 0; r < items.size(); ++r) {
    const ItemId v = items[r];
    if (v < 0 || v > n) {
      throw IndexError("embed_lookup: item index " + std::to_string(v) + " outside [0, " +
                       std::to_string(n) + "]");
    }
    out.row(r) = emb.items.row(v) + emb.positions.row(static_cast<Index>(r) % length);
  }
  return out;
}

template <typename T>
void embed_lookup_backward(const Matrix<T>& d_out, std::span<const ItemId> items, Index length,
                           Embeddings<T>& d_emb) {
  for (std::size_t r = 0; r < items.size(); ++r) {
    d_emb.items.row(items[r]) += d_out.row(r);
    d_emb.positions.row(static_cast<Index>(r) % length) += d_out.row(r);
  }
}

// ---------------------------------------------------------------------------
// Noise filter.
// ---------------------------------------------------------------------------

Index cutoff_keep_count(Index num_freq, double quantile) {
  if (num_freq < 1) throw NumericError("cutoff_mask: empty frequency vector");
  if (!(quantile > 0.0)) throw ConfigError("cutoff_mask: quantile must be > 0");
  if (quantile >= 1.0) return num_freq;
  const auto k = static_cast<Index>(std::llround(quantile * static_cast<double>(num_freq)));
  return std::min(num_freq, std::max<Index>(1, k));
}

std::vector<bool> cutoff_mask(std::span<const double> freq, double quantile) {
  const Index c = static_cast<Index>(freq.size());
  const Index keep = cutoff_keep_count(c, quantile);
  std::vector<bool> mask(freq.size(), false);
  for (Index k = 0; k < keep; ++k) mask[k] = true;
  return mask;
}

template <typename T>
NoiseFilterLayer<T>::NoiseFilterLayer(Index length, Index dim, double quantile, bool learnable,
                                      double dropout, double ln_eps)
    : length_(length),
      dim_(dim),
      keep_(cutoff_keep_count(spectrum_size(length), quantile)),
      learnable_(learnable),
      dropout_(dropout),
      eps_(static_cast<T>(ln_eps)) {
  if (!learnable_ && keep_ < spectrum_size(length_)) {
    lowpass_ = lowpass_operator<double>(length_, keep_).template cast<T>();
  }
}

template <typename T>
Matrix<T> NoiseFilterLayer<T>::apply_filter(const Matrix<T>& x, const FilterLayerParams<T>& p) const {
  check_batch(x, length_, dim_, "noise_filter_layer");
  if (is_identity()) return x;
  const Index batch = x.rows() / length_;
  Matrix<T> y(x.rows(), x.cols());
  if (!learnable_) {
    for (Index b = 0; b < batch; ++b) {
      y.middleRows(b * length_, length_).noalias() = lowpass_ * x.middleRows(b * length_, length_);
    }
    return y;
  }
  ComplexMatrix<T> w(p.weight_re.rows(), p.weight_re.cols());
  w.real() = p.weight_re;
  w.imag() = p.weight_im;
  for (Index b = 0; b < batch; ++b) {
    auto spec = rfft_seq<T>(x.middleRows(b * length_, length_));
    spec.values = spec.values.cwiseProduct(w);
    y.middleRows(b * length_, length_) = irfft_seq(spec, length_);
  }
  return y;
}

template <typename T>
Matrix<T> NoiseFilterLayer<T>::forward(const Matrix<T>& x, const FilterLayerParams<T>& p,
                                       Rng& rng, bool training, Cache* cache) const {
  const Matrix<T> filtered = apply_filter(x, p);
  Matrix<T> mask;
  Matrix<T> z = dropout(filtered, dropout_, rng, training, cache ? &mask : nullptr);
  z += x;
  LayerNormCache<T> ln;
  Matrix<T> out = layer_norm(z, p.ln_gain, p.ln_bias, eps_, cache ? &ln : nullptr);
  if (cache) {
    if (learnable_) cache->input = x;
    cache->drop_mask = std::move(mask);
    cache->ln = std::move(ln);
  }
  return out;
}

template <typename T>
Matrix<T> NoiseFilterLayer<T>::backward(const Matrix<T>& dy, const Cache& cache,
                                        const FilterLayerParams<T>& p,
                                        FilterLayerParams<T>& grad) const {
  const Matrix<T> dz = layer_norm_backward(dy, p.ln_gain, cache.ln, grad.ln_gain, grad.ln_bias);
  const Matrix<T> dfiltered = apply_mask(dz, cache.drop_mask);
  Matrix<T> dx = dz;
  if (is_identity()) {
    dx += dfiltered;
    return dx;
  }
  const Index batch = dy.rows() / length_;
  if (!learnable_) {
    // The low-pass operator is symmetric, so its adjoint is itself.
    for (Index b = 0; b < batch; ++b) {
      dx.middleRows(b * length_, length_).noalias() +=
          lowpass_ * dfiltered.middleRows(b * length_, length_);
    }
    return dx;
  }
  // y = irfft(W . rfft(x)):  dx = irfft(conj(W) . rfft(dy)),
  // dW_k = (s_k / L) conj(X_k) G_k with s_k = 2 except on DC / Nyquist.
  const Index c = spectrum_size(length_);
  ComplexMatrix<T> w_conj(c, dim_);
  w_conj.real() = p.weight_re;
  w_conj.imag() = -p.weight_im;
  std::vector<T> s(c, T(2));
  s[0] = T(1);
  if (length_ % 2 == 0) s[c - 1] = T(1);
  for (Index b = 0; b < batch; ++b) {
    auto g = rfft_seq<T>(dfiltered.middleRows(b * length_, length_));
    const auto xs = rfft_seq<T>(cache.input.middleRows(b * length_, length_));
    for (Index k = 0; k < c; ++k) {
      const T scale = s[k] / static_cast<T>(length_);
      for (Index j = 0; j < dim_; ++j) {
        const std::complex<T> gw = std::conj(xs.values(k, j)) * g.values(k, j) * scale;
        grad.weight_re(k, j) += gw.real();
        grad.weight_im(k, j) += gw.imag();
      }
    }
    g.values = g.values.cwiseProduct(w_conj);
    dx.middleRows(b * length_, length_) += irfft_seq(g, length_);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Causal self-attention.
// ---------------------------------------------------------------------------

template <typename T>
CausalAttentionLayer<T>::CausalAttentionLayer(Index length, Index dim, double dropout,
                                              double ln_eps, MaskMode mode)
    : length_(length), dim_(dim), dropout_(dropout), eps_(static_cast<T>(ln_eps)), mode_(mode) {}

template <typename T>
Matrix<T> CausalAttentionLayer<T>::forward(const Matrix<T>& x, const AttentionLayerParams<T>& p,
                                           Rng& rng, bool training, Cache* cache) const {
  check_batch(x, length_, dim_, "causal_attention_layer");
  const Index L = length_;
  const Index batch = x.rows() / L;
  const T scale = T(1) / std::sqrt(static_cast<T>(dim_));
  const T neg_inf = -std::numeric_limits<T>::infinity();

  Matrix<T> q = x * p.wq;
  Matrix<T> k = x * p.wk;
  Matrix<T> v = x * p.wv;
  Matrix<T> probs(x.rows(), L);
  Matrix<T> context(x.rows(), dim_);
  Matrix<T> logits(L, L);
  for (Index b = 0; b < batch; ++b) {
    const auto qb = q.middleRows(b * L, L);
    const auto kb = k.middleRows(b * L, L);
    logits.noalias() = qb * kb.transpose();
    logits *= scale;
    if (mode_ == MaskMode::causal) {
      for (Index i = 0; i < L; ++i)
        for (Index j = i + 1; j < L; ++j) logits(i, j) = neg_inf;
      probs.middleRows(b * L, L) = softmax_rows(logits);
      context.middleRows(b * L, L).noalias() = probs.middleRows(b * L, L) * v.middleRows(b * L, L);
    } else {
      probs.middleRows(b * L, L) = softmax_rows(logits);
      Matrix<T> zeroed = probs.middleRows(b * L, L).template triangularView<Eigen::Lower>();
      context.middleRows(b * L, L).noalias() = zeroed * v.middleRows(b * L, L);
    }
  }

  Matrix<T> drop1;
  Matrix<T> o = dropout(add_bias<T>(context * p.w1, p.b1), dropout_, rng, training,
                        cache ? &drop1 : nullptr);
  o += x;
  LayerNormCache<T> ln1;
  Matrix<T> mid = layer_norm(o, p.ln1_gain, p.ln1_bias, eps_, cache ? &ln1 : nullptr);

  Matrix<T> hidden_pre = add_bias<T>(mid * p.w2, p.b2);
  Matrix<T> hidden_act = hidden_pre.unaryExpr([](T a) { return gelu(a); });
  Matrix<T> drop2;
  Matrix<T> h = dropout(add_bias<T>(hidden_act * p.w3, p.b3), dropout_, rng, training,
                        cache ? &drop2 : nullptr);
  h += mid;
  LayerNormCache<T> ln2;
  Matrix<T> out = layer_norm(h, p.ln2_gain, p.ln2_bias, eps_, cache ? &ln2 : nullptr);

  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
    cache->drop1 = std::move(drop1);
    cache->ln1 = std::move(ln1);
    cache->mid = std::move(mid);
    cache->hidden_pre = std::move(hidden_pre);
    cache->hidden_act = std::move(hidden_act);
    cache->drop2 = std::move(drop2);
    cache->ln2 = std::move(ln2);
  }
  return out;
}

template <typename T>
Matrix<T> CausalAttentionLayer<T>::backward(const Matrix<T>& dy, const Cache& c,
                                            const AttentionLayerParams<T>& p,
                                            AttentionLayerParams<T>& g) const {
  const Index L = length_;
  const Index batch = dy.rows() / L;
  const T scale = T(1) / std::sqrt(static_cast<T>(dim_));

  // Feed-forward block.
  Matrix<T> dmid = layer_norm_backward(dy, p.ln2_gain, c.ln2, g.ln2_gain, g.ln2_bias);
  const Matrix<T> dh = apply_mask(dmid, c.drop2);
  g.w3.noalias() += c.hidden_act.transpose() * dh;
  g.b3.row(0) += dh.colwise().sum();
  Matrix<T> dpre = dh * p.w3.transpose();
  dpre = dpre.cwiseProduct(c.hidden_pre.unaryExpr([](T a) { return gelu_grad(a); }));
  g.w2.noalias() += c.mid.transpose() * dpre;
  g.b2.row(0) += dpre.colwise().sum();
  dmid.noalias() += dpre * p.w2.transpose();

  // Attention block.
  Matrix<T> dx = layer_norm_backward(dmid, p.ln1_gain, c.ln1, g.ln1_gain, g.ln1_bias);
  const Matrix<T> du = apply_mask(dx, c.drop1);
  g.w1.noalias() += c.context.transpose() * du;
  g.b1.row(0) += du.colwise().sum();
  const Matrix<T> dcontext = du * p.w1.transpose();

  Matrix<T> dq(dy.rows(), dim_), dk(dy.rows(), dim_), dv(dy.rows(), dim_);
  Matrix<T> dprobs(L, L);
  for (Index b = 0; b < batch; ++b) {
    const auto probs = c.probs.middleRows(b * L, L);
    const auto dctx = dcontext.middleRows(b * L, L);
    dprobs.noalias() = dctx * c.v.middleRows(b * L, L).transpose();
    if (mode_ == MaskMode::literal) {
      Matrix<T> zeroed = probs.template triangularView<Eigen::Lower>();
      dv.middleRows(b * L, L).noalias() = zeroed.transpose() * dctx;
      dprobs = dprobs.template triangularView<Eigen::Lower>();
    } else {
      dv.middleRows(b * L, L).noalias() = probs.transpose() * dctx;
    }
    Matrix<T> dlogits = softmax_rows_backward<T>(probs, dprobs);
    dlogits *= scale;
    dq.middleRows(b * L, L).noalias() = dlogits * c.k.middleRows(b * L, L);
    dk.middleRows(b * L, L).noalias() = dlogits.transpose() * c.q.middleRows(b * L, L);
  }
  g.wq.noalias() += c.input.transpose() * dq;
  g.wk.noalias() += c.input.transpose() * dk;
  g.wv.noalias() += c.input.transpose() * dv;
  dx.noalias() += dq * p.wq.transpose();
  dx.noalias() += dk * p.wk.transpose();
  dx.noalias() += dv * p.wv.transpose();
  return dx;
}

// ---------------------------------------------------------------------------
// Attention encoder.
// ---------------------------------------------------------------------------

namespace {

template <typename T>
struct AttentionEncoderCache final : SequenceEncoder<T>::Cache {
  std::vector<ItemId> items;
  std::vector<typename NoiseFilterLayer<T>::Cache> filters;
  std::vector<typename CausalAttentionLayer<T>::Cache> attention;
};

template <typename T>
struct RecurrentEncoderCache final : SequenceEncoder<T>::Cache {
  std::vector<ItemId> items;
  Matrix<T> x, h, z, r, cand;
};

}  // namespace

template <typename T>
AttentionEncoder<T>::AttentionEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
  if (cfg.use_filter) {
    for (Index g = 0; g < cfg.filter_layers; ++g) {
      filters_.emplace_back(cfg.length, cfg.dim, cfg.quantile, cfg.learnable_filter, cfg.dropout,
                            cfg.ln_eps);
    }
  }
  for (Index k = 0; k < cfg.attention_layers; ++k) {
    attention_.emplace_back(cfg.length, cfg.dim, cfg.dropout, cfg.ln_eps, cfg.mask_mode);
  }
}

template <typename T>
Matrix<T> AttentionEncoder<T>::forward(std::span<const ItemId> items, const Embeddings<T>& emb,
                                       const EncoderParams<T>& p, Rng& rng, bool training,
                                       std::unique_ptr<typename SequenceEncoder<T>::Cache>* cache) const {
  if (p.filters.size() != filters_.size() || p.attention.size() != attention_.size()) {
    throw ConfigError("attention encoder: parameter layout does not match the configuration");
  }
  AttentionEncoderCache<T>* c = nullptr;
  if (cache) {
    auto owned = std::make_unique<AttentionEncoderCache<T>>();
    c = owned.get();
    c->items.assign(items.begin(), items.end());
    c->filters.resize(filters_.size());
    c->attention.resize(attention_.size());
    *cache = std::move(owned);
  }
  Matrix<T> x = embed_lookup(items, cfg_.length, emb);
  for (std::size_t g = 0; g < filters_.size(); ++g) {
    x = filters_[g].forward(x, p.filters[g], rng, training, c ? &c->filters[g] : nullptr);
  }
  for (std::size_t k = 0; k < attention_.size(); ++k) {
    x = attention_[k].forward(x, p.attention[k], rng, training, c ? &c->attention[k] : nullptr);
  }
  return x;
}

template <typename T>
void AttentionEncoder<T>::backward(const Matrix<T>& d_out,
                                   const typename SequenceEncoder<T>::Cache& cache,
                                   const Embeddings<T>&, const EncoderParams<T>& p,
                                   Embeddings<T>& d_emb, EncoderParams<T>& d_p) const {
  const auto& c = dynamic_cast<const AttentionEncoderCache<T>&>(cache);
  Matrix<T> dx = d_out;
  for (std::size_t k = attention_.size(); k-- > 0;) {
    dx = attention_[k].backward(dx, c.attention[k], p.attention[k], d_p.attention[k]);
  }
  for (std::size_t g = filters_.size(); g-- > 0;) {
    dx = filters_[g].backward(dx, c.filters[g], p.filters[g], d_p.filters[g]);
  }
  embed_lookup_backward(dx, std::span<const ItemId>(c.items), cfg_.length, d_emb);
}

// ---------------------------------------------------------------------------
// Recurrent encoder.
// ---------------------------------------------------------------------------

template <typename T>
RecurrentEncoder<T>::RecurrentEncoder(const EncoderConfig& cfg) : cfg_(cfg) {}

template <typename T>
Matrix<T> RecurrentEncoder<T>::forward(std::span<const ItemId> items, const Embeddings<T>& emb,
                                       const EncoderParams<T>& p, Rng&, bool,
                                       std::unique_ptr<typename SequenceEncoder<T>::Cache>* cache) const {
  const auto& w = p.recurrent;
  if (w.wz.size() == 0) throw ConfigError("recurrent encoder: parameters not initialized");
  const Index L = cfg_.length;
  const Index d = cfg_.dim;
  Matrix<T> x = embed_lookup(items, L, emb);
  const Index batch = x.rows() / L;
  const Matrix<T> az_in = add_bias<T>(x * w.wz, w.bz);
  const Matrix<T> ar_in = add_bias<T>(x * w.wr, w.br);
  const Matrix<T> ah_in = add_bias<T>(x * w.wh, w.bh);
  Matrix<T> h(x.rows(), d), z(x.rows(), d), r(x.rows(), d), cand(x.rows(), d);
  Matrix<T> h_prev = Matrix<T>::Zero(batch, d);
  Matrix<T> zs(batch, d), rs(batch, d), cs(batch, d);
  for (Index j = 0; j < L; ++j) {
    zs = (step_rows(az_in, j, L) + h_prev * w.uz).unaryExpr([](T a) { return sigmoid(a); });
    rs = (step_rows(ar_in, j, L) + h_prev * w.ur).unaryExpr([](T a) { return sigmoid(a); });
    cs = (step_rows(ah_in, j, L) + rs.cwiseProduct(h_prev) * w.uh).unaryExpr(
        [](T a) { return std::tanh(a); });
    h_prev = (Matrix<T>::Ones(batch, d) - zs).cwiseProduct(h_prev) + zs.cwiseProduct(cs);
    step_rows(h, j, L) = h_prev;
    step_rows(z, j, L) = zs;
    step_rows(r, j, L) = rs;
    step_rows(cand, j, L) = cs;
  }
  Matrix<T> out = add_bias<T>(h * w.wo, w.bo);
  if (cache) {
    auto c = std::make_unique<RecurrentEncoderCache<T>>();
    c->items.assign(items.begin(), items.end());
    c->x = std::move(x);
    c->h = std::move(h);
    c->z = std::move(z);
    c->r = std::move(r);
    c->cand = std::move(cand);
    *cache = std::move(c);
  }
  return out;
}

template <typename T>
void RecurrentEncoder<T>::backward(const Matrix<T>& d_out,
                                   const typename SequenceEncoder<T>::Cache& cache,
                                   const Embeddings<T>&, const EncoderParams<T>& p,
                                   Embeddings<T>& d_emb, EncoderParams<T>& d_p) const {
  const auto& c = dynamic_cast<const RecurrentEncoderCache<T>&>(cache);
  const auto& w = p.recurrent;
  auto& g = d_p.recurrent;
  const Index L = cfg_.length;
  const Index d = cfg_.dim;
  const Index batch = d_out.rows() / L;

  g.wo.noalias() += c.h.transpose() * d_out;
  g.bo.row(0) += d_out.colwise().sum();
  const Matrix<T> dh_out = d_out * w.wo.transpose();

  Matrix<T> daz(d_out.rows(), d), dar(d_out.rows(), d), dah(d_out.rows(), d);
  Matrix<T> carry = Matrix<T>::Zero(batch, d);
  const Matrix<T> zero = Matrix<T>::Zero(batch, d);
  Matrix<T> h_prev(batch, d), dh(batch, d), dprev(batch, d), drh(batch, d);
  Matrix<T> a_z(batch, d), a_r(batch, d), a_h(batch, d);
  for (Index j = L; j-- > 0;) {
    h_prev = j > 0 ? Matrix<T>(step_rows(c.h, j - 1, L)) : zero;
    const Matrix<T> zs = step_rows(c.z, j, L);
    const Matrix<T> rs = step_rows(c.r, j, L);
    const Matrix<T> cs = step_rows(c.cand, j, L);
    dh = step_rows(dh_out, j, L) + carry;

    a_h = dh.cwiseProduct(zs).cwiseProduct((T(1) - cs.array().square()).matrix());
    const Matrix<T> dz = dh.cwiseProduct(cs - h_prev);
    dprev = dh.cwiseProduct((T(1) - zs.array()).matrix());

    g.uh.noalias() += rs.cwiseProduct(h_prev).transpose() * a_h;
    drh.noalias() = a_h * w.uh.transpose();
    dprev += drh.cwiseProduct(rs);
    a_r = drh.cwiseProduct(h_prev).cwiseProduct(rs.cwiseProduct((T(1) - rs.array()).matrix()));
    a_z = dz.cwiseProduct(zs.cwiseProduct((T(1) - zs.array()).matrix()));
    g.ur.noalias() += h_prev.transpose() * a_r;
    g.uz.noalias() += h_prev.transpose() * a_z;
    dprev.noalias() += a_r * w.ur.transpose();
    dprev.noalias() += a_z * w.uz.transpose();

    step_rows(daz, j, L) = a_z;
    step_rows(dar, j, L) = a_r;
    step_rows(dah, j, L) = a_h;
    carry = dprev;
  }
  g.wz.noalias() += c.x.transpose() * daz;
  g.wr.noalias() += c.x.transpose() * dar;
  g.wh.noalias() += c.x.transpose() * dah;
  g.bz.row(0) += daz.colwise().sum();
  g.br.row(0) += dar.colwise().sum();
  g.bh.row(0) += dah.colwise().sum();
  Matrix<T> dx = daz * w.wz.transpose();
  dx.noalias() += dar * w.wr.transpose();
  dx.noalias() += dah * w.wh.transpose();
  embed_lookup_backward(dx, std::span<const ItemId>(c.items), L, d_emb);
}

template <typename T>
std::unique_ptr<SequenceEncoder<T>> make_encoder(const EncoderConfig& cfg) {
  if (cfg.kind == EncoderKind::recurrent) return std::make_unique<RecurrentEncoder<T>>(cfg);
  return std::make_unique<AttentionEncoder<T>>(cfg);
}

template <typename T>
Matrix<T> noise_filter_layer(const Matrix<T>& f_prev, double quantile,
                             const FilterLayerParams<T>& p, Rng& rng, bool training,
                             double dropout, double ln_eps) {
  NoiseFilterLayer<T> layer(f_prev.rows(), f_prev.cols(), quantile, p.weight_re.size() > 0,
                            dropout, ln_eps);
  return layer.forward(f_prev, p, rng, training, nullptr);
}

template <typename T>
Matrix<T> causal_attention_layer(const Matrix<T>& s_prev, const AttentionLayerParams<T>& p,
                                 Rng& rng, bool training, double dropout, double ln_eps,
                                 MaskMode mode) {
  CausalAttentionLayer<T> layer(s_prev.rows(), s_prev.cols(), dropout, ln_eps, mode);
  return layer.forward(s_prev, p, rng, training, nullptr);
}

// ---------------------------------------------------------------------------
// Losses.
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void check_item(ItemId item, const Embeddings<T>& emb) {
  if (item < 0 || item >= emb.items.rows()) {
    throw IndexError("item index " + std::to_string(item) + " outside [0, " +
                     std::to_string(emb.items.rows() - 1) + "]");
  }
}

// Binary cross-entropy on a logit with the probability clamp; the derivative
// is zero wherever the clamp is active.
template <typename T>
std::pair<T, T> bce(T logit, bool positive) {
  const T lo = static_cast<T>(kProbClamp);
  const T hi = T(1) - lo;
  const T p = sigmoid(logit);
  if (positive) {
    if (p < lo) return {-std::log(lo), T(0)};
    if (p > hi) return {-std::log(hi), T(0)};
    return {-std::log(p), p - T(1)};
  }
  if (p < lo) return {-std::log(T(1) - lo), T(0)};
  if (p > hi) return {-std::log(T(1) - hi), T(0)};
  return {-std::log1p(-p), p};
}

}  // namespace

template <typename T>
T predict_prob(const Eigen::Ref<const RowVector<T>>& pred_row, ItemId item,
               const Embeddings<T>& emb) {
  check_item(item, emb);
  const T p = sigmoid<T>(pred_row.dot(emb.items.row(item)));
  const T lo = static_cast<T>(kProbClamp);
  return std::clamp(p, lo, T(1) - lo);
}

template <typename T>
T past_loss(const Eigen::Ref<const RowVector<T>>& pred_row, ItemId positive, ItemId negative,
            const Embeddings<T>& emb, RowVector<T>* d_row, Embeddings<T>* d_emb, T scale) {
  check_item(positive, emb);
  if (positive == 0) return T(0);
  check_item(negative, emb);
  const auto [lp, gp] = bce<T>(pred_row.dot(emb.items.row(positive)), true);
  const auto [ln, gn] = bce<T>(pred_row.dot(emb.items.row(negative)), false);
  if (d_row) {
    *d_row += (scale * gp) * emb.items.row(positive);
    *d_row += (scale * gn) * emb.items.row(negative);
  }
  if (d_emb) {
    d_emb->items.row(positive) += (scale * gp) * pred_row;
    d_emb->items.row(negative) += (scale * gn) * pred_row;
  }
  return lp + ln;
}

template <typename T>
T future_loss(const Matrix<T>& r, Index first_row, std::span<const ItemId> next_targets,
              std::span<const ItemId> negatives, const Embeddings<T>& emb, Matrix<T>* d_r,
              Embeddings<T>* d_emb, T scale) {
  if (negatives.size() != next_targets.size()) {
    throw IndexError("future_loss: need one negative per position");
  }
  T total = T(0);
  bool any = false;
  RowVector<T> drow(r.cols());
  for (std::size_t l = 0; l < next_targets.size(); ++l) {
    if (next_targets[l] == 0) continue;
    any = true;
    const Index row = first_row + static_cast<Index>(l);
    drow.setZero();
    total += past_loss<T>(r.row(row), next_targets[l], negatives[l], emb, d_r ? &drow : nullptr,
                          d_emb, scale);
    if (d_r) d_r->row(row) += drow;
  }
  if (!any) throw DataError("future_loss: every target position is padding");
  return total;
}

#define ORACLE4REC_INSTANTIATE(T)                                                                \
  template Embeddings<T> init_embeddings<T>(const EncoderConfig&, Rng&);                        \
  template EncoderParams<T> init_encoder_params<T>(const EncoderConfig&, Rng&);                 \
  template EncoderParams<T> zeros_like<T>(const EncoderParams<T>&);                             \
  template Embeddings<T> zeros_like<T>(const Embeddings<T>&);                                   \
  template Matrix<T> embed_lookup<T>(std::span<const ItemId>, Index, const Embeddings<T>&);     \
  template void embed_lookup_backward<T>(const Matrix<T>&, std::span<const ItemId>, Index,      \
                                         Embeddings<T>&);                                       \
  template class NoiseFilterLayer<T>;                                                           \
  template class CausalAttentionLayer<T>;                                                       \
  template class AttentionEncoder<T>;                                                           \
  template class RecurrentEncoder<T>;                                                           \
  template std::unique_ptr<SequenceEncoder<T>> make_encoder<T>(const EncoderConfig&);           \
  template Matrix<T> noise_filter_layer<T>(const Matrix<T>&, double, const FilterLayerParams<T>&, \
                                           Rng&, bool, double, double);                         \
  template Matrix<T> causal_attention_layer<T>(const Matrix<T>&, const AttentionLayerParams<T>&, \
                                               Rng&, bool, double, double, MaskMode);           \
  template T predict_prob<T>(const Eigen::Ref<const RowVector<T>>&, ItemId, const Embeddings<T>&); \
  template T past_loss<T>(const Eigen::Ref<const RowVector<T>>&, ItemId, ItemId,                \
                          const Embeddings<T>&, RowVector<T>*, Embeddings<T>*, T);              \
  template T future_loss<T>(const Matrix<T>&, Index, std::span<const ItemId>,                   \
                            std::span<const ItemId>, const Embeddings<T>&, Matrix<T>*,          \
                            Embeddings<T>*, T);

ORACLE4REC_INSTANTIATE(float)
ORACLE4REC_INSTANTIATE(double)

#undef ORACLE4REC_INSTANTIATE

}  // namespace oracle4rec
