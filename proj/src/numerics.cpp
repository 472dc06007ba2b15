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

#include "oracle4rec/numerics.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace oracle4rec {

namespace {

// DFT tables for one length: forward rows are e^{-2 pi i k n / L} for the
// half spectrum, inverse rows carry the 1/L and Hermitian doubling weights.
template <typename T>
struct DftTables {
  Matrix<T> fwd_cos;  // c x L
  Matrix<T> fwd_sin;  // c x L, holds -sin
  Matrix<T> inv_cos;  // L x c
  Matrix<T> inv_sin;  // L x c, holds -sin
};

template <typename T>
const DftTables<T>& dft_tables(Index length) {
  thread_local std::map<Index, DftTables<T>> cache;
  auto it = cache.find(length);
  if (it != cache.end()) return it->second;

  const Index c = spectrum_size(length);
  DftTables<T> t;
  t.fwd_cos.resize(c, length);
  t.fwd_sin.resize(c, length);
  t.inv_cos.resize(length, c);
  t.inv_sin.resize(length, c);
  for (Index k = 0; k < c; ++k) {
    const bool self_conjugate = (k == 0) || (length % 2 == 0 && k == length / 2);
    const long double weight = (self_conjugate ? 1.0L : 2.0L) / static_cast<long double>(length);
    for (Index n = 0; n < length; ++n) {
      // Reduce k*n mod L first so large products keep full angle precision.
      const long double angle = 2.0L * std::numbers::pi_v<long double> *
                                static_cast<long double>((k * n) % length) /
                                static_cast<long double>(length);
      const long double cs = std::cos(angle);
      const long double sn = std::sin(angle);
      t.fwd_cos(k, n) = static_cast<T>(cs);
      t.fwd_sin(k, n) = static_cast<T>(-sn);
      t.inv_cos(n, k) = static_cast<T>(weight * cs);
      t.inv_sin(n, k) = static_cast<T>(-weight * sn);
    }
  }
  return cache.emplace(length, std::move(t)).first->second;
}

template <typename T>
void require_finite(const Matrix<T>& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite input");
}

}  // namespace

template <typename T>
ComplexSpectrum<T> rfft_seq(const Matrix<T>& signal) {
  const Index length = signal.rows();
  if (length < 1) throw NumericError("rfft_seq: empty sequence");
  require_finite(signal, "rfft_seq");
  const auto& tab = dft_tables<T>(length);
  const Index c = spectrum_size(length);

  ComplexSpectrum<T> out;
  out.length = length;
  const Matrix<T> re = tab.fwd_cos * signal;
  const Matrix<T> im = tab.fwd_sin * signal;
  out.values.resize(c, signal.cols());
  out.values.real() = re;
  out.values.imag() = im;
  out.freq.resize(c);
  for (Index k = 0; k < c; ++k) out.freq[k] = static_cast<T>(k) / static_cast<T>(length);
  return out;
}

template <typename T>
Matrix<T> irfft_seq(const ComplexSpectrum<T>& spectrum, Index length) {
  if (length < 1 || spectrum.values.rows() != spectrum_size(length)) {
    throw NumericError("irfft_seq: spectrum has " + std::to_string(spectrum.values.rows()) +
                       " bins, expected " + std::to_string(spectrum_size(length)));
  }
  const auto& tab = dft_tables<T>(length);
  const Matrix<T> re = spectrum.values.real();
  const Matrix<T> im = spectrum.values.imag();
  // Only the real part of the DC / Nyquist products survives, which the
  // inverse sine table already encodes (sin = 0 on those bins).
  return tab.inv_cos * re + tab.inv_sin * im;
}

template <typename T>
Matrix<T> lowpass_operator(Index length, Index keep_count) {
  const Index c = spectrum_size(length);
  if (keep_count < 0 || keep_count > c) throw NumericError("lowpass_operator: bad keep count");
  auto spec = rfft_seq<T>(Matrix<T>::Identity(length, length));
  for (Index k = keep_count; k < c; ++k) spec.values.row(k).setZero();
  return irfft_seq(spec, length);
}

template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, T eps,
                     LayerNormCache<T>* cache) {
  const Index d = x.cols();
  Matrix<T> normalized(x.rows(), d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const T mean = x.row(r).mean();
    const auto centered = (x.row(r).array() - mean).eval();
    const T var = centered.square().mean();
    const T is = T(1) / std::sqrt(var + eps);
    inv_std(r) = is;
    normalized.row(r) = centered * is;
  }
  Matrix<T> y = (normalized.array().rowwise() * gain.row(0).array()).rowwise() +
                bias.row(0).array();
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& gain,
                              const LayerNormCache<T>& cache, Matrix<T>& d_gain,
                              Matrix<T>& d_bias) {
  const Index d = dy.cols();
  const auto& xhat = cache.normalized;
  d_gain.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  d_bias.row(0) += dy.colwise().sum();
  Matrix<T> dxhat = dy.array().rowwise() * gain.row(0).array();
  Matrix<T> dx(dy.rows(), d);
  const T inv_d = T(1) / static_cast<T>(d);
  for (Index r = 0; r < dy.rows(); ++r) {
    const T mean_g = dxhat.row(r).sum() * inv_d;
    const T mean_gx = dxhat.row(r).dot(xhat.row(r)) * inv_d;
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - mean_g - xhat.row(r).array() * mean_gx).matrix();
  }
  return dx;
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& m) {
  Matrix<T> out(m.rows(), m.cols());
  for (Index r = 0; r < m.rows(); ++r) {
    const T mx = m.row(r).maxCoeff();
    if (mx == -std::numeric_limits<T>::infinity()) {
      throw NumericError("softmax_rows: row " + std::to_string(r) + " is entirely -inf");
    }
    out.row(r) = (m.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename T>
Matrix<T> softmax_rows_backward(const Matrix<T>& y, const Matrix<T>& dy) {
  const auto dots = (y.array() * dy.array()).rowwise().sum().eval();
  return (y.array() * (dy.array().colwise() - dots)).matrix();
}

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2)));
  const T pdf = std::exp(T(-0.5) * x * x) * static_cast<T>(0.5 * std::numbers::inv_sqrtpi *
                                                           std::numbers::sqrt2);
  return cdf + x * pdf;
}

template <typename T>
T sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Matrix<T> dropout(const Matrix<T>& x, double p, Rng& rng, bool training, Matrix<T>* mask) {
  if (mask) mask->resize(0, 0);
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw NumericError("dropout: p must be < 1");
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  Matrix<T> m(x.rows(), x.cols());
  T* data = m.data();
  // One draw seeds a counter-based stream for the whole mask.
  const std::uint64_t base = rng();
  const auto threshold = static_cast<std::uint64_t>(p * 0x1.0p53);
  for (Index i = 0; i < m.size(); ++i) {
    const std::uint64_t r = splitmix64(base + static_cast<std::uint64_t>(i)) >> 11;
    data[i] = r < threshold ? T(0) : scale;
  }
  Matrix<T> y = x.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return y;
}

template <typename T>
void adam_step(std::span<Matrix<T>* const> params, std::span<const Matrix<T>* const> grads,
               AdamState<T>& state, const AdamOptions& options) {
  if (params.size() != grads.size()) throw OptimizerError("adam_step: block count mismatch");
  if (state.first_moment.empty()) {
    for (auto* p : params) {
      state.first_moment.push_back(Matrix<T>::Zero(p->rows(), p->cols()));
      state.second_moment.push_back(Matrix<T>::Zero(p->rows(), p->cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw OptimizerError("adam_step: state was created for a different block list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols() ||
        state.first_moment[i].rows() != params[i]->rows() ||
        state.first_moment[i].cols() != params[i]->cols()) {
      throw OptimizerError("adam_step: shape mismatch in block " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(options.beta1);
  const T b2 = static_cast<T>(options.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(options.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(options.beta2, t)));
  const T lr = static_cast<T>(options.lr);
  const T eps = static_cast<T>(options.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = state.first_moment[i].array();
    auto v = state.second_moment[i].array();
    const auto g = grads[i]->array();
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.square();
    params[i]->array() -= lr * (m * c1) / ((v * c2).sqrt() + eps);
  }
}

GradCheckReport check_gradients(const std::function<double()>& loss,
                                std::span<const GradBlock> blocks,
                                const GradCheckOptions& options) {
  GradCheckReport report;
  const double base = loss();
  if (!std::isfinite(base)) throw NumericError("check_gradients: non-finite loss");
  for (const auto& block : blocks) {
    Matrix<double>& value = *block.value;
    const Matrix<double>& analytic = *block.analytic;
    if (analytic.rows() != value.rows() || analytic.cols() != value.cols()) {
      throw NumericError("check_gradients: gradient shape mismatch for " + block.name);
    }
    const Index total = value.size();
    Index stride = 1;
    if (options.max_entries_per_block > 0 && total > options.max_entries_per_block) {
      stride = (total + options.max_entries_per_block - 1) / options.max_entries_per_block;
    }
    for (Index flat = 0; flat < total; flat += stride) {
      double* entry = value.data() + flat;
      const double saved = *entry;
      *entry = saved + options.step;
      const double up = loss();
      *entry = saved - options.step;
      const double down = loss();
      *entry = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("check_gradients: non-finite loss while probing " + block.name);
      }
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic.data()[flat];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (report.worst_block.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_block = block.name;
        report.worst_row = flat / value.cols();
        report.worst_col = flat % value.cols();
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

#define ORACLE4REC_INSTANTIATE(T)                                                              \
  template ComplexSpectrum<T> rfft_seq<T>(const Matrix<T>&);                                   \
  template Matrix<T> irfft_seq<T>(const ComplexSpectrum<T>&, Index);                           \
  template Matrix<T> lowpass_operator<T>(Index, Index);                                        \
  template Matrix<T> layer_norm<T>(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, T,    \
                                   LayerNormCache<T>*);                                        \
  template Matrix<T> layer_norm_backward<T>(const Matrix<T>&, const Matrix<T>&,                \
                                            const LayerNormCache<T>&, Matrix<T>&, Matrix<T>&); \
  template Matrix<T> softmax_rows<T>(const Matrix<T>&);                                        \
  template Matrix<T> softmax_rows_backward<T>(const Matrix<T>&, const Matrix<T>&);             \
  template T gelu<T>(T);                                                                       \
  template T gelu_grad<T>(T);                                                                  \
  template T sigmoid<T>(T);                                                                    \
  template Matrix<T> dropout<T>(const Matrix<T>&, double, Rng&, bool, Matrix<T>*);             \
  template void adam_step<T>(std::span<Matrix<T>* const>, std::span<const Matrix<T>* const>,   \
                             AdamState<T>&, const AdamOptions&);

ORACLE4REC_INSTANTIATE(float)
ORACLE4REC_INSTANTIATE(double)

#undef ORACLE4REC_INSTANTIATE

}  // namespace oracle4rec
