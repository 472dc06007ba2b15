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

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "oracle4rec/common.hpp"

namespace oracle4rec {

// ---------------------------------------------------------------------------
// Spectral transforms along the sequence (row) axis.
// ---------------------------------------------------------------------------

/// Half spectrum of a real L x d signal: c = L/2 + 1 rows, one column per
/// channel. freq[k] = k / L in cycles per step.
template <typename T>
struct ComplexSpectrum {
  ComplexMatrix<T> values;
  std::vector<T> freq;
  Index length = 0;
};

template <typename T>
ComplexSpectrum<T> rfft_seq(const Matrix<T>& signal);

/// Inverse of rfft_seq. Imaginary parts of the DC and Nyquist bins are
/// ignored, matching the usual real-inverse convention.
template <typename T>
Matrix<T> irfft_seq(const ComplexSpectrum<T>& spectrum, Index length);

inline Index spectrum_size(Index length) { return length / 2 + 1; }

/// L x L real matrix equal to irfft(mask * rfft(.)) where the mask keeps the
/// lowest `keep_count` bins. Symmetric, so it is also its own adjoint.
template <typename T>
Matrix<T> lowpass_operator(Index length, Index keep_count);

// ---------------------------------------------------------------------------
// Normalization, activations, dropout.
// ---------------------------------------------------------------------------

template <typename T>
struct LayerNormCache {
  Matrix<T> normalized;             // (x - mean) / sqrt(var + eps)
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
};

/// Row-wise layer norm; gain and bias are 1 x d.
template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias,
                     T eps, LayerNormCache<T>* cache = nullptr);

/// Returns dL/dx and accumulates into d_gain / d_bias.
template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& gain,
                              const LayerNormCache<T>& cache, Matrix<T>& d_gain,
                              Matrix<T>& d_bias);

/// Row softmax. -inf entries map to 0; a row of only -inf is an error.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& m);

template <typename T>
Matrix<T> softmax_rows_backward(const Matrix<T>& y, const Matrix<T>& dy);

template <typename T>
T gelu(T x);
template <typename T>
T gelu_grad(T x);

template <typename T>
T sigmoid(T x);

/// Inverted dropout. When `mask` is non-null it receives the per-entry scale
/// (0 or 1/(1-p)); it is left empty when the call is an identity.
template <typename T>
Matrix<T> dropout(const Matrix<T>& x, double p, Rng& rng, bool training,
                  Matrix<T>* mask = nullptr);

// ---------------------------------------------------------------------------
// Optimizer.
// ---------------------------------------------------------------------------

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<Matrix<T>> first_moment;
  std::vector<Matrix<T>> second_moment;
  std::int64_t step = 0;
};

/// Bias-corrected Adam over a list of parameter blocks. Moments are created
/// zero-filled on first use.
template <typename T>
void adam_step(std::span<Matrix<T>* const> params, std::span<const Matrix<T>* const> grads,
               AdamState<T>& state, const AdamOptions& options);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking (64-bit).
// ---------------------------------------------------------------------------

struct GradBlock {
  std::string name;
  Matrix<double>* value = nullptr;
  const Matrix<double>* analytic = nullptr;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_block;
  Index worst_row = -1;
  Index worst_col = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  Index checked = 0;
  bool passed = true;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Entries with |analytic| and |numeric| both below this are compared
  /// absolutely against it.
  double abs_floor = 1e-6;
  /// Cap per block; 0 checks every entry. Entries are picked with a fixed
  /// stride so the subset is deterministic.
  Index max_entries_per_block = 0;
};

/// Compares the supplied analytic gradients against central differences of
/// `loss`. The loss must be a pure function of the block values.
GradCheckReport check_gradients(const std::function<double()>& loss,
                                std::span<const GradBlock> blocks,
                                const GradCheckOptions& options = {});

}  // namespace oracle4rec
