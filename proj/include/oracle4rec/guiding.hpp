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

// Future-to-past alignment loss: the past encoder's target-position row is
// pulled towards the future encoder's rows for the target and the items
// after it, with exponentially decaying weights.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "oracle4rec/common.hpp"

namespace oracle4rec {

enum class Discrepancy { kl, js, euclidean, cosine };

std::string to_string(Discrepancy kind);
Discrepancy parse_discrepancy(const std::string& name);

struct GuidingConfig {
  Index future = 10;  // P
  double gamma = 0.05;
  Discrepancy kind = Discrepancy::kl;
  double beta = 0.01;
};

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// alpha_i = exp(-gamma (i - 1)) for i = 1 .. P + 2.
std::vector<double> attenuation_weights(Index future, double gamma);

/// f(a, b). KL and JS compare softmax(a) with softmax(b) over the embedding
/// dimensions; natural logarithms throughout. Gradients are written to
/// d_a / d_b (scaled by `scale`) when non-null.
template <typename T>
T discrepancy(Discrepancy kind, const Eigen::Ref<const RowVector<T>>& a,
              const Eigen::Ref<const RowVector<T>>& b, RowVector<T>* d_a = nullptr,
              RowVector<T>* d_b = nullptr, T scale = T(1));

/// Rows of R that take part in the guiding sum for one example, paired with
/// their weight index i (1-based).
struct GuidedRow {
  Index row = 0;
  Index weight_index = 1;
};

/// Left-to-right windows: the row predicting v_t sits at L - available_future
/// (0-based L - available_future - 1) and the guided rows are the last
/// min(P + 2, available_future + 1) rows of R.
std::vector<GuidedRow> guided_rows(Index length, Index future, Index available_future);

/// Right-to-left windows (the real items of the global window reversed, then
/// left padded): rows predicting v_t, v_{t+1}, ... when read backwards.
/// Empty when no row predicts v_t, i.e. available_future < 2.
std::vector<GuidedRow> guided_rows_reversed(Index length, Index real_items, Index future,
                                            Index available_future);

/// sum_i alpha_i f(q_last, R[row_i]). Gradients w.r.t. q_last and R are
/// accumulated (times `scale`) into d_q / d_r when non-null.
template <typename T>
T guiding_loss(const Eigen::Ref<const RowVector<T>>& q_last, const Matrix<T>& r,
               std::span<const GuidedRow> rows, const GuidingConfig& cfg,
               RowVector<T>* d_q = nullptr, Matrix<T>* d_r = nullptr, T scale = T(1));

/// Convenience form for left-to-right windows.
template <typename T>
T guiding_loss(const Eigen::Ref<const RowVector<T>>& q_last, const Matrix<T>& r,
               const GuidingConfig& cfg, Index available_future);

}  // namespace oracle4rec
