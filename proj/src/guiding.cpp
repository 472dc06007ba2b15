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

#include "oracle4rec/guiding.hpp"

#include <cmath>
#include <iostream>

namespace oracle4rec {

std::string to_string(Discrepancy kind) {
  switch (kind) {
    case Discrepancy::kl: return "kl";
    case Discrepancy::js: return "js";
    case Discrepancy::euclidean: return "euclidean";
    case Discrepancy::cosine: return "cosine";
  }
  return "?";
}

Discrepancy parse_discrepancy(const std::string& name) {
  if (name == "kl") return Discrepancy::kl;
  if (name == "js") return Discrepancy::js;
  if (name == "euclidean") return Discrepancy::euclidean;
  if (name == "cosine") return Discrepancy::cosine;
  throw ConfigError("unknown discrepancy '" + name + "' (kl, js, euclidean, cosine)");
}

std::vector<double> attenuation_weights(Index future, double gamma) {
  if (future < 0 || gamma < 0.0) throw ConfigError("attenuation_weights: need P >= 0 and gamma >= 0");
  std::vector<double> w(static_cast<std::size_t>(future + 2));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(-gamma * static_cast<double>(i));
  return w;
}

namespace {

template <typename T>
RowVector<T> log_softmax(const Eigen::Ref<const RowVector<T>>& x) {
  const T mx = x.maxCoeff();
  const T lse = mx + std::log((x.array() - mx).exp().sum());
  return (x.array() - lse).matrix();
}

// Pulls a gradient w.r.t. probabilities p = softmax(x) back to x.
template <typename T>
RowVector<T> through_softmax(const RowVector<T>& p, const RowVector<T>& dp) {
  const T dot = p.dot(dp);
  return (p.array() * (dp.array() - dot)).matrix();
}

}  // namespace

template <typename T>
T discrepancy(Discrepancy kind, const Eigen::Ref<const RowVector<T>>& a,
              const Eigen::Ref<const RowVector<T>>& b, RowVector<T>* d_a, RowVector<T>* d_b,
              T scale) {
  if (a.size() != b.size() || a.size() < 1) throw NumericError("discrepancy: dimension mismatch");
  switch (kind) {
    case Discrepancy::kl: {
      const RowVector<T> lp = log_softmax<T>(a);
      const RowVector<T> lq = log_softmax<T>(b);
      const RowVector<T> p = lp.array().exp().matrix();
      const RowVector<T> diff = lp - lq;
      const T value = p.dot(diff);
      if (d_a) *d_a += scale * (p.array() * (diff.array() - value)).matrix();
      if (d_b) *d_b += scale * (lq.array().exp() - p.array()).matrix();
      return value;
    }
    case Discrepancy::js: {
      const RowVector<T> lp = log_softmax<T>(a);
      const RowVector<T> lq = log_softmax<T>(b);
      const RowVector<T> p = lp.array().exp().matrix();
      const RowVector<T> q = lq.array().exp().matrix();
      const RowVector<T> lm = (T(0.5) * (p + q)).array().log().matrix();
      const T value = T(0.5) * p.dot(lp - lm) + T(0.5) * q.dot(lq - lm);
      if (d_a) *d_a += scale * through_softmax<T>(p, T(0.5) * (lp - lm));
      if (d_b) *d_b += scale * through_softmax<T>(q, T(0.5) * (lq - lm));
      return std::max(value, T(0));
    }
    case Discrepancy::euclidean: {
      const RowVector<T> diff = a - b;
      const T norm = diff.norm();
      if (norm > T(0)) {
        if (d_a) *d_a += (scale / norm) * diff;
        if (d_b) *d_b -= (scale / norm) * diff;
      }
      return norm;
    }
    case Discrepancy::cosine: {
      const T na = a.norm();
      const T nb = b.norm();
      if (na == T(0) || nb == T(0)) throw NumericError("discrepancy: cosine of a zero vector");
      const T dot = a.dot(b);
      const T cosv = dot / (na * nb);
      if (d_a) *d_a -= scale * (b / (na * nb) - (cosv / (na * na)) * a);
      if (d_b) *d_b -= scale * (a / (na * nb) - (cosv / (nb * nb)) * b);
      return T(1) - cosv;
    }
  }
  return T(0);
}

std::vector<GuidedRow> guided_rows(Index length, Index future, Index available_future) {
  const Index count = std::min(future + 2, available_future + 1);
  std::vector<GuidedRow> rows;
  for (Index i = 1; i <= count; ++i) {
    const Index row = length - count + (i - 1);
    if (row >= 0) rows.push_back({row, i});
  }
  return rows;
}

std::vector<GuidedRow> guided_rows_reversed(Index length, Index real_items, Index future,
                                            Index available_future) {
  // Row (length - real_items + k) holds v_{end-k} and predicts v_{end-k-1};
  // it predicts v_{t+i-1} for k = available_future - 1 - i.
  std::vector<GuidedRow> rows;
  for (Index i = 1; i <= future + 2; ++i) {
    const Index k = available_future - 1 - i;
    if (k < 0 || k >= real_items) break;
    rows.push_back({length - real_items + k, i});
  }
  return rows;
}

template <typename T>
T guiding_loss(const Eigen::Ref<const RowVector<T>>& q_last, const Matrix<T>& r,
               std::span<const GuidedRow> rows, const GuidingConfig& cfg, RowVector<T>* d_q,
               Matrix<T>* d_r, T scale) {
  if (rows.empty()) {
    std::cerr << "warning: guiding loss has no future rows to align with; contributing 0\n";
    return T(0);
  }
  T total = T(0);
  RowVector<T> grad_row(q_last.size());
  for (const auto& g : rows) {
    const T alpha = static_cast<T>(std::exp(-cfg.gamma * static_cast<double>(g.weight_index - 1)));
    RowVector<T>* dr_ptr = nullptr;
    if (d_r) {
      grad_row.setZero();
      dr_ptr = &grad_row;
    }
    total += alpha * discrepancy<T>(cfg.kind, q_last, r.row(g.row), d_q, dr_ptr, scale * alpha);
    if (d_r) d_r->row(g.row) += grad_row;
  }
  return total;
}

template <typename T>
T guiding_loss(const Eigen::Ref<const RowVector<T>>& q_last, const Matrix<T>& r,
               const GuidingConfig& cfg, Index available_future) {
  const auto rows = guided_rows(r.rows(), cfg.future, available_future);
  return guiding_loss<T>(q_last, r, rows, cfg);
}

#define ORACLE4REC_INSTANTIATE(T)                                                               \
  template T discrepancy<T>(Discrepancy, const Eigen::Ref<const RowVector<T>>&,                 \
                            const Eigen::Ref<const RowVector<T>>&, RowVector<T>*,                \
                            RowVector<T>*, T);                                                   \
  template T guiding_loss<T>(const Eigen::Ref<const RowVector<T>>&, const Matrix<T>&,           \
                             std::span<const GuidedRow>, const GuidingConfig&, RowVector<T>*,   \
                             Matrix<T>*, T);                                                     \
  template T guiding_loss<T>(const Eigen::Ref<const RowVector<T>>&, const Matrix<T>&,           \
                             const GuidingConfig&, Index);

ORACLE4REC_INSTANTIATE(float)
ORACLE4REC_INSTANTIATE(double)

#undef ORACLE4REC_INSTANTIATE

}  // namespace oracle4rec
