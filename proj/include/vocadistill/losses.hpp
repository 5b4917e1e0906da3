/*
 * Copyright 2026 The vocadistill Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Training objectives and their weighted combination.

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vocadistill/autodiff.hpp"
#include "vocadistill/tokenizer.hpp"

namespace vocadistill {

enum class LossTerm { mlm, kl, mse_hidden, cosine, mse_attention };

inline constexpr std::array<LossTerm, 5> kAllLossTerms{
    LossTerm::mlm, LossTerm::kl, LossTerm::mse_hidden, LossTerm::cosine,
    LossTerm::mse_attention};

inline std::string_view to_string(LossTerm t) {
  switch (t) {
    case LossTerm::mlm: return "mlm";
    case LossTerm::kl: return "kl";
    case LossTerm::mse_hidden: return "mse_hidden";
    case LossTerm::cosine: return "cosine";
    case LossTerm::mse_attention: return "mse_attention";
  }
  return "?";
}

inline LossTerm parse_loss_term(std::string_view name) {
  for (LossTerm t : kAllLossTerms) {
    if (to_string(t) == name) return t;
  }
  throw std::invalid_argument("unknown loss term '" + std::string(name) + "'");
}

namespace detail {

// A zero that stays attached to the graph of t.
inline Tensor attached_zero(const Tensor& t) { return scale(sum_all(t), 0.0f); }

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
}

}  // namespace detail

// Mean negative log-likelihood of targets[i] at row positions[i] of logits
// (rows, |V|). Zero when nothing is masked.
inline Tensor mlm_loss(const Tensor& logits, std::span<const std::size_t> positions,
                       std::span<const TokenId> targets) {
  if (logits.rank() != 2) throw ShapeError("mlm_loss: logits must be (rows, |V|), got " + shape_str(logits.shape()));
  if (positions.size() != targets.size()) {
    throw std::invalid_argument("mlm_loss: " + std::to_string(positions.size()) + " positions but " +
                                std::to_string(targets.size()) + " targets");
  }
  const std::size_t vocab = logits.size(1);
  std::vector<std::size_t> cols(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab) {
      throw std::out_of_range("mlm_loss: target id " + std::to_string(targets[i]) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
    cols[i] = static_cast<std::size_t>(targets[i]);
  }
  if (positions.empty()) return detail::attached_zero(logits);
  const Tensor rows = index_select(logits, 0, positions);
  const Tensor logp = log_softmax(rows, 1);
  return neg(mean_all(pick_columns(logp, cols)));
}

enum class DistillObjective { kl, ce };

// Rows are aligned positions, columns aligned vocabulary entries. KL is
// sum p_t (log p_t - log p_s) per row; CE drops the teacher entropy term.
inline Tensor distill_kl_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                              float temperature = 1.0f,
                              DistillObjective objective = DistillObjective::kl) {
  detail::require_same_shape(teacher_logits, student_logits, "distill_kl_loss");
  if (student_logits.rank() != 2) {
    throw ShapeError("distill_kl_loss: logits must be (rows, |V_match|), got " +
                     shape_str(student_logits.shape()));
  }
  if (!(temperature > 0.0f)) throw std::invalid_argument("distill_kl_loss: temperature must be positive");
  const std::size_t rows = student_logits.size(0);
  if (rows == 0) return detail::attached_zero(student_logits);
  // Fused in double precision; the row terms nearly cancel otherwise.
  const std::size_t cols = student_logits.size(1);
  const double inv_t = 1.0 / static_cast<double>(temperature);
  auto log_softmax_rows = [&](const Tensor& x) {
    std::vector<double> out(rows * cols);
    const auto v = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double m = -std::numeric_limits<double>::infinity(), z = 0.0;
      for (std::size_t j = 0; j < cols; ++j) m = std::max(m, v[r * cols + j] * inv_t);
      for (std::size_t j = 0; j < cols; ++j) z += std::exp(v[r * cols + j] * inv_t - m);
      const double lz = m + std::log(z);
      for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = v[r * cols + j] * inv_t - lz;
    }
    return out;
  };
  auto log_pt = std::make_shared<std::vector<double>>(log_softmax_rows(teacher_logits));
  auto log_ps = std::make_shared<std::vector<double>>(log_softmax_rows(student_logits));
  const bool kl = objective == DistillObjective::kl;
  auto row_loss = std::make_shared<std::vector<double>>(rows, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t i = r * cols + j;
      const double p = std::exp((*log_pt)[i]);
      acc += p * ((kl ? (*log_pt)[i] : 0.0) - (*log_ps)[i]);
    }
    (*row_loss)[r] = acc;
    total += acc;
  }
  const double norm = inv_t / static_cast<double>(rows);
  return detail::make_result(
      {}, {static_cast<Real>(total / static_cast<double>(rows))}, {teacher_logits, student_logits},
      "distill_kl_loss", [=](detail::Node& self) {
        const double g = static_cast<double>(self.grad[0]) * norm;
        detail::Node& nt = self.parent(0);
        detail::Node& ns = self.parent(1);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t i = r * cols + j;
            const double p = std::exp((*log_pt)[i]);
            if (nt.requires_grad) {
              const double own = (kl ? (*log_pt)[i] : 0.0) - (*log_ps)[i];
              nt.g()[i] += static_cast<Real>(g * p * (own - (*row_loss)[r]));
            }
            if (ns.requires_grad) ns.g()[i] += static_cast<Real>(g * (std::exp((*log_ps)[i]) - p));
          }
        }
      });
}

enum class ZeroNormPolicy { error, skip };

// Mean over rows of 1 - cos(a_i, b_i). Rows where either side has zero norm
// raise under ZeroNormPolicy::error and are dropped under ::skip.
inline Tensor cosine_hidden_loss(const Tensor& teacher, const Tensor& student,
                                 ZeroNormPolicy policy) {
  detail::require_same_shape(teacher, student, "cosine_hidden_loss");
  if (student.rank() != 2) throw ShapeError("cosine_hidden_loss: expected (rows, d), got " + shape_str(student.shape()));
  const std::size_t rows = student.size(0), d = student.size(1);
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < rows; ++r) {
    double na = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      na += static_cast<double>(teacher.data()[r * d + j]) * teacher.data()[r * d + j];
      nb += static_cast<double>(student.data()[r * d + j]) * student.data()[r * d + j];
    }
    if (na > 0.0 && nb > 0.0) {
      keep.push_back(r);
    } else if (policy == ZeroNormPolicy::error) {
      throw std::domain_error("cosine_hidden_loss: row " + std::to_string(r) + " has zero norm");
    }
  }
  if (keep.empty()) return detail::attached_zero(student);
  const Tensor a = keep.size() == rows ? teacher : index_select(teacher, 0, keep);
  const Tensor b = keep.size() == rows ? student : index_select(student, 0, keep);
  const Tensor dot = sum(mul(a, b), 1);
  const Tensor norms = mul(sqrt(sum(square(a), 1)), sqrt(sum(square(b), 1)));
  return mean_all(add_scalar(neg(div(dot, norms)), 1.0f));
}

inline Tensor cosine_hidden_loss(const Tensor& teacher, const Tensor& student) {
  return cosine_hidden_loss(teacher, student,
                            checked_mode() ? ZeroNormPolicy::error : ZeroNormPolicy::skip);
}

// Mean squared elementwise difference.
inline Tensor mse_hidden_loss(const Tensor& teacher, const Tensor& student) {
  detail::require_same_shape(teacher, student, "mse_hidden_loss");
  if (student.numel() == 0) return detail::attached_zero(student);
  return mean_all(square(sub(student, teacher)));
}

// Teacher maps are averaged over consecutive groups of L_t / L_s layers and
// compared with the matching student layer; the result is the mean over
// layers of each layer's MSE.
inline Tensor mse_attention_loss(const std::vector<Tensor>& teacher,
                                 const std::vector<Tensor>& student) {
  if (student.empty() || teacher.size() % student.size() != 0) {
    throw std::invalid_argument("mse_attention_loss: " + std::to_string(teacher.size()) +
                                " teacher layers cannot be grouped onto " +
                                std::to_string(student.size()) + " student layers");
  }
  const std::size_t group = teacher.size() / student.size();
  Tensor total;
  for (std::size_t l = 0; l < student.size(); ++l) {
    Tensor avg = teacher[l * group];
    for (std::size_t k = 1; k < group; ++k) avg = add(avg, teacher[l * group + k]);
    if (group > 1) avg = scale(avg, 1.0f / static_cast<float>(group));
    detail::require_same_shape(avg, student[l], "mse_attention_loss");
    const Tensor layer = mean_all(square(sub(student[l], avg)));
    total = total.defined() ? add(total, layer) : layer;
  }
  return scale(total, 1.0f / static_cast<float>(student.size()));
}

// ---------------------------------------------------------------------------
// Combination

struct LossBundle {
  std::map<LossTerm, Tensor> terms;
  std::map<LossTerm, float> weights;
  Tensor total;

  bool has(LossTerm t) const { return terms.contains(t); }
  std::optional<float> value(LossTerm t) const {
    auto it = terms.find(t);
    if (it == terms.end()) return std::nullopt;
    return it->second.item();
  }
};

// Weights must name exactly the present terms.
inline LossBundle combine(std::map<LossTerm, Tensor> terms, std::map<LossTerm, float> weights) {
  if (terms.empty()) throw std::invalid_argument("combine: no loss terms");
  for (const auto& [t, w] : weights) {
    if (!terms.contains(t)) {
      throw std::invalid_argument("combine: weight given for inactive term '" +
                                  std::string(to_string(t)) + "'");
    }
  }
  LossBundle out;
  for (const auto& [t, value] : terms) {
    auto it = weights.find(t);
    if (it == weights.end()) {
      throw std::invalid_argument("combine: no weight for term '" + std::string(to_string(t)) + "'");
    }
    if (value.numel() != 1) {
      throw ShapeError("combine: term '" + std::string(to_string(t)) + "' is not a scalar");
    }
    const Tensor weighted = it->second == 1.0f ? value : scale(value, it->second);
    out.total = out.total.defined() ? add(out.total, weighted) : weighted;
  }
  out.terms = std::move(terms);
  out.weights = std::move(weights);
  return out;
}

}  // namespace vocadistill
