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

// Post-LN transformer encoder with a tied masked-LM head, teacher-to-student
// initialization, hidden-state projections, parameter accounting and the
// on-disk checkpoint container.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vocadistill/alignment.hpp"
#include "vocadistill/autodiff.hpp"
#include "vocadistill/tokenizer.hpp"

namespace vocadistill {

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t hidden = 64;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t vocab_size = 0;
  std::size_t max_positions = 512;
  float dropout = 0.1f;

  void validate() const {
    if (n_layers == 0) throw std::invalid_argument("model config: n_layers must be positive");
    if (hidden == 0 || n_heads == 0 || hidden % n_heads != 0) {
      throw std::invalid_argument("model config: hidden (" + std::to_string(hidden) +
                                  ") must be a positive multiple of n_heads (" +
                                  std::to_string(n_heads) + ")");
    }
    if (ffn_dim == 0) throw std::invalid_argument("model config: ffn_dim must be positive");
    if (max_positions < 2) throw std::invalid_argument("model config: max_positions must be >= 2");
    if (dropout < 0.0f || dropout >= 1.0f) {
      throw std::invalid_argument("model config: dropout must lie in [0, 1)");
    }
  }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_layers", c.n_layers}, {"hidden", c.hidden},
                     {"n_heads", c.n_heads},   {"ffn_dim", c.ffn_dim},
                     {"vocab_size", c.vocab_size}, {"max_positions", c.max_positions},
                     {"dropout", c.dropout}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("model config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "n_layers") c.n_layers = value.get<std::size_t>();
    else if (key == "hidden") c.hidden = value.get<std::size_t>();
    else if (key == "n_heads") c.n_heads = value.get<std::size_t>();
    else if (key == "ffn_dim") c.ffn_dim = value.get<std::size_t>();
    else if (key == "vocab_size") c.vocab_size = value.get<std::size_t>();
    else if (key == "max_positions") c.max_positions = value.get<std::size_t>();
    else if (key == "dropout") c.dropout = value.get<float>();
    else throw std::invalid_argument("model config: unknown key '" + key + "'");
  }
}

struct LayerParams {
  Tensor q_weight, q_bias, k_weight, k_bias, v_weight, v_bias;
  Tensor out_weight, out_bias, attn_ln_gamma, attn_ln_beta;
  Tensor ffn_in_weight, ffn_in_bias, ffn_out_weight, ffn_out_bias;
  Tensor ffn_ln_gamma, ffn_ln_beta;

  template <class F>
  void for_each(F&& f) {
    f("attention.query.weight", q_weight);
    f("attention.query.bias", q_bias);
    f("attention.key.weight", k_weight);
    f("attention.key.bias", k_bias);
    f("attention.value.weight", v_weight);
    f("attention.value.bias", v_bias);
    f("attention.output.weight", out_weight);
    f("attention.output.bias", out_bias);
    f("attention.ln.gamma", attn_ln_gamma);
    f("attention.ln.beta", attn_ln_beta);
    f("ffn.in.weight", ffn_in_weight);
    f("ffn.in.bias", ffn_in_bias);
    f("ffn.out.weight", ffn_out_weight);
    f("ffn.out.bias", ffn_out_bias);
    f("ffn.ln.gamma", ffn_ln_gamma);
    f("ffn.ln.beta", ffn_ln_beta);
  }
};

// Linear weights are stored (in, out) so that y = x · W + b.
struct ModelParams {
  Tensor token_embeddings;     // (|V|, d), also the MLM decoder (tied)
  Tensor position_embeddings;  // (max_positions, d)
  Tensor embed_ln_gamma, embed_ln_beta;
  std::vector<LayerParams> layers;
  Tensor head_weight, head_bias;        // MLM transform (d, d), (d)
  Tensor head_ln_gamma, head_ln_beta;   // (d)
  Tensor output_bias;                   // (|V|)

  std::vector<std::pair<std::string, Tensor*>> named() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("embeddings.token", &token_embeddings);
    out.emplace_back("embeddings.position", &position_embeddings);
    out.emplace_back("embeddings.ln.gamma", &embed_ln_gamma);
    out.emplace_back("embeddings.ln.beta", &embed_ln_beta);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].for_each([&](const char* name, Tensor& t) {
        out.emplace_back("layers." + std::to_string(l) + "." + name, &t);
      });
    }
    out.emplace_back("head.transform.weight", &head_weight);
    out.emplace_back("head.transform.bias", &head_bias);
    out.emplace_back("head.ln.gamma", &head_ln_gamma);
    out.emplace_back("head.ln.beta", &head_ln_beta);
    out.emplace_back("head.output_bias", &output_bias);
    return out;
  }

  std::vector<Tensor> parameters() {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(*t);
    return out;
  }

  void set_requires_grad(bool value) {
    for (auto& [name, t] : named()) t->set_requires_grad(value);
  }

  // Deep copy: the result shares no buffers with this.
  ModelParams clone() const {
    ModelParams copy = *this;
    for (auto& [name, t] : copy.named()) {
      const bool rg = t->requires_grad();
      *t = t->detach();
      t->set_requires_grad(rg);
    }
    return copy;
  }
};

// FNV-1a over every parameter's bytes, in declaration order.
inline std::uint64_t params_digest(std::vector<Tensor> tensors) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tensors) {
    for (Real v : t.data()) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) {
        h ^= (bits >> (8 * b)) & 0xFF;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

inline std::uint64_t params_digest(const ModelParams& p) {
  return params_digest(const_cast<ModelParams&>(p).parameters());
}

namespace detail {

template <class Rng>
LayerParams random_layer(const ModelConfig& c, Rng& rng) {
  const std::size_t d = c.hidden, f = c.ffn_dim;
  LayerParams l;
  l.q_weight = Tensor::normal({d, d}, 0.02f, rng, true);
  l.q_bias = Tensor::zeros({d}, true);
  l.k_weight = Tensor::normal({d, d}, 0.02f, rng, true);
  l.k_bias = Tensor::zeros({d}, true);
  l.v_weight = Tensor::normal({d, d}, 0.02f, rng, true);
  l.v_bias = Tensor::zeros({d}, true);
  l.out_weight = Tensor::normal({d, d}, 0.02f, rng, true);
  l.out_bias = Tensor::zeros({d}, true);
  l.attn_ln_gamma = Tensor::full({d}, 1.0f, true);
  l.attn_ln_beta = Tensor::zeros({d}, true);
  l.ffn_in_weight = Tensor::normal({d, f}, 0.02f, rng, true);
  l.ffn_in_bias = Tensor::zeros({f}, true);
  l.ffn_out_weight = Tensor::normal({f, d}, 0.02f, rng, true);
  l.ffn_out_bias = Tensor::zeros({d}, true);
  l.ffn_ln_gamma = Tensor::full({d}, 1.0f, true);
  l.ffn_ln_beta = Tensor::zeros({d}, true);
  return l;
}

}  // namespace detail

// Weights ~ N(0, 0.02), biases 0, layer-norm scale 1.
template <class Rng>
ModelParams init_model(const ModelConfig& c, Rng& rng) {
  c.validate();
  const std::size_t d = c.hidden;
  ModelParams p;
  p.token_embeddings = Tensor::normal({c.vocab_size, d}, 0.02f, rng, true);
  p.position_embeddings = Tensor::normal({c.max_positions, d}, 0.02f, rng, true);
  p.embed_ln_gamma = Tensor::full({d}, 1.0f, true);
  p.embed_ln_beta = Tensor::zeros({d}, true);
  for (std::size_t l = 0; l < c.n_layers; ++l) p.layers.push_back(detail::random_layer(c, rng));
  p.head_weight = Tensor::normal({d, d}, 0.02f, rng, true);
  p.head_bias = Tensor::zeros({d}, true);
  p.head_ln_gamma = Tensor::full({d}, 1.0f, true);
  p.head_ln_beta = Tensor::zeros({d}, true);
  p.output_bias = Tensor::zeros({c.vocab_size}, true);
  return p;
}

// ---------------------------------------------------------------------------
// Parameter accounting

struct ParamCount {
  std::size_t total = 0;
  std::size_t token_embedding = 0;
  double embedding_fraction = 0.0;
};

inline ParamCount count_params(const ModelConfig& c) {
  const std::size_t d = c.hidden, f = c.ffn_dim, v = c.vocab_size;
  const std::size_t embeddings = v * d + c.max_positions * d + 2 * d;
  const std::size_t attention = 4 * (d * d + d) + 2 * d;
  const std::size_t ffn = d * f + f + f * d + d + 2 * d;
  const std::size_t head = d * d + d + 2 * d + v;
  ParamCount out;
  out.token_embedding = v * d;
  out.total = embeddings + c.n_layers * (attention + ffn) + head;
  out.embedding_fraction =
      out.total ? static_cast<double>(out.token_embedding) / static_cast<double>(out.total) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Forward pass

struct ForwardOutput {
  Tensor logits;                 // (B, n, |V|) pre-softmax; undefined if skipped
  std::vector<Tensor> hiddens;   // L + 1 tensors (B, n, d): embeddings, then each layer
  std::vector<Tensor> attentions;  // L tensors (B, heads, n, n), post-softmax
};

struct ForwardOptions {
  bool train = false;
  bool compute_logits = true;
  std::mt19937_64* rng = nullptr;  // required when train && dropout > 0
};

// MLM head on arbitrary rows: (N, d) -> (N, |V|).
inline Tensor mlm_head(const ModelParams& p, const Tensor& rows) {
  Tensor h = gelu(add(matmul(rows, p.head_weight), p.head_bias));
  h = layer_norm(h, p.head_ln_gamma, p.head_ln_beta, 1e-12f);
  return add(matmul_nt(h, p.token_embeddings), p.output_bias);
}

// ids and attention_mask are row-major (batch, length); mask entries are 1 for
// real tokens and 0 for padding.
inline ForwardOutput forward(const ModelParams& p, const ModelConfig& c,
                             std::span<const TokenId> ids, std::size_t batch,
                             std::size_t length, std::span<const float> attention_mask,
                             const ForwardOptions& opt = {}) {
  if (ids.size() != batch * length || attention_mask.size() != batch * length) {
    throw ShapeError("forward: ids/mask size does not match batch " + std::to_string(batch) +
                     " x length " + std::to_string(length));
  }
  if (length > c.max_positions) {
    throw std::invalid_argument("forward: sequence length " + std::to_string(length) +
                                " exceeds max_positions " + std::to_string(c.max_positions));
  }
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
      throw std::out_of_range("forward: token id " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(c.vocab_size));
    }
  }
  const bool use_dropout = opt.train && c.dropout > 0.0f;
  if (use_dropout && opt.rng == nullptr) {
    throw std::invalid_argument("forward: training with dropout needs an rng");
  }
  std::mt19937_64 unused_rng(0);
  std::mt19937_64& rng = opt.rng ? *opt.rng : unused_rng;
  const std::size_t d = c.hidden, heads = c.n_heads, dh = d / heads;

  std::vector<TokenId> positions(length);
  std::iota(positions.begin(), positions.end(), 0);
  Tensor x = add(embedding_lookup(p.token_embeddings, ids, {batch, length}),
                 embedding_lookup(p.position_embeddings, positions, {length}));
  x = layer_norm(x, p.embed_ln_gamma, p.embed_ln_beta, 1e-12f);
  x = dropout(x, c.dropout, use_dropout, rng);

  std::vector<Real> bias(batch * length);
  for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = attention_mask[i] > 0.5f ? 0.0f : -1e9f;
  const Tensor mask_bias = Tensor::from_vector({batch, 1, 1, length}, std::move(bias));
  const Real score_scale = 1.0f / std::sqrt(static_cast<Real>(dh));

  ForwardOutput out;
  out.hiddens.push_back(x);
  auto split_heads = [&](const Tensor& t) {
    return permute(reshape(t, {batch, length, heads, dh}), {0, 2, 1, 3});
  };
  for (const LayerParams& l : p.layers) {
    const Tensor q = split_heads(add(matmul(x, l.q_weight), l.q_bias));
    const Tensor k = split_heads(add(matmul(x, l.k_weight), l.k_bias));
    const Tensor v = split_heads(add(matmul(x, l.v_weight), l.v_bias));
    const Tensor scores = add(scale(matmul_nt(q, k), score_scale), mask_bias);
    const Tensor probs = softmax(scores, 3);
    out.attentions.push_back(probs);
    Tensor ctx = matmul(dropout(probs, c.dropout, use_dropout, rng), v);
    ctx = reshape(permute(ctx, {0, 2, 1, 3}), {batch, length, d});
    Tensor attn = add(matmul(ctx, l.out_weight), l.out_bias);
    attn = dropout(attn, c.dropout, use_dropout, rng);
    x = layer_norm(add(x, attn), l.attn_ln_gamma, l.attn_ln_beta, 1e-12f);

    Tensor ff = gelu(add(matmul(x, l.ffn_in_weight), l.ffn_in_bias));
    ff = add(matmul(ff, l.ffn_out_weight), l.ffn_out_bias);
    ff = dropout(ff, c.dropout, use_dropout, rng);
    x = layer_norm(add(x, ff), l.ffn_ln_gamma, l.ffn_ln_beta, 1e-12f);
    out.hiddens.push_back(x);
  }
  if (opt.compute_logits) out.logits = mlm_head(p, x);
  return out;
}

// Per-token mean over the outputs of all transformer layers (the embedding
// output is not included).
inline Tensor mean_layer_output(const std::vector<Tensor>& hiddens) {
  if (hiddens.size() < 2) throw std::invalid_argument("mean_layer_output: no layer outputs");
  Tensor acc = hiddens[1];
  for (std::size_t i = 2; i < hiddens.size(); ++i) acc = add(acc, hiddens[i]);
  return scale(acc, 1.0f / static_cast<Real>(hiddens.size() - 1));
}

// ---------------------------------------------------------------------------
// Hidden-state projection

enum class ProjectionMode { frozen, trainable };

struct ProjectionLayer {
  Tensor weight;  // (d_s, d_t)
  Tensor bias;    // (d_t)
  ProjectionMode mode = ProjectionMode::trainable;

  std::vector<Tensor> parameters() const { return {weight, bias}; }
};

// He-normal weights (std = sqrt(2 / d_s)), zero bias. Frozen layers never
// require gradients, so the optimizer never sees them.
template <class Rng>
ProjectionLayer make_projection(std::size_t d_student, std::size_t d_teacher,
                                ProjectionMode mode, Rng& rng) {
  const bool trainable = mode == ProjectionMode::trainable;
  const Real stddev = std::sqrt(2.0f / static_cast<Real>(d_student));
  return ProjectionLayer{Tensor::normal({d_student, d_teacher}, stddev, rng, trainable),
                         Tensor::zeros({d_teacher}, trainable), mode};
}

inline ProjectionLayer identity_projection(std::size_t d, ProjectionMode mode) {
  std::vector<Real> w(d * d, 0.0f);
  for (std::size_t i = 0; i < d; ++i) w[i * d + i] = 1.0f;
  const bool trainable = mode == ProjectionMode::trainable;
  return ProjectionLayer{Tensor::from_vector({d, d}, std::move(w), trainable),
                         Tensor::zeros({d}, trainable), mode};
}

inline Tensor project_hiddens(const ProjectionLayer& proj, const Tensor& student_hidden) {
  if (student_hidden.rank() == 0 || student_hidden.shape().back() != proj.weight.size(0)) {
    throw ShapeError("project_hiddens: hidden shape " + shape_str(student_hidden.shape()) +
                     " vs projection " + shape_str(proj.weight.shape()));
  }
  return add(matmul(student_hidden, proj.weight), proj.bias);
}

// ---------------------------------------------------------------------------
// Teacher-to-student initialization

// For every student id, the distinct teacher ids (ascending) whose greedy
// student split contains it. Specials map by role.
inline std::vector<std::vector<TokenId>> embedding_sources(const Vocabulary& teacher,
                                                           const Vocabulary& student) {
  std::vector<std::vector<TokenId>> sources(student.size());
  for (std::size_t t = 0; t < teacher.size(); ++t) {
    const auto tid = static_cast<TokenId>(t);
    if (teacher.is_special(tid)) {
      sources[static_cast<std::size_t>(map_special(teacher, student, tid))].push_back(tid);
      continue;
    }
    auto split = split_teacher_token(teacher.token(tid), teacher, student);
    if (!split) continue;
    std::sort(split->begin(), split->end());
    split->erase(std::unique(split->begin(), split->end()), split->end());
    for (TokenId sid : *split) sources[static_cast<std::size_t>(sid)].push_back(tid);
  }
  return sources;
}

namespace detail {

// Leading (rows, cols) block of a 2-D tensor, or leading n entries of a 1-D one.
inline Tensor leading_block(const Tensor& t, std::size_t rows, std::size_t cols = 0) {
  if (t.rank() == 1) {
    if (rows > t.size(0)) throw ShapeError("cannot cut " + shape_str(t.shape()) + " to " + std::to_string(rows));
    std::vector<Real> v(t.data().begin(), t.data().begin() + static_cast<std::ptrdiff_t>(rows));
    return Tensor::from_vector({rows}, std::move(v), true);
  }
  if (rows > t.size(0) || cols > t.size(1)) {
    throw ShapeError("cannot cut " + shape_str(t.shape()) + " to (" + std::to_string(rows) +
                     ", " + std::to_string(cols) + ")");
  }
  std::vector<Real> v(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(t.data().data() + r * t.size(1), cols, v.data() + r * cols);
  }
  return Tensor::from_vector({rows, cols}, std::move(v), true);
}

inline Tensor mean_of(const std::vector<const Tensor*>& group) {
  std::vector<Real> acc(group.front()->numel(), 0.0f);
  for (const Tensor* t : group) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += t->data()[i];
  }
  const Real n = static_cast<Real>(group.size());
  for (auto& v : acc) v /= n;
  return Tensor::from_vector(group.front()->shape(), std::move(acc), true);
}

}  // namespace detail

// Each student row is the mean of its source teacher rows cut to the leading
// d_s coordinates; rows without sources are drawn from N(0, 0.02).
template <class Rng>
Tensor init_student_embeddings(const Tensor& teacher_embeddings, const Vocabulary& teacher,
                               const Vocabulary& student, std::size_t d_student, Rng& rng) {
  const std::size_t d_teacher = teacher_embeddings.size(1);
  if (d_student > d_teacher) {
    throw std::invalid_argument("init_student_embeddings: student width exceeds teacher width");
  }
  const auto sources = embedding_sources(teacher, student);
  std::vector<Real> out(student.size() * d_student);
  std::normal_distribution<Real> fallback(0.0f, 0.02f);
  const Real* te = teacher_embeddings.data().data();
  for (std::size_t s = 0; s < student.size(); ++s) {
    Real* row = out.data() + s * d_student;
    if (sources[s].empty()) {
      for (std::size_t j = 0; j < d_student; ++j) row[j] = fallback(rng);
      continue;
    }
    for (TokenId t : sources[s]) {
      const Real* src = te + static_cast<std::size_t>(t) * d_teacher;
      for (std::size_t j = 0; j < d_student; ++j) row[j] += src[j];
    }
    const Real n = static_cast<Real>(sources[s].size());
    for (std::size_t j = 0; j < d_student; ++j) row[j] /= n;
  }
  return Tensor::from_vector({student.size(), d_student}, std::move(out), true);
}

// Teacher layers are averaged in consecutive groups of L_t / L_s and every
// array is cut to the student's leading hidden / ffn coordinates.
inline std::vector<LayerParams> init_student_layers(const ModelParams& teacher,
                                                    const ModelConfig& student) {
  const std::size_t lt = teacher.layers.size();
  const std::size_t ls = student.n_layers;
  if (ls == 0 || lt % ls != 0) {
    throw std::invalid_argument("init_student_layers: teacher layer count " + std::to_string(lt) +
                                " is not divisible by student layer count " + std::to_string(ls));
  }
  const std::size_t group = lt / ls;
  const std::size_t d = student.hidden, f = student.ffn_dim;
  std::vector<LayerParams> out(ls);
  for (std::size_t g = 0; g < ls; ++g) {
    // Collect the same-named array across the group, average, then cut.
    std::vector<LayerParams> members(teacher.layers.begin() + static_cast<std::ptrdiff_t>(g * group),
                                     teacher.layers.begin() + static_cast<std::ptrdiff_t>((g + 1) * group));
    std::vector<std::vector<const Tensor*>> by_name;
    for (auto& m : members) {
      std::size_t i = 0;
      m.for_each([&](const char*, Tensor& t) {
        if (by_name.size() <= i) by_name.emplace_back();
        by_name[i++].push_back(&t);
      });
    }
    std::size_t i = 0;
    out[g].for_each([&](const char* name, Tensor& t) {
      const Tensor avg = detail::mean_of(by_name[i++]);
      const std::string n(name);
      if (avg.rank() == 1) {
        const bool ffn_inner = n == "ffn.in.bias";
        t = detail::leading_block(avg, ffn_inner ? f : d);
      } else if (n == "ffn.in.weight") {
        t = detail::leading_block(avg, d, f);
      } else if (n == "ffn.out.weight") {
        t = detail::leading_block(avg, f, d);
      } else {
        t = detail::leading_block(avg, d, d);
      }
    });
  }
  return out;
}

// Full student initialization from a teacher. Head output bias entries follow
// the same source averaging as embedding rows (0 without sources).
template <class Rng>
ModelParams init_student(const ModelParams& teacher, const Vocabulary& teacher_vocab,
                         const ModelConfig& student, const Vocabulary& student_vocab, Rng& rng) {
  student.validate();
  if (student.vocab_size != student_vocab.size()) {
    throw std::invalid_argument("init_student: config vocab_size does not match vocabulary");
  }
  const std::size_t d = student.hidden;
  ModelParams p;
  p.token_embeddings = init_student_embeddings(teacher.token_embeddings, teacher_vocab,
                                               student_vocab, d, rng);
  p.position_embeddings = detail::leading_block(teacher.position_embeddings, student.max_positions, d);
  p.embed_ln_gamma = detail::leading_block(teacher.embed_ln_gamma, d);
  p.embed_ln_beta = detail::leading_block(teacher.embed_ln_beta, d);
  p.layers = init_student_layers(teacher, student);
  p.head_weight = detail::leading_block(teacher.head_weight, d, d);
  p.head_bias = detail::leading_block(teacher.head_bias, d);
  p.head_ln_gamma = detail::leading_block(teacher.head_ln_gamma, d);
  p.head_ln_beta = detail::leading_block(teacher.head_ln_beta, d);
  const auto sources = embedding_sources(teacher_vocab, student_vocab);
  std::vector<Real> bias(student_vocab.size(), 0.0f);
  for (std::size_t s = 0; s < bias.size(); ++s) {
    if (sources[s].empty()) continue;
    for (TokenId t : sources[s]) bias[s] += teacher.output_bias.data()[static_cast<std::size_t>(t)];
    bias[s] /= static_cast<Real>(sources[s].size());
  }
  p.output_bias = Tensor::from_vector({student_vocab.size()}, std::move(bias), true);
  return p;
}

// ---------------------------------------------------------------------------
// Checkpoint container: manifest.json + arrays.bin (+ vocab.txt)

inline constexpr const char* kCheckpointFormat = "vocadistill.checkpoint";

inline void write_arrays(const std::filesystem::path& dir,
                         const std::vector<std::pair<std::string, const Tensor*>>& arrays,
                         nlohmann::json manifest) {
  std::filesystem::create_directories(dir);
  std::ofstream bin(dir / "arrays.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write " + (dir / "arrays.bin").string());
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : arrays) {
    for (Real v : t->data()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      const char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                             static_cast<char>((bits >> 16) & 0xFF),
                             static_cast<char>((bits >> 24) & 0xFF)};
      bin.write(bytes, 4);
    }
    entries.push_back({{"name", name}, {"shape", t->shape()}, {"offset", offset},
                       {"count", t->numel()}});
    offset += 4 * t->numel();
  }
  if (!bin) throw std::runtime_error("short write to " + (dir / "arrays.bin").string());
  manifest["format"] = kCheckpointFormat;
  manifest["version"] = 1;
  manifest["dtype"] = "float32";
  manifest["endianness"] = "little";
  manifest["arrays"] = std::move(entries);
  std::ofstream man(dir / "manifest.json", std::ios::trunc);
  man << manifest.dump(2) << '\n';
  if (!man) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
}

struct ArrayBundle {
  nlohmann::json manifest;
  std::vector<std::pair<std::string, Tensor>> arrays;

  const Tensor& get(const std::string& name) const {
    for (const auto& [n, t] : arrays) {
      if (n == name) return t;
    }
    throw std::runtime_error("checkpoint has no array '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& [n, t] : arrays) {
      if (n == name) return true;
    }
    return false;
  }
};

inline ArrayBundle read_arrays(const std::filesystem::path& dir) {
  std::ifstream man(dir / "manifest.json");
  if (!man) throw std::runtime_error("cannot open " + (dir / "manifest.json").string());
  ArrayBundle out;
  out.manifest = nlohmann::json::parse(man);
  if (out.manifest.value("format", "") != kCheckpointFormat ||
      out.manifest.value("dtype", "") != "float32" ||
      out.manifest.value("endianness", "") != "little") {
    throw std::runtime_error((dir / "manifest.json").string() + " is not a float32 little-endian checkpoint");
  }
  std::ifstream bin(dir / "arrays.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + (dir / "arrays.bin").string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  for (const auto& e : out.manifest.at("arrays")) {
    const auto shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::uint64_t>();
    const auto count = e.at("count").get<std::size_t>();
    if (count != shape_numel(shape) || offset + 4 * count > bytes.size()) {
      throw std::runtime_error("checkpoint array '" + e.at("name").get<std::string>() + "' is corrupt");
    }
    std::vector<Real> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto* b = reinterpret_cast<const unsigned char*>(bytes.data() + offset + 4 * i);
      const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                                 (static_cast<std::uint32_t>(b[2]) << 16) |
                                 (static_cast<std::uint32_t>(b[3]) << 24);
      values[i] = static_cast<Real>(std::bit_cast<float>(bits));
    }
    out.arrays.emplace_back(e.at("name").get<std::string>(),
                            Tensor::from_vector(shape, std::move(values), true));
  }
  return out;
}

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  Vocabulary vocab;
  nlohmann::json extra = nlohmann::json::object();
};

inline void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params,
                            const ModelConfig& config, const Vocabulary& vocab,
                            const nlohmann::json& extra = nlohmann::json::object(),
                            const ProjectionLayer* projection = nullptr) {
  auto& mp = const_cast<ModelParams&>(params);
  std::vector<std::pair<std::string, const Tensor*>> arrays;
  for (auto& [name, t] : mp.named()) arrays.emplace_back(name, t);
  if (projection) {
    arrays.emplace_back("projection.weight", &projection->weight);
    arrays.emplace_back("projection.bias", &projection->bias);
  }
  nlohmann::json manifest;
  manifest["config"] = config;
  manifest["extra"] = extra;
  write_arrays(dir, arrays, std::move(manifest));
  std::ofstream v(dir / "vocab.txt", std::ios::trunc);
  vocab.save(v);
  if (!v) throw std::runtime_error("cannot write " + (dir / "vocab.txt").string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  ArrayBundle bundle = read_arrays(dir);
  Checkpoint ck;
  ck.config = bundle.manifest.at("config").get<ModelConfig>();
  ck.extra = bundle.manifest.value("extra", nlohmann::json::object());
  ck.params.layers.resize(ck.config.n_layers);
  for (auto& [name, t] : ck.params.named()) {
    *t = bundle.get(name);
  }
  std::ifstream v(dir / "vocab.txt");
  if (!v) throw std::runtime_error("cannot open " + (dir / "vocab.txt").string());
  ck.vocab = Vocabulary::load(v);
  if (ck.vocab.size() != ck.config.vocab_size) {
    throw std::runtime_error("checkpoint vocabulary size does not match its config");
  }
  return ck;
}

}  // namespace vocadistill
