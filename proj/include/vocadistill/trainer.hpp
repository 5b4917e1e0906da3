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

// Distillation and pre-training loop: MLM masking, dual-input batches,
// AdamW, warmup/plateau learning-rate schedule, gradient accumulation,
// validation and metric logging.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vocadistill/alignment.hpp"
#include "vocadistill/autodiff.hpp"
#include "vocadistill/losses.hpp"
#include "vocadistill/model.hpp"
#include "vocadistill/tokenizer.hpp"

namespace vocadistill {

enum class Strategy { match, reduce, reduce_match };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::match: return "match";
    case Strategy::reduce: return "reduce";
    case Strategy::reduce_match: return "reduce-match";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "match") return Strategy::match;
  if (s == "reduce") return Strategy::reduce;
  if (s == "reduce-match") return Strategy::reduce_match;
  throw std::invalid_argument("unknown strategy '" + std::string(s) +
                              "' (expected match, reduce or reduce-match)");
}

inline bool uses_reduce(Strategy s) { return s != Strategy::match; }

enum class StudentInit { teacher, random };

struct TrainConfig {
  Strategy strategy = Strategy::match;
  std::set<LossTerm> losses{LossTerm::mlm};
  std::map<LossTerm, float> weights;  // missing entries default to 1
  ProjectionMode projection_mode = ProjectionMode::frozen;
  DistillObjective objective = DistillObjective::kl;
  float temperature = 1.0f;
  float mask_prob = 0.15f;
  std::size_t batch_size = 8;
  std::size_t accum_steps = 4;
  double peak_lr = 5e-4;
  std::size_t warmup_steps = 100;
  std::size_t plateau_patience_epochs = 3;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;       // 0: no cap beyond epochs
  std::size_t validate_every = 0;  // optimizer steps; 0: once per epoch
  std::size_t max_length = 128;    // tokens including [CLS] and [SEP]
  // Architecture and vocabulary of the model being trained. vocab is a path;
  // empty means the teacher's vocabulary.
  ModelConfig model;
  std::string vocab;
  StudentInit init = StudentInit::teacher;

  bool needs_teacher() const {
    return std::any_of(losses.begin(), losses.end(), [](LossTerm t) { return t != LossTerm::mlm; });
  }
  bool needs_projection() const {
    return losses.contains(LossTerm::mse_hidden) || losses.contains(LossTerm::cosine);
  }
  float weight(LossTerm t) const {
    auto it = weights.find(t);
    return it == weights.end() ? 1.0f : it->second;
  }

  void validate() const {
    if (losses.empty()) throw std::invalid_argument("train config: loss set is empty");
    for (const auto& [t, w] : weights) {
      if (!losses.contains(t)) {
        throw std::invalid_argument("train config: weight given for inactive term '" +
                                    std::string(to_string(t)) + "'");
      }
    }
    if (mask_prob < 0.0f || mask_prob > 1.0f) throw std::invalid_argument("train config: mask_prob must lie in [0, 1]");
    if (batch_size == 0 || accum_steps == 0) throw std::invalid_argument("train config: batch_size and accum_steps must be positive");
    if (!(peak_lr >= 0.0)) throw std::invalid_argument("train config: peak_lr must be >= 0");
    if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be >= 0");
    if (plateau_patience_epochs == 0) throw std::invalid_argument("train config: plateau_patience_epochs must be positive");
    if (!(temperature > 0.0f)) throw std::invalid_argument("train config: temperature must be positive");
    if (max_length < 3) throw std::invalid_argument("train config: max_length must be >= 3");
    if (epochs == 0 && max_steps == 0) throw std::invalid_argument("train config: epochs and max_steps are both 0");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  std::vector<std::string> losses;
  for (LossTerm t : c.losses) losses.emplace_back(to_string(t));
  nlohmann::json weights = nlohmann::json::object();
  for (LossTerm t : c.losses) weights[std::string(to_string(t))] = c.weight(t);
  nlohmann::json model = c.model;
  j = nlohmann::json{
      {"strategy", to_string(c.strategy)},
      {"losses", losses},
      {"weights", weights},
      {"projection_mode", c.projection_mode == ProjectionMode::frozen ? "frozen" : "trainable"},
      {"objective", c.objective == DistillObjective::kl ? "kl" : "ce"},
      {"temperature", c.temperature},
      {"mask_prob", c.mask_prob},
      {"batch_size", c.batch_size},
      {"accum_steps", c.accum_steps},
      {"peak_lr", c.peak_lr},
      {"warmup_steps", c.warmup_steps},
      {"plateau_patience_epochs", c.plateau_patience_epochs},
      {"weight_decay", c.weight_decay},
      {"seed", c.seed},
      {"epochs", c.epochs},
      {"max_steps", c.max_steps},
      {"validate_every", c.validate_every},
      {"max_length", c.max_length},
      {"model", model},
      {"vocab", c.vocab},
      {"init", c.init == StudentInit::teacher ? "teacher" : "random"}};
}

// Every key is optional; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "strategy") {
      c.strategy = parse_strategy(v.get<std::string>());
    } else if (key == "losses") {
      c.losses.clear();
      for (const auto& name : v) c.losses.insert(parse_loss_term(name.get<std::string>()));
    } else if (key == "weights") {
      c.weights.clear();
      for (const auto& [name, w] : v.items()) c.weights[parse_loss_term(name)] = w.get<float>();
    } else if (key == "projection_mode") {
      const auto s = v.get<std::string>();
      if (s == "frozen") c.projection_mode = ProjectionMode::frozen;
      else if (s == "trainable") c.projection_mode = ProjectionMode::trainable;
      else throw std::invalid_argument("train config: projection_mode must be frozen or trainable");
    } else if (key == "objective") {
      const auto s = v.get<std::string>();
      if (s == "kl") c.objective = DistillObjective::kl;
      else if (s == "ce") c.objective = DistillObjective::ce;
      else throw std::invalid_argument("train config: objective must be kl or ce");
    } else if (key == "temperature") c.temperature = v.get<float>();
    else if (key == "mask_prob") c.mask_prob = v.get<float>();
    else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
    else if (key == "accum_steps") c.accum_steps = v.get<std::size_t>();
    else if (key == "peak_lr") c.peak_lr = v.get<double>();
    else if (key == "warmup_steps") c.warmup_steps = v.get<std::size_t>();
    else if (key == "plateau_patience_epochs") c.plateau_patience_epochs = v.get<std::size_t>();
    else if (key == "weight_decay") c.weight_decay = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "epochs") c.epochs = v.get<std::size_t>();
    else if (key == "max_steps") c.max_steps = v.get<std::size_t>();
    else if (key == "validate_every") c.validate_every = v.get<std::size_t>();
    else if (key == "max_length") c.max_length = v.get<std::size_t>();
    else if (key == "model") c.model = v.get<ModelConfig>();
    else if (key == "vocab") c.vocab = v.get<std::string>();
    else if (key == "init") {
      const auto s = v.get<std::string>();
      if (s == "teacher") c.init = StudentInit::teacher;
      else if (s == "random") c.init = StudentInit::random;
      else throw std::invalid_argument("train config: init must be teacher or random");
    } else {
      throw std::invalid_argument("train config: unknown key '" + key + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Batches

struct BatchOptions {
  Strategy strategy = Strategy::match;
  float mask_prob = 0.15f;
  bool with_teacher = false;
  std::size_t max_length = 128;
};

// Every stream is row-major (batch, length) and padded with [PAD]; rows are
// flattened indices b * length + i.
struct Batch {
  std::size_t batch_size = 0;
  std::vector<std::string> texts;

  // Student-tokenized MLM stream, masked.
  std::size_t student_len = 0;
  std::vector<TokenId> student_ids;
  std::vector<float> student_mask;
  std::vector<std::size_t> mlm_rows;
  std::vector<TokenId> mlm_targets;

  // Teacher-tokenized stream, never masked. Empty without a teacher.
  std::size_t teacher_len = 0;
  std::vector<TokenId> teacher_ids;
  std::vector<float> teacher_mask;

  // Teacher sequence re-split by the student vocabulary (reduce only).
  std::size_t aux_len = 0;
  std::vector<TokenId> aux_ids;
  std::vector<float> aux_mask;

  // Distillation rows. Under match, teacher row k pairs with student row
  // distill_student_rows[k]; under reduce it pairs with the sum of aux rows
  // distill_groups[k].
  std::vector<std::size_t> distill_teacher_rows;
  std::vector<std::size_t> distill_student_rows;
  std::vector<std::vector<std::size_t>> distill_groups;

  // Per-sentence alignments, positions relative to the unpadded sequences
  // without [CLS]/[SEP].
  std::vector<MatchAlignment> match_alignments;
  std::vector<ReduceAlignment> reduce_alignments;

  std::size_t truncated = 0;

  bool has_aux() const { return !aux_ids.empty(); }
};

namespace detail {

inline void truncate_seq(TokenizedSequence& seq, std::size_t max_tokens, std::size_t& truncated) {
  if (seq.size() <= max_tokens) return;
  seq.ids.resize(max_tokens);
  seq.spans.resize(max_tokens);
  ++truncated;
}

// Lays out [CLS] seq [SEP] [PAD]... for each sentence.
inline void pad_stream(const std::vector<std::vector<TokenId>>& seqs, const SpecialIds& sp,
                       std::size_t& len, std::vector<TokenId>& ids, std::vector<float>& mask) {
  len = 0;
  for (const auto& s : seqs) len = std::max(len, s.size() + 2);
  ids.assign(seqs.size() * len, sp.pad);
  mask.assign(seqs.size() * len, 0.0f);
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    TokenId* row = ids.data() + b * len;
    row[0] = sp.cls;
    std::copy(seqs[b].begin(), seqs[b].end(), row + 1);
    row[seqs[b].size() + 1] = sp.sep;
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(b * len), seqs[b].size() + 2, 1.0f);
  }
}

}  // namespace detail

// MLM corruption selects each non-special student token with probability
// mask_prob and replaces it by [MASK] (80%), a random non-special token (10%)
// or itself (10%). Distillation terms only see unselected positions.
template <class Rng>
Batch make_batch(std::span<const std::string> texts, const Vocabulary& student_vocab,
                 const Vocabulary* teacher_vocab, const VocabMatch* vocab_match,
                 const BatchOptions& opt, Rng& rng) {
  if (texts.empty()) throw std::invalid_argument("make_batch: no texts");
  if (opt.with_teacher && (teacher_vocab == nullptr || vocab_match == nullptr)) {
    throw std::invalid_argument("make_batch: teacher terms need a teacher vocabulary and match");
  }
  if (opt.max_length < 3) throw std::invalid_argument("make_batch: max_length must be >= 3");
  const std::size_t max_tokens = opt.max_length - 2;
  const bool reduce = opt.with_teacher && uses_reduce(opt.strategy);
  const SpecialIds& ss = student_vocab.specials();

  Batch batch;
  batch.batch_size = texts.size();
  batch.texts.assign(texts.begin(), texts.end());

  std::vector<std::vector<TokenId>> student_seqs, teacher_seqs, aux_seqs;
  std::vector<std::vector<bool>> selected;
  std::bernoulli_distribution pick(static_cast<double>(opt.mask_prob));
  std::uniform_real_distribution<double> how(0.0, 1.0);
  const auto n_regular = static_cast<TokenId>(student_vocab.size() - kNumSpecials);
  std::uniform_int_distribution<TokenId> random_token(0, std::max<TokenId>(n_regular - 1, 0));
  std::vector<TokenId> regular;
  regular.reserve(static_cast<std::size_t>(std::max<TokenId>(n_regular, 0)));
  for (TokenId id = 0; id < static_cast<TokenId>(student_vocab.size()); ++id) {
    if (!student_vocab.is_special(id)) regular.push_back(id);
  }

  for (const std::string& text : texts) {
    TokenizedSequence s = tokenize(student_vocab, text);
    detail::truncate_seq(s, max_tokens, batch.truncated);
    TokenizedSequence t;
    ReduceAlignment ra;
    if (opt.with_teacher) {
      t = tokenize(*teacher_vocab, text);
      detail::truncate_seq(t, max_tokens, batch.truncated);
      if (reduce) {
        ra = reduce_split(t, *teacher_vocab, student_vocab);
        if (ra.aux_size() > max_tokens) {
          // Drop trailing teacher tokens until their split fits.
          std::size_t keep = ra.teacher_size(), used = ra.aux_size();
          while (keep > 0 && used > max_tokens) used -= ra.groups[--keep].size();
          t.ids.resize(keep);
          t.spans.resize(keep);
          ra = reduce_split(t, *teacher_vocab, student_vocab);
          ++batch.truncated;
        }
      }
    }

    std::vector<bool> sel(s.size(), false);
    std::vector<TokenId> corrupted = s.ids;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (student_vocab.is_special(s.ids[i]) || !pick(rng)) continue;
      sel[i] = true;
      const double r = how(rng);
      if (r < 0.8) {
        corrupted[i] = ss.mask;
      } else if (r < 0.9 && n_regular > 0) {
        corrupted[i] = regular[static_cast<std::size_t>(random_token(rng))];
      }
    }
    student_seqs.push_back(std::move(corrupted));
    selected.push_back(sel);

    if (opt.with_teacher) {
      teacher_seqs.push_back(t.ids);
      if (reduce) {
        aux_seqs.push_back(ra.student_ids);
        batch.reduce_alignments.push_back(std::move(ra));
      } else {
        batch.match_alignments.push_back(match_align(t, s, *vocab_match));
      }
    }
    // Keep the uncorrupted ids for targets.
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (sel[i]) batch.mlm_targets.push_back(s.ids[i]);
    }
  }

  detail::pad_stream(student_seqs, ss, batch.student_len, batch.student_ids, batch.student_mask);
  for (std::size_t b = 0; b < selected.size(); ++b) {
    for (std::size_t i = 0; i < selected[b].size(); ++i) {
      if (selected[b][i]) batch.mlm_rows.push_back(b * batch.student_len + i + 1);
    }
  }

  if (opt.with_teacher) {
    detail::pad_stream(teacher_seqs, teacher_vocab->specials(), batch.teacher_len,
                       batch.teacher_ids, batch.teacher_mask);
    if (reduce) {
      detail::pad_stream(aux_seqs, ss, batch.aux_len, batch.aux_ids, batch.aux_mask);
      for (std::size_t b = 0; b < batch.reduce_alignments.size(); ++b) {
        const ReduceAlignment& ra = batch.reduce_alignments[b];
        for (std::size_t i : ra.usable_positions()) {
          batch.distill_teacher_rows.push_back(b * batch.teacher_len + i + 1);
          std::vector<std::size_t> g;
          for (std::size_t k : ra.groups[i]) g.push_back(b * batch.aux_len + k + 1);
          batch.distill_groups.push_back(std::move(g));
        }
      }
    } else {
      for (std::size_t b = 0; b < batch.match_alignments.size(); ++b) {
        for (const auto& [ti, si] : batch.match_alignments[b].seq_pairs) {
          if (selected[b][si]) continue;
          batch.distill_teacher_rows.push_back(b * batch.teacher_len + ti + 1);
          batch.distill_student_rows.push_back(b * batch.student_len + si + 1);
        }
      }
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <class T>
struct AdamMoments {
  std::vector<T> m, v;
};

// One decoupled-decay Adam step for the t-th update (t >= 1).
template <class T>
void adamw_update(std::span<T> param, std::span<const T> grad, AdamMoments<T>& state,
                  std::size_t t, double lr, const AdamWConfig& cfg) {
  if (param.size() != grad.size()) throw ShapeError("adamw_update: parameter/gradient size mismatch");
  if (state.m.size() != param.size()) {
    state.m.assign(param.size(), T(0));
    state.v.assign(param.size(), T(0));
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    const double m = cfg.beta1 * static_cast<double>(state.m[i]) + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * static_cast<double>(state.v[i]) + (1.0 - cfg.beta2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    const double p = static_cast<double>(param[i]) * decay;
    param[i] = static_cast<T>(p - lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps));
  }
}

class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg) : cfg_(cfg) {
    for (auto& p : params) {
      if (p.requires_grad()) params_.push_back(p);
    }
    state_.resize(params_.size());
  }

  // Tensors without a gradient this step are left untouched.
  void step(double lr) {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].has_grad()) continue;
      adamw_update<Real>(params_[i].data(), params_[i].grad(), state_[i], t_, lr, cfg_);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::size_t steps() const { return t_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  AdamWConfig cfg_;
  std::vector<Tensor> params_;
  std::vector<AdamMoments<Real>> state_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Learning-rate schedule

// Linear warmup from 0 to peak over warmup_steps, then constant, halved each
// time `patience` consecutive validations after warmup fail to improve.
class PlateauSchedule {
 public:
  PlateauSchedule(double peak_lr, std::size_t warmup_steps, std::size_t patience = 3,
                  double factor = 0.5)
      : peak_(peak_lr), warmup_(warmup_steps), patience_(patience), factor_(factor),
        current_(peak_lr) {}

  double lr_at(std::size_t step) const {
    if (step < warmup_) return peak_ * static_cast<double>(step) / static_cast<double>(warmup_);
    return current_;
  }

  // Returns true when this observation halved the rate.
  bool observe(std::size_t step, double val_loss) {
    const bool improved = val_loss < best_;
    if (improved) best_ = val_loss;
    if (step < warmup_) return false;
    if (improved) {
      bad_ = 0;
      return false;
    }
    if (++bad_ < patience_) return false;
    bad_ = 0;
    current_ *= factor_;
    return true;
  }

  double best() const { return best_; }
  std::size_t bad_validations() const { return bad_; }

 private:
  double peak_;
  std::size_t warmup_;
  std::size_t patience_;
  double factor_;
  double current_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation

struct MlmEval {
  double loss = 0.0;       // mean over masked tokens
  double accuracy = 0.0;   // top-1 over masked tokens
  std::size_t n_masked = 0;
};

inline MlmEval evaluate_mlm(const ModelParams& params, const ModelConfig& config,
                            const std::vector<Batch>& batches) {
  NoGradGuard no_grad;
  double loss_sum = 0.0;
  std::size_t correct = 0, total = 0;
  for (const Batch& b : batches) {
    if (b.mlm_rows.empty()) continue;
    const auto out = forward(params, config, b.student_ids, b.batch_size, b.student_len,
                             b.student_mask, {.train = false, .compute_logits = false});
    const Tensor flat = reshape(out.hiddens.back(), {b.batch_size * b.student_len, config.hidden});
    const Tensor logits = mlm_head(params, index_select(flat, 0, b.mlm_rows));
    const Tensor logp = log_softmax(logits, 1);
    const std::size_t v = logits.size(1);
    for (std::size_t r = 0; r < b.mlm_rows.size(); ++r) {
      const Real* row = logp.data().data() + r * v;
      const auto target = static_cast<std::size_t>(b.mlm_targets[r]);
      loss_sum -= row[target];
      const auto best = static_cast<std::size_t>(std::max_element(row, row + v) - row);
      correct += best == target ? 1 : 0;
    }
    total += b.mlm_rows.size();
  }
  MlmEval e;
  e.n_masked = total;
  if (total > 0) {
    e.loss = loss_sum / static_cast<double>(total);
    e.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricsRow {
  std::size_t step = 0;
  double lr = 0.0;
  std::map<LossTerm, double> terms;
  double total = 0.0;
  std::optional<double> val_mlm;
  std::optional<double> val_acc;
};

inline constexpr const char* kMetricsHeader =
    "step,lr,mlm,kl,mse_hidden,cosine,mse_attention,total,val_mlm";

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string format_metrics_row(const MetricsRow& r) {
  std::string line = std::to_string(r.step) + "," + format_number(r.lr);
  for (LossTerm t : kAllLossTerms) {
    line += ',';
    if (auto it = r.terms.find(t); it != r.terms.end()) line += format_number(it->second);
  }
  line += "," + format_number(r.total) + ",";
  if (r.val_mlm) line += format_number(*r.val_mlm);
  return line;
}

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Trainer

struct TeacherModel {
  const ModelParams* params = nullptr;
  const ModelConfig* config = nullptr;
  const Vocabulary* vocab = nullptr;
};

struct TrainHooks {
  std::ostream* metrics_csv = nullptr;     // one row per optimizer step
  std::ostream* validation_csv = nullptr;  // step,val_mlm,val_acc
  std::ostream* log = nullptr;             // human-readable progress
  // Called whenever validation MLM loss improves.
  std::function<void(std::size_t step, const ModelParams&, const ProjectionLayer*)> on_improvement;
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::vector<MetricsRow> validations;
  std::size_t steps = 0;
  std::size_t truncated = 0;
  std::optional<MlmEval> best_validation;
  MlmEval final_validation;
};

class Trainer {
 public:
  Trainer(TrainConfig config, ModelParams& student, const ModelConfig& student_config,
          const Vocabulary& student_vocab, TeacherModel teacher = {})
      : cfg_(std::move(config)), student_(student), student_cfg_(student_config),
        student_vocab_(student_vocab), teacher_(teacher) {
    cfg_.validate();
    student_cfg_.validate();
    if (student_cfg_.vocab_size != student_vocab_.size()) {
      throw std::invalid_argument("trainer: student config vocab_size does not match its vocabulary");
    }
    if (cfg_.max_length > student_cfg_.max_positions) {
      throw std::invalid_argument("trainer: max_length exceeds the student's max_positions");
    }
    if (cfg_.needs_teacher()) {
      if (!teacher_.params || !teacher_.config || !teacher_.vocab) {
        throw std::invalid_argument("trainer: distillation terms need a teacher");
      }
      if (cfg_.max_length > teacher_.config->max_positions) {
        throw std::invalid_argument("trainer: max_length exceeds the teacher's max_positions");
      }
      match_ = vocab_intersection(*teacher_.vocab, student_vocab_);
      if (cfg_.losses.contains(LossTerm::mse_attention)) {
        if (teacher_.vocab->tokens() != student_vocab_.tokens()) {
          throw std::invalid_argument("trainer: mse_attention needs identical teacher and student vocabularies");
        }
        if (teacher_.config->n_heads != student_cfg_.n_heads) {
          throw std::invalid_argument("trainer: mse_attention needs equal head counts");
        }
        if (teacher_.config->n_layers % student_cfg_.n_layers != 0) {
          throw std::invalid_argument("trainer: teacher layers must be a multiple of student layers for mse_attention");
        }
      }
      if (cfg_.needs_projection()) {
        std::mt19937_64 proj_rng(cfg_.seed ^ 0x9E3779B97F4A7C15ULL);
        projection_ = make_projection(student_cfg_.hidden, teacher_.config->hidden,
                                      cfg_.projection_mode, proj_rng);
      }
    }
  }

  const TrainConfig& config() const { return cfg_; }
  const std::optional<ProjectionLayer>& projection() const { return projection_; }
  const std::optional<VocabMatch>& vocab_match() const { return match_; }

  std::vector<Tensor> trainable_parameters() const {
    std::vector<Tensor> out = student_.parameters();
    if (projection_ && projection_->mode == ProjectionMode::trainable) {
      out.push_back(projection_->weight);
      out.push_back(projection_->bias);
    }
    return out;
  }

  BatchOptions batch_options(bool with_teacher) const {
    return BatchOptions{cfg_.strategy, cfg_.mask_prob, with_teacher && cfg_.needs_teacher(),
                        cfg_.max_length};
  }

  template <class Rng>
  Batch make_batch(std::span<const std::string> texts, Rng& rng, bool with_teacher = true) const {
    return vocadistill::make_batch(texts, student_vocab_, teacher_.vocab,
                                   match_ ? &*match_ : nullptr, batch_options(with_teacher), rng);
  }

  // Loss terms for one micro-batch. rng drives dropout when train is set.
  LossBundle compute_losses(const Batch& b, bool train, std::mt19937_64* rng) const {
    const std::size_t ds = student_cfg_.hidden;
    std::map<LossTerm, Tensor> terms;
    const bool need_attn = cfg_.losses.contains(LossTerm::mse_attention);
    const ForwardOptions fopt{.train = train, .compute_logits = false, .rng = rng};
    const ForwardOutput main =
        forward(student_, student_cfg_, b.student_ids, b.batch_size, b.student_len, b.student_mask, fopt);
    const Tensor main_flat = reshape(main.hiddens.back(), {b.batch_size * b.student_len, ds});

    if (cfg_.losses.contains(LossTerm::mlm)) {
      std::vector<std::size_t> local(b.mlm_rows.size());
      std::iota(local.begin(), local.end(), 0);
      const Tensor rows = b.mlm_rows.empty() ? main_flat : index_select(main_flat, 0, b.mlm_rows);
      terms[LossTerm::mlm] = b.mlm_rows.empty()
                                 ? scale(sum_all(rows), 0.0f)
                                 : mlm_loss(mlm_head(student_, rows), local, b.mlm_targets);
    }

    if (cfg_.needs_teacher()) {
      if (b.teacher_ids.empty()) throw std::invalid_argument("trainer: batch has no teacher stream");
      const ModelConfig& tc = *teacher_.config;
      ForwardOutput tout;
      Tensor t_last, t_logits, t_avg;
      {
        NoGradGuard no_grad;
        tout = forward(*teacher_.params, tc, b.teacher_ids, b.batch_size, b.teacher_len,
                       b.teacher_mask, {.train = false, .compute_logits = false});
        const Tensor flat = reshape(tout.hiddens.back(), {b.batch_size * b.teacher_len, tc.hidden});
        if (cfg_.losses.contains(LossTerm::kl)) {
          t_logits = gather_matched_logits(
              mlm_head(*teacher_.params, index_select(flat, 0, b.distill_teacher_rows)),
              match_->teacher_columns());
        }
        if (cfg_.needs_projection()) {
          t_avg = index_select(reshape(mean_layer_output(tout.hiddens),
                                       {b.batch_size * b.teacher_len, tc.hidden}),
                               0, b.distill_teacher_rows);
        }
      }
      const auto s_cols = match_->student_columns();

      // Student rows aligned to distill_teacher_rows, for a given per-token
      // (B * len, width) student tensor on the distillation stream.
      std::optional<ForwardOutput> aux;
      if (uses_reduce(cfg_.strategy)) {
        aux = forward(student_, student_cfg_, b.aux_ids, b.batch_size, b.aux_len, b.aux_mask, fopt);
      }
      // Rows needed from the distillation stream, and how to combine them.
      std::vector<std::size_t> needed;
      std::vector<std::vector<std::size_t>> local_groups;
      if (aux) {
        std::map<std::size_t, std::size_t> where;
        for (const auto& g : b.distill_groups) {
          for (std::size_t r : g) where.emplace(r, 0);
        }
        for (auto& [r, idx] : where) {
          idx = needed.size();
          needed.push_back(r);
        }
        for (const auto& g : b.distill_groups) {
          std::vector<std::size_t> lg;
          for (std::size_t r : g) lg.push_back(where.at(r));
          local_groups.push_back(std::move(lg));
        }
      } else {
        needed = b.distill_student_rows;
      }
      const std::size_t stream_len = aux ? b.aux_len : b.student_len;
      const ForwardOutput& stream = aux ? *aux : main;
      auto align_rows = [&](const Tensor& rows) {
        return aux ? reduce_aggregate(rows, local_groups) : rows;
      };

      if (cfg_.losses.contains(LossTerm::kl)) {
        const Tensor flat = reshape(stream.hiddens.back(), {b.batch_size * stream_len, ds});
        // Head first, then reduce: groups sum pre-softmax outputs.
        const Tensor s_logits = align_rows(mlm_head(student_, index_select(flat, 0, needed)));
        terms[LossTerm::kl] = distill_kl_loss(t_logits, gather_matched_logits(s_logits, s_cols),
                                              cfg_.temperature, cfg_.objective);
      }
      if (cfg_.needs_projection()) {
        const Tensor s_avg = reshape(mean_layer_output(stream.hiddens), {b.batch_size * stream_len, ds});
        const Tensor s_proj = project_hiddens(*projection_, align_rows(index_select(s_avg, 0, needed)));
        if (cfg_.losses.contains(LossTerm::mse_hidden)) {
          terms[LossTerm::mse_hidden] = mse_hidden_loss(t_avg, s_proj);
        }
        if (cfg_.losses.contains(LossTerm::cosine)) {
          terms[LossTerm::cosine] = cosine_hidden_loss(
              t_avg, s_proj, checked_mode() ? ZeroNormPolicy::error : ZeroNormPolicy::skip);
        }
      }
      if (need_attn) {
        std::vector<Tensor> t_attn;
        for (const Tensor& a : tout.attentions) t_attn.push_back(a.detach());
        terms[LossTerm::mse_attention] = mse_attention_loss(t_attn, main.attentions);
      }
    }

    std::map<LossTerm, float> weights;
    for (const auto& [t, v] : terms) weights[t] = cfg_.weight(t);
    return combine(std::move(terms), std::move(weights));
  }

  // Splits every 20th sentence off for validation.
  static std::pair<std::vector<std::string>, std::vector<std::string>> split_corpus(
      const std::vector<std::string>& corpus) {
    std::vector<std::string> train, val;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      (i % 20 == 19 ? val : train).push_back(corpus[i]);
    }
    if (val.empty() && train.size() > 1) {
      val.push_back(train.back());
      train.pop_back();
    }
    return {std::move(train), std::move(val)};
  }

  std::vector<Batch> validation_batches(const std::vector<std::string>& val) const {
    std::mt19937_64 rng(cfg_.seed ^ 0xA5A5A5A5DEADBEEFULL);
    std::vector<Batch> out;
    const std::size_t bs = std::max<std::size_t>(cfg_.batch_size, 16);
    for (std::size_t i = 0; i < val.size(); i += bs) {
      const std::size_t n = std::min(bs, val.size() - i);
      out.push_back(make_batch(std::span<const std::string>(val).subspan(i, n), rng, false));
    }
    return out;
  }

  TrainResult run(const std::vector<std::string>& corpus, const TrainHooks& hooks = {}) {
    auto [train_set, val_set] = split_corpus(corpus);
    if (train_set.empty()) throw std::invalid_argument("trainer: corpus has no training sentences");
    const std::vector<Batch> val_batches = validation_batches(val_set);

    std::mt19937_64 data_rng(cfg_.seed);
    std::mt19937_64 dropout_rng(cfg_.seed + 1);
    AdamW opt(trainable_parameters(),
              AdamWConfig{0.9, 0.999, 1e-8, cfg_.weight_decay});
    PlateauSchedule schedule(cfg_.peak_lr, cfg_.warmup_steps, cfg_.plateau_patience_epochs);

    const std::size_t per_step = cfg_.batch_size * cfg_.accum_steps;
    const std::size_t steps_per_epoch = (train_set.size() + per_step - 1) / per_step;
    std::size_t total_steps = cfg_.epochs * steps_per_epoch;
    if (cfg_.max_steps > 0) total_steps = cfg_.epochs == 0 ? cfg_.max_steps : std::min(total_steps, cfg_.max_steps);
    const std::size_t validate_every = cfg_.validate_every > 0 ? cfg_.validate_every : steps_per_epoch;

    if (hooks.metrics_csv) *hooks.metrics_csv << kMetricsHeader << '\n';
    if (hooks.validation_csv) *hooks.validation_csv << "step,val_mlm,val_acc\n";

    TrainResult result;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();

    for (std::size_t step = 0; step < total_steps; ++step) {
      opt.zero_grad();
      MetricsRow row;
      row.step = step + 1;
      row.lr = schedule.lr_at(step);
      for (std::size_t micro = 0; micro < cfg_.accum_steps; ++micro) {
        std::vector<std::string> texts;
        while (texts.size() < cfg_.batch_size) {
          if (cursor == order.size()) {
            std::shuffle(order.begin(), order.end(), data_rng);
            cursor = 0;
          }
          texts.push_back(train_set[order[cursor++]]);
        }
        const Batch batch = make_batch(texts, data_rng);
        result.truncated += batch.truncated;
        const LossBundle losses = compute_losses(batch, true, &dropout_rng);
        const double total = losses.total.item();
        if (!std::isfinite(total)) throw DivergenceError(divergence_report(step + 1, batch, losses));
        for (const auto& [t, v] : losses.terms) row.terms[t] += v.item() / static_cast<double>(cfg_.accum_steps);
        row.total += total / static_cast<double>(cfg_.accum_steps);
        if (losses.total.requires_grad()) losses.total.backward();
      }
      opt.step(row.lr);
      result.steps = step + 1;

      const bool last = step + 1 == total_steps;
      if ((step + 1) % validate_every == 0 || last) {
        const MlmEval ev = evaluate_mlm(student_, student_cfg_, val_batches);
        row.val_mlm = ev.loss;
        row.val_acc = ev.accuracy;
        result.final_validation = ev;
        const bool improved = !result.best_validation || ev.loss < result.best_validation->loss;
        schedule.observe(step + 1, ev.loss);
        if (improved) {
          result.best_validation = ev;
          if (hooks.on_improvement) hooks.on_improvement(step + 1, student_, projection_ ? &*projection_ : nullptr);
        }
        if (hooks.validation_csv) {
          *hooks.validation_csv << row.step << ',' << format_number(ev.loss) << ','
                                << format_number(ev.accuracy) << '\n';
        }
        if (hooks.log) {
          *hooks.log << "step " << row.step << "/" << total_steps << " lr " << format_number(row.lr)
                     << " loss " << format_number(row.total) << " val_mlm " << format_number(ev.loss)
                     << " val_acc " << format_number(ev.accuracy) << '\n';
        }
        result.validations.push_back(row);
      }
      if (hooks.metrics_csv) *hooks.metrics_csv << format_metrics_row(row) << '\n';
      result.metrics.push_back(std::move(row));
    }
    return result;
  }

 private:
  static std::string divergence_report(std::size_t step, const Batch& b, const LossBundle& losses) {
    std::ostringstream os;
    os << "non-finite training loss at step " << step << ":";
    for (const auto& [t, v] : losses.terms) os << ' ' << to_string(t) << '=' << v.item();
    os << "\noffending batch:";
    for (const auto& text : b.texts) os << "\n  " << text;
    return os.str();
  }

  TrainConfig cfg_;
  ModelParams& student_;
  ModelConfig student_cfg_;
  const Vocabulary& student_vocab_;
  TeacherModel teacher_;
  std::optional<VocabMatch> match_;
  std::optional<ProjectionLayer> projection_;
};

}  // namespace vocadistill
