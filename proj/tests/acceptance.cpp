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

// Acceptance suite: prints one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "support.hpp"
#include "vocadistill/alignment.hpp"
#include "vocadistill/losses.hpp"
#include "vocadistill/model.hpp"
#include "vocadistill/synthetic_corpus.hpp"
#include "vocadistill/trainer.hpp"

namespace vd = vocadistill;
namespace vt = vocadistill::testing;
namespace fs = std::filesystem;
using vd::LossTerm;
using vd::Real;
using vd::Tensor;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::trunc);
  f << text;
}

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome spawn(const std::string& exe, const std::vector<std::string>& args, const fs::path& scratch) {
  std::string cmd = quote(exe);
  for (const auto& a : args) cmd += " " + quote(a);
  const fs::path out = scratch / "spawn_stdout.txt";
  cmd += " > " + quote(out.string()) + " 2> " + quote((scratch / "spawn_stderr.txt").string());
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string join_corpus(const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& s : lines) text += s + "\n";
  return text;
}

// ---------------------------------------------------------------------------
// 1. Parameter accounting

Verdict parameter_accounting() {
  vt::TempDir dir;
  const std::vector<std::pair<std::string, double>> published{
      {"teacher", 177.9},      {"distil-base", 135.5},  {"distil-small", 107.1}, {"distil-tiny30", 10.4},
      {"distil-tiny20", 7.6},  {"distil-tiny10", 5.0},  {"distil-tiny5", 3.6}};
  Verdict v{true, ""};
  double worst = 0.0;
  for (const auto& [preset, millions] : published) {
    const auto o = spawn(VOCADISTILL_CLI_PATH, {"report", "params", "--preset", preset}, dir.path());
    const auto at = o.out.find("total_params ");
    if (o.code != 0 || at == std::string::npos) return {false, preset + ": report params failed"};
    const double got = std::stod(o.out.substr(at + 13)) / 1e6;
    const double rel = std::abs(got - millions) / millions;
    worst = std::max(worst, rel);
    if (rel > 0.05) v.pass = false;
    v.detail += preset + "=" + fmt("%.2f", got) + "M ";
  }
  v.detail += "worst relative deviation " + fmt("%.4f", worst) + " (limit 0.05)";
  return v;
}

// ---------------------------------------------------------------------------
// 2. Shape contracts

Verdict shape_contracts() {
  std::mt19937_64 rng(2002);
  std::uniform_int_distribution<std::size_t> extra_t(0, 40), extra_s(0, 20), words(1, 8), dim(1, 16);
  std::uniform_real_distribution<double> keep(0.4, 1.0);
  std::size_t violations = 0;
  const std::size_t cases = 1000;
  for (std::size_t c = 0; c < cases; ++c) {
    const auto tv = vt::random_vocab(rng, extra_t(rng));
    const auto sv = vt::random_vocab(rng, extra_s(rng), keep(rng));
    const std::string text = vt::random_text(rng, words(rng));
    const auto ts = vd::tokenize(tv, text);
    const auto ss = vd::tokenize(sv, text);
    const std::size_t xt = ts.size(), xs = ss.size(), d = dim(rng);
    const std::size_t vtn = tv.size(), vsn = sv.size();
    const auto vm = vd::vocab_intersection(tv, sv);
    const std::size_t vmatch = vm.all_pairs().size();
    auto expect = [&](const Tensor& t, vd::Shape s) { violations += t.shape() == s ? 0 : 1; };

    // match: rows at matched positions, columns at shared entries.
    const auto m = vd::match_align(ts, ss, vm);
    const std::size_t n = m.n_match();
    if (n > std::min(xt, xs) || vmatch > std::min(vtn, vsn)) ++violations;
    const Tensor t_logits = Tensor::zeros({xt, vtn});
    const Tensor s_logits = Tensor::zeros({xs, vsn});
    const auto tp = m.teacher_positions();
    const auto sp = m.student_positions();
    const auto tc = vm.teacher_columns();
    const auto sc = vm.student_columns();
    expect(vd::gather_matched_logits(vd::index_select(t_logits, 0, tp), tc), {n, vmatch});
    expect(vd::gather_matched_logits(vd::index_select(s_logits, 0, sp), sc), {n, vmatch});
    expect(vd::index_select(Tensor::zeros({xs, d}), 0, sp), {n, d});

    // reduce: auxiliary rows summed back to teacher length.
    const auto r = vd::reduce_split(ts, tv, sv);
    const std::size_t aux = r.aux_size();
    if (r.teacher_size() != xt || aux < xt) ++violations;
    expect(vd::reduce_aggregate(Tensor::zeros({aux, d}), r), {xt, d});

    // reduce-match: reduce over rows, then match over columns.
    const Tensor aux_logits = vd::reduce_aggregate(Tensor::zeros({aux, vsn}), r);
    expect(aux_logits, {xt, vsn});
    expect(vd::gather_matched_logits(aux_logits, sc), {xt, vmatch});
    expect(vd::gather_matched_logits(t_logits, tc), {xt, vmatch});
  }
  return {violations == 0, std::to_string(cases) + " cases, " + std::to_string(violations) + " shape violations"};
}

// ---------------------------------------------------------------------------
// 3. Alignment oracle equivalence

Verdict oracle_equivalence() {
  std::mt19937_64 rng(3003);
  std::uniform_int_distribution<std::size_t> extra(0, 30), words(1, 6), dim(1, 8);
  std::uniform_real_distribution<double> keep(0.3, 1.0);
  const std::size_t cases = 500;
  std::size_t match_bad = 0, split_bad = 0, agg_bad = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    const auto tv = vt::random_vocab(rng, extra(rng), keep(rng));
    auto sv = vt::random_vocab(rng, extra(rng), keep(rng));
    // Disjoint vocabularies are rejected by design; draw until they overlap.
    while (!vt::shares_regular_token(tv, sv)) sv = vt::random_vocab(rng, extra(rng), keep(rng));
    const std::string text = vt::random_text(rng, words(rng));
    const auto ts = vd::tokenize(tv, text);
    const auto ss = vd::tokenize(sv, text);
    if (vd::match_align(ts, ss, vd::vocab_intersection(tv, sv)).seq_pairs != vt::quadratic_match(ts, tv, ss, sv)) {
      ++match_bad;
    }
  }
  for (std::size_t c = 0; c < cases; ++c) {
    const auto tv = vt::random_vocab(rng, extra(rng));
    const auto sv = vt::random_vocab(rng, extra(rng), keep(rng));
    const auto ts = vd::tokenize(tv, vt::random_text(rng, words(rng)));
    const auto r = vd::reduce_split(ts, tv, sv);
    std::vector<vd::TokenId> want;
    std::vector<std::vector<std::size_t>> groups;
    std::vector<bool> unk;
    for (vd::TokenId id : ts.ids) {
      std::vector<vd::TokenId> piece;
      bool is_unk = false;
      if (tv.is_special(id)) {
        piece.push_back(vd::map_special(tv, sv, id));
        is_unk = id == tv.specials().unk;
      } else {
        const std::string tok(tv.token(id));
        if (auto split = vt::exhaustive_greedy_split(std::string(tv.strip(tok)), !tv.is_continuation(tok), sv)) {
          piece = *split;
        } else {
          piece.push_back(sv.specials().unk);
          is_unk = true;
        }
      }
      groups.emplace_back();
      for (vd::TokenId p : piece) {
        groups.back().push_back(want.size());
        want.push_back(p);
      }
      unk.push_back(is_unk);
    }
    if (r.student_ids != want || r.groups != groups || r.unk != unk) ++split_bad;
  }
  for (std::size_t c = 0; c < cases; ++c) {
    std::uniform_int_distribution<std::size_t> n_groups(1, 10), size(1, 4);
    std::vector<std::vector<std::size_t>> groups;
    std::size_t n = 0;
    const std::size_t g = n_groups(rng);
    for (std::size_t i = 0; i < g; ++i) {
      groups.emplace_back();
      for (std::size_t k = size(rng); k > 0; --k) groups.back().push_back(n++);
    }
    const std::size_t d = dim(rng);
    const Tensor rows = vt::random_tensor({n, d}, rng);
    if (vd::reduce_aggregate(rows, groups).values() != vt::grouping_matrix_product(groups, n, rows.values(), d)) {
      ++agg_bad;
    }
  }
  const bool pass = match_bad == 0 && split_bad == 0 && agg_bad == 0;
  return {pass, "disagreements over " + std::to_string(cases) + " cases each: match " + std::to_string(match_bad) +
                    ", split " + std::to_string(split_bad) + ", aggregate " + std::to_string(agg_bad)};
}

// ---------------------------------------------------------------------------
// 4. Reduce concatenation invariant

Verdict concatenation_invariant() {
  std::mt19937_64 rng(4004);
  std::uniform_int_distribution<std::size_t> len(1, 9), extra(0, 25);
  std::uniform_real_distribution<double> keep(0.2, 1.0);
  std::bernoulli_distribution continuation(0.4);
  const std::size_t cases = 10000;
  std::size_t violations = 0, flagged = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::string word = vt::random_word(rng, len(rng), "abcdef");
    const std::string tok = continuation(rng) ? "##" + word : word;
    const auto tv = vt::make_vocab({tok});
    const auto sv = vt::random_vocab(rng, extra(rng), keep(rng), "abcdef");
    const auto split = vd::split_teacher_token(tok, tv, sv);
    if (!split) {
      ++flagged;
      // Flagging is only allowed when no segmentation exists at all.
      if (vt::exhaustive_greedy_split(word, !tv.is_continuation(tok), sv)) ++violations;
      continue;
    }
    std::string joined;
    for (std::size_t k = 0; k < split->size(); ++k) {
      const auto piece = sv.token((*split)[k]);
      const bool initial_piece = k == 0 && !tv.is_continuation(tok);
      if (sv.is_continuation(piece) == initial_piece) ++violations;
      joined += sv.strip(piece);
    }
    if (joined != word) ++violations;
  }
  return {violations == 0, std::to_string(cases) + " pairs, " + std::to_string(flagged) + " flagged UNK, " +
                               std::to_string(violations) + " violations"};
}

// ---------------------------------------------------------------------------
// 5. Gradient checks (double-precision helper)

Verdict gradient_checks() {
  vt::TempDir dir;
  const auto t0 = std::chrono::steady_clock::now();
  const auto o = spawn(VOCADISTILL_GRADCHECK_PATH, {}, dir.path());
  const double elapsed = seconds_since(t0);
  std::string summary = "no summary";
  if (auto at = o.out.find("summary "); at != std::string::npos) {
    summary = o.out.substr(at + 8, o.out.find('\n', at) - at - 8);
  }
  std::string failures;
  std::istringstream lines(o.out);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("FAIL", 0) == 0) failures += " [" + line.substr(5) + "]";
  }
  return {o.code == 0 && elapsed < 60.0,
          summary + ", " + fmt("%.2f", elapsed) + " s (limit 60 s)" + failures};
}

// ---------------------------------------------------------------------------
// 6. Loss identities

Verdict loss_identities() {
  std::mt19937_64 rng(6006);
  std::uniform_int_distribution<std::size_t> rows(1, 8), cols(2, 40);
  double kl_self = 0.0, ce_gap = 0.0, cos_err = 0.0, mlm_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = rows(rng), v = cols(rng);
    const Tensor t = vt::random_tensor({n, v}, rng, 3.0f);
    const Tensor s = vt::random_tensor({n, v}, rng, 3.0f);
    kl_self = std::max(kl_self, std::abs(double(vd::distill_kl_loss(t, t).item())));
    double entropy = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      double m = -INFINITY, z = 0.0;
      for (std::size_t j = 0; j < v; ++j) m = std::max(m, double(t.data()[r * v + j]));
      for (std::size_t j = 0; j < v; ++j) z += std::exp(double(t.data()[r * v + j]) - m);
      for (std::size_t j = 0; j < v; ++j) {
        const double lp = double(t.data()[r * v + j]) - m - std::log(z);
        entropy -= std::exp(lp) * lp;
      }
    }
    entropy /= double(n);
    const double ce = vd::distill_kl_loss(t, s, 1.0f, vd::DistillObjective::ce).item();
    const double kl = vd::distill_kl_loss(t, s, 1.0f, vd::DistillObjective::kl).item();
    ce_gap = std::max(ce_gap, std::abs(ce - kl - entropy));

    // Parallel, orthogonal and anti-parallel rows.
    const std::size_t d = cols(rng);
    const Tensor a = vt::random_tensor({1, d}, rng);
    std::uniform_real_distribution<float> pos(0.1f, 10.0f);
    const Real k = pos(rng);
    Tensor ortho = vt::random_tensor({1, d}, rng);
    double dot = 0.0, na = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += double(a.data()[j]) * ortho.data()[j];
      na += double(a.data()[j]) * a.data()[j];
    }
    for (std::size_t j = 0; j < d; ++j) ortho.data()[j] -= static_cast<Real>(dot / na * a.data()[j]);
    cos_err = std::max({cos_err, std::abs(vd::cosine_hidden_loss(a, vd::scale(a, k)).item() - 0.0),
                        std::abs(vd::cosine_hidden_loss(a, ortho).item() - 1.0),
                        std::abs(vd::cosine_hidden_loss(a, vd::scale(a, -k)).item() - 2.0)});

    std::vector<std::size_t> positions(n);
    std::vector<vd::TokenId> targets(n);
    std::uniform_int_distribution<vd::TokenId> id(0, static_cast<vd::TokenId>(v - 1));
    for (std::size_t r = 0; r < n; ++r) {
      positions[r] = r;
      targets[r] = id(rng);
    }
    std::uniform_real_distribution<float> level(-5.0f, 5.0f);
    const Tensor uniform = Tensor::full({n, v}, level(rng));
    mlm_err = std::max(mlm_err, std::abs(vd::mlm_loss(uniform, positions, targets).item() - std::log(double(v))));
  }
  const bool pass = kl_self <= 1e-9 && ce_gap <= 1e-6 && cos_err <= 1e-6 && mlm_err <= 1e-6;
  return {pass, "KL(p||p) " + fmt("%.2e", kl_self) + " (<=1e-9), CE-KL-H " + fmt("%.2e", ce_gap) +
                    " (<=1e-6), cosine " + fmt("%.2e", cos_err) + " (<=1e-6), uniform MLM " +
                    fmt("%.2e", mlm_err) + " (<=1e-6)"};
}

// ---------------------------------------------------------------------------
// 7. Initialization fidelity

Verdict init_fidelity() {
  const auto corpus = vd::synthetic_corpus(20000, 7);
  const auto vocab = vd::build_vocab(std::string_view(join_corpus(corpus)), 200);
  vd::ModelConfig c{2, 32, 4, 64, vocab.size(), 64, 0.1f};
  std::mt19937_64 rng(7007);
  const auto teacher = vd::init_model(c, rng);
  vd::ModelParams student;
  student.token_embeddings = vd::init_student_embeddings(teacher.token_embeddings, vocab, vocab, c.hidden, rng);
  student.layers = vd::init_student_layers(teacher, c);
  const auto full = vd::init_student(teacher, vocab, c, vocab, rng);
  student.position_embeddings = full.position_embeddings;
  student.embed_ln_gamma = full.embed_ln_gamma;
  student.embed_ln_beta = full.embed_ln_beta;
  student.head_weight = full.head_weight;
  student.head_bias = full.head_bias;
  student.head_ln_gamma = full.head_ln_gamma;
  student.head_ln_beta = full.head_ln_beta;
  student.output_bias = full.output_bias;

  double worst = 0.0;
  const std::size_t batches = 20, batch = 4, length = 24;
  std::uniform_int_distribution<vd::TokenId> id(0, static_cast<vd::TokenId>(vocab.size() - 1));
  std::uniform_int_distribution<std::size_t> real_len(1, length);
  for (std::size_t b = 0; b < batches; ++b) {
    std::vector<vd::TokenId> ids(batch * length);
    std::vector<float> mask(batch * length, 0.0f);
    for (std::size_t r = 0; r < batch; ++r) {
      const std::size_t n = real_len(rng);
      for (std::size_t i = 0; i < length; ++i) {
        ids[r * length + i] = i < n ? id(rng) : vocab.specials().pad;
        mask[r * length + i] = i < n ? 1.0f : 0.0f;
      }
    }
    const auto t = vd::forward(teacher, c, ids, batch, length, mask);
    const auto s = vd::forward(student, c, ids, batch, length, mask);
    for (std::size_t i = 0; i < t.logits.numel(); ++i) {
      worst = std::max(worst, std::abs(double(t.logits.data()[i]) - double(s.logits.data()[i])));
    }
  }
  return {worst <= 1e-6, std::to_string(batches) + " batches, max abs logit diff " + fmt("%.3e", worst) +
                             " (limit 1e-6)"};
}

// ---------------------------------------------------------------------------
// 8. Desk-scale distillation trend

Verdict distillation_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto corpus = vd::synthetic_corpus(200000, 8);
  const std::string text = join_corpus(corpus);
  const auto tv = vd::build_vocab(std::string_view(text), 512);
  const auto sv = vd::build_vocab(std::string_view(text), 256);

  vd::ModelConfig tc{4, 64, 4, 256, tv.size(), 64, 0.1f};
  std::mt19937_64 init_rng(8008);
  auto teacher = vd::init_model(tc, init_rng);
  vd::TrainConfig pre;
  pre.batch_size = 32;
  pre.accum_steps = 1;
  pre.max_steps = 2000;
  pre.epochs = 0;
  pre.peak_lr = 1e-3;
  pre.warmup_steps = 100;
  pre.validate_every = 250;
  pre.max_length = 64;
  pre.seed = 8;
  vd::Trainer teacher_trainer(pre, teacher, tc, tv);
  const auto tres = teacher_trainer.run(corpus);
  teacher.set_requires_grad(false);

  vd::ModelConfig sc{2, 32, 4, 128, sv.size(), 64, 0.1f};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  double acc_mlm = 0.0, acc_kl = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : seeds) {
    double acc[2];
    for (int with_kl = 0; with_kl < 2; ++with_kl) {
      std::mt19937_64 rng(seed);
      auto student = vd::init_student(teacher, tv, sc, sv, rng);
      vd::TrainConfig cfg = pre;
      cfg.batch_size = 16;
      cfg.max_steps = 1000;
      cfg.warmup_steps = 50;
      cfg.validate_every = 200;
      cfg.seed = seed;
      cfg.strategy = vd::Strategy::match;
      cfg.losses = with_kl ? std::set<LossTerm>{LossTerm::mlm, LossTerm::kl} : std::set<LossTerm>{LossTerm::mlm};
      vd::Trainer trainer(cfg, student, sc, sv, {&teacher, &tc, &tv});
      acc[with_kl] = trainer.run(corpus).final_validation.accuracy;
    }
    acc_mlm += acc[0] / double(seeds.size());
    acc_kl += acc[1] / double(seeds.size());
    per_seed += " seed" + std::to_string(seed) + " " + fmt("%.4f", acc[0]) + "/" + fmt("%.4f", acc[1]);
  }
  const double elapsed = seconds_since(t0);
  return {acc_kl > acc_mlm,
          "teacher val acc " + fmt("%.4f", tres.final_validation.accuracy) + "; mean val acc {mlm} " +
              fmt("%.4f", acc_mlm) + " vs {mlm,kl} " + fmt("%.4f", acc_kl) + ";" + per_seed + "; " +
              fmt("%.0f", elapsed) + " s"};
}

// ---------------------------------------------------------------------------
// 9. Schedule conformance

Verdict schedule_conformance() {
  const double peak = 5e-4;
  const std::size_t warmup = 100;
  vd::PlateauSchedule s(peak, warmup, 3);
  std::size_t ramp_bad = 0;
  for (std::size_t step = 0; step <= warmup; ++step) {
    const double want = step < warmup ? peak * static_cast<double>(step) / static_cast<double>(warmup) : peak;
    ramp_bad += s.lr_at(step) == want ? 0 : 1;
  }
  // Scripted validations after warmup: one improvement, then three misses.
  std::vector<double> trace;
  const std::vector<double> losses{2.0, 2.1, 2.2, 2.05, 1.9};
  for (std::size_t k = 0; k < losses.size(); ++k) {
    s.observe(warmup + 10 * (k + 1), losses[k]);
    trace.push_back(s.lr_at(warmup + 10 * (k + 1) + 1));
  }
  const bool halving = trace == std::vector<double>{peak, peak, peak, peak / 2, peak / 2};

  // The trainer logs the same closed-form ramp.
  const auto corpus = vd::synthetic_corpus(8000, 9);
  const auto vocab = vd::build_vocab(std::string_view(join_corpus(corpus)), 120);
  vd::ModelConfig c{1, 16, 2, 32, vocab.size(), 64, 0.1f};
  std::mt19937_64 rng(9);
  auto params = vd::init_model(c, rng);
  vd::TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.accum_steps = 1;
  cfg.max_steps = 12;
  cfg.epochs = 0;
  cfg.warmup_steps = 10;
  cfg.peak_lr = peak;
  cfg.max_length = 48;
  vd::Trainer trainer(cfg, params, c, vocab);
  const auto res = trainer.run(corpus);
  std::size_t logged_bad = 0;
  for (const auto& row : res.metrics) {
    const std::size_t step = row.step - 1;
    const double want = step < 10 ? peak * static_cast<double>(step) / 10.0 : peak;
    logged_bad += row.lr == want ? 0 : 1;
  }
  return {ramp_bad == 0 && halving && logged_bad == 0,
          "ramp mismatches " + std::to_string(ramp_bad) + ", trainer lr mismatches " + std::to_string(logged_bad) +
              ", halved after exactly 3 non-improving validations: " + (halving ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 10. Determinism of `distill run`

Verdict determinism() {
  vt::TempDir dir;
  write(dir / "corpus.txt", join_corpus(vd::synthetic_corpus(15000, 10)));
  write(dir / "teacher.json", R"({
    "losses": ["mlm"], "batch_size": 8, "accum_steps": 1, "max_steps": 20, "epochs": 0,
    "validate_every": 10, "warmup_steps": 5, "max_length": 64, "seed": 10,
    "model": {"n_layers": 2, "hidden": 32, "n_heads": 4, "ffn_dim": 64, "vocab_size": 200, "max_positions": 64}
  })");
  const std::string cli = VOCADISTILL_CLI_PATH;
  if (spawn(cli, {"vocab", "build", "--corpus", (dir / "corpus.txt").string(), "--size", "100", "--out",
                  (dir / "student.txt").string()}, dir.path()).code != 0) {
    return {false, "vocab build failed"};
  }
  if (spawn(cli, {"pretrain-teacher", "--corpus", (dir / "corpus.txt").string(), "--config",
                  (dir / "teacher.json").string(), "--out", (dir / "teacher").string()}, dir.path()).code != 0) {
    return {false, "pretrain-teacher failed"};
  }
  write(dir / "student.json", R"({
    "losses": ["mlm", "kl", "mse_hidden"], "strategy": "reduce-match", "projection_mode": "trainable",
    "vocab": "student.txt", "batch_size": 4, "accum_steps": 2, "max_steps": 15, "epochs": 0,
    "validate_every": 5, "warmup_steps": 3, "max_length": 64, "seed": 21,
    "model": {"n_layers": 1, "hidden": 16, "n_heads": 4, "ffn_dim": 32, "max_positions": 64}
  })");
  std::string metrics[2];
  for (int k = 0; k < 2; ++k) {
    const fs::path out = dir / ("run" + std::to_string(k));
    const auto o = spawn(cli, {"distill", "run", "--teacher", (dir / "teacher" / "checkpoint").string(), "--config",
                               (dir / "student.json").string(), "--corpus", (dir / "corpus.txt").string(), "--out",
                               out.string()}, dir.path());
    if (o.code != 0) return {false, "distill run exited with " + std::to_string(o.code)};
    metrics[k] = slurp(out / "metrics.csv");
  }
  const std::size_t rows = static_cast<std::size_t>(std::count(metrics[0].begin(), metrics[0].end(), '\n'));
  return {!metrics[0].empty() && metrics[0] == metrics[1],
          "two runs, " + std::to_string(rows) + " CSV lines each, byte-identical: " +
              (metrics[0] == metrics[1] ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Verdict (*)()>> criteria{
      {"parameter accounting", parameter_accounting},
      {"shape contracts", shape_contracts},
      {"alignment oracle equivalence", oracle_equivalence},
      {"reduce concatenation invariant", concatenation_invariant},
      {"gradient checks", gradient_checks},
      {"loss identities", loss_identities},
      {"initialization fidelity", init_fidelity},
      {"desk-scale distillation trend", distillation_trend},
      {"schedule conformance", schedule_conformance},
      {"determinism", determinism}};
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.contains(i + 1)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    all = all && v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << v.detail
              << std::endl;
  }
  return all ? 0 : 1;
}
