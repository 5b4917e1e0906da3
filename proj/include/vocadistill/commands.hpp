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

// Command implementations behind the `vocadistill` executable. run_cli is
// callable in-process so scripted checks need no subprocess.

#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vocadistill/alignment.hpp"
#include "vocadistill/model.hpp"
#include "vocadistill/tokenizer.hpp"
#include "vocadistill/trainer.hpp"

namespace vocadistill::cli {

inline constexpr const char* kToolVersion = "vocadistill 0.1.0";

namespace fs = std::filesystem;
using nlohmann::json;

// Invalid usage or configuration; maps to exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Non-empty lines, trailing CR removed.
inline std::vector<std::string> read_lines(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) out.push_back(line);
  }
  return out;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string file_digest(const fs::path& path) { return hex64(fnv1a64(read_file(path))); }

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct RunManifest {
  std::string command;
  json config = json::object();
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> inputs;  // path -> digest
  std::vector<std::string> outputs;
  std::string started_at = utc_now();

  void write(const fs::path& path) const {
    json j;
    j["command"] = command;
    j["config_digest"] = hex64(fnv1a64(config.dump()));
    j["config"] = config;
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["inputs"] = inputs;
    j["tool_version"] = kToolVersion;
    j["outputs"] = outputs;
    j["started_at"] = started_at;
    j["finished_at"] = utc_now();
    std::ofstream out(path, std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + path.string());
  }
};

inline std::optional<std::uint64_t> seed_from_env() {
  const char* v = std::getenv("VOCADISTILL_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (end == v || *end != '\0') throw UsageError(std::string("VOCADISTILL_SEED is not an integer: ") + v);
  return s;
}

inline json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

inline Vocabulary load_vocab(const fs::path& path) {
  std::istringstream in(read_file(path));
  try {
    return Vocabulary::load(in);
  } catch (const std::invalid_argument& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

inline TrainConfig load_train_config(const fs::path& path) {
  try {
    TrainConfig c = parse_json_file(path).get<TrainConfig>();
    if (!c.vocab.empty() && fs::path(c.vocab).is_relative()) {
      c.vocab = (path.parent_path() / c.vocab).string();
    }
    return c;
  } catch (const json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

// Named architectures: the 119.5K-vocabulary multilingual teacher and its
// distilled students.
inline std::map<std::string, ModelConfig> model_presets() {
  auto cfg = [](std::size_t l, std::size_t h, std::size_t heads, std::size_t ffn, std::size_t v) {
    ModelConfig c;
    c.n_layers = l;
    c.hidden = h;
    c.n_heads = heads;
    c.ffn_dim = ffn;
    c.vocab_size = v;
    c.max_positions = 512;
    return c;
  };
  return {{"teacher", cfg(12, 768, 12, 3072, 119547)},
          {"distil-base", cfg(6, 768, 12, 3072, 119547)},
          {"distil-small", cfg(2, 768, 12, 3072, 119547)},
          {"distil-tiny30", cfg(3, 264, 12, 792, 30500)},
          {"distil-tiny20", cfg(3, 264, 12, 792, 20000)},
          {"distil-tiny10", cfg(3, 264, 12, 792, 10000)},
          {"distil-tiny5", cfg(3, 264, 12, 792, 5000)}};
}

// A model config file is either a bare model object or a run config with a
// "model" entry.
inline ModelConfig load_model_config(const fs::path& path) {
  const json j = parse_json_file(path);
  try {
    if (j.is_object() && j.contains("model")) return load_train_config(path).model;
    return j.get<ModelConfig>();
  } catch (const json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// vocab build

inline int vocab_build(const fs::path& corpus, std::size_t size, const fs::path& out_path,
                       bool lowercase, std::ostream& out) {
  BuildOptions opt;
  opt.normalization = lowercase ? Normalization::lowercase : Normalization::none;
  const std::string text = read_file(corpus);
  const Vocabulary vocab = build_vocab(std::string_view(text), size, opt);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  {
    std::ofstream f(out_path, std::ios::trunc);
    vocab.save(f);
    if (!f) throw std::runtime_error("cannot write " + out_path.string());
  }
  RunManifest m;
  m.command = "vocab build";
  m.config = {{"size", size}, {"normalization", lowercase ? "lowercase" : "none"}};
  m.inputs[corpus.string()] = hex64(fnv1a64(text));
  m.outputs = {out_path.string()};
  m.write(fs::path(out_path.string() + ".manifest.json"));
  out << "wrote " << vocab.size() << " tokens to " << out_path.string() << " (digest "
      << file_digest(out_path) << ")\n";
  if (vocab.size() < size) {
    out << "note: merges ran out; vocabulary is smaller than the requested " << size << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// align inspect

struct AlignStats {
  std::size_t sentences = 0;
  std::size_t teacher_tokens = 0;
  std::size_t student_tokens = 0;
  std::size_t matched_positions = 0;
  std::size_t aux_tokens = 0;
  std::size_t reduce_groups = 0;
  std::size_t unk_groups = 0;
  double coverage = 0.0;
};

inline int align_inspect(const fs::path& teacher_path, const fs::path& student_path,
                         const fs::path& text_path, Strategy strategy, bool as_json,
                         std::ostream& out) {
  const Vocabulary tv = load_vocab(teacher_path);
  const Vocabulary sv = load_vocab(student_path);
  const VocabMatch vm = vocab_intersection(tv, sv);
  AlignStats st;
  st.coverage = vm.coverage;
  json sentences = json::array();
  std::ostringstream table;
  for (const std::string& line : read_lines(text_path)) {
    const TokenizedSequence ts = tokenize(tv, line);
    const TokenizedSequence ss = tokenize(sv, line);
    ++st.sentences;
    st.teacher_tokens += ts.size();
    st.student_tokens += ss.size();
    table << "# " << line << "\n";
    if (strategy == Strategy::match) {
      const MatchAlignment ma = match_align(ts, ss, vm);
      st.matched_positions += ma.n_match();
      std::size_t k = 0;
      for (std::size_t i = 0; i < ts.size(); ++i) {
        table << i << '\t' << tv.token(ts.ids[i]);
        if (k < ma.seq_pairs.size() && ma.seq_pairs[k].first == i) {
          table << "\t=\t" << ma.seq_pairs[k].second << '\t' << sv.token(ss.ids[ma.seq_pairs[k].second]);
          ++k;
        } else {
          table << "\t-";
        }
        table << '\n';
      }
      sentences.push_back({{"text", line}, {"teacher_tokens", ts.size()},
                           {"student_tokens", ss.size()}, {"matched", ma.n_match()}});
    } else {
      const ReduceAlignment ra = reduce_split(ts, tv, sv);
      st.aux_tokens += ra.aux_size();
      st.reduce_groups += ra.teacher_size();
      for (bool u : ra.unk) st.unk_groups += u ? 1 : 0;
      table << format_reduce_map(ra, &ts, &tv, &sv);
      sentences.push_back({{"text", line}, {"teacher_tokens", ts.size()},
                           {"aux_tokens", ra.aux_size()}, {"unk_groups", std::count(ra.unk.begin(), ra.unk.end(), true)}});
    }
  }
  json summary{{"strategy", to_string(strategy)},
               {"sentences", st.sentences},
               {"vocab_coverage", st.coverage},
               {"teacher_tokens", st.teacher_tokens}};
  const double tt = static_cast<double>(std::max<std::size_t>(st.teacher_tokens, 1));
  if (strategy == Strategy::match) {
    summary["student_tokens"] = st.student_tokens;
    summary["matched_positions"] = st.matched_positions;
    summary["match_fraction"] = static_cast<double>(st.matched_positions) / tt;
  } else {
    const std::size_t ok = st.reduce_groups - st.unk_groups;
    summary["aux_tokens"] = st.aux_tokens;
    summary["unk_groups"] = st.unk_groups;
    summary["unk_fraction"] = static_cast<double>(st.unk_groups) / tt;
    std::size_t ok_tokens = st.aux_tokens - st.unk_groups;
    summary["mean_group_size"] = ok ? static_cast<double>(ok_tokens) / static_cast<double>(ok) : 0.0;
  }
  if (as_json) {
    out << json{{"summary", summary}, {"sentences", sentences}}.dump(2) << '\n';
  } else {
    out << table.str();
    out << "## summary\n";
    for (const auto& [k, v] : summary.items()) out << k << '\t' << v.dump() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Training commands

namespace detail {

struct RunOutputs {
  fs::path dir;
  fs::path checkpoint() const { return dir / "checkpoint"; }
  fs::path metrics() const { return dir / "metrics.csv"; }
  fs::path validation() const { return dir / "validation.csv"; }
  fs::path config() const { return dir / "config.json"; }
  fs::path manifest() const { return dir / "run_manifest.json"; }
};

inline TrainResult run_training(Trainer& trainer, const std::vector<std::string>& corpus,
                                const RunOutputs& outs, const ModelConfig& model_cfg,
                                const Vocabulary& vocab, const json& extra, std::ostream& log) {
  fs::create_directories(outs.dir);
  std::ofstream metrics(outs.metrics(), std::ios::trunc);
  std::ofstream validation(outs.validation(), std::ios::trunc);
  TrainHooks hooks;
  hooks.metrics_csv = &metrics;
  hooks.validation_csv = &validation;
  hooks.log = &log;
  hooks.on_improvement = [&](std::size_t step, const ModelParams& p, const ProjectionLayer* proj) {
    json e = extra;
    e["step"] = step;
    save_checkpoint(outs.checkpoint(), p, model_cfg, vocab, e, proj);
  };
  TrainResult result = trainer.run(corpus, hooks);
  if (!metrics || !validation) throw std::runtime_error("cannot write metrics under " + outs.dir.string());
  return result;
}

inline void finish_run(RunManifest& m, const RunOutputs& outs, const TrainConfig& cfg,
                       const TrainResult& result, std::ostream& out) {
  {
    std::ofstream c(outs.config(), std::ios::trunc);
    c << json(cfg).dump(2) << '\n';
  }
  m.outputs = {outs.checkpoint().string(), outs.metrics().string(), outs.validation().string(),
               outs.config().string()};
  m.write(outs.manifest());
  out << "steps " << result.steps << "\n";
  if (result.best_validation) {
    out << "best_val_mlm " << format_number(result.best_validation->loss) << "\n";
    out << "best_val_acc " << format_number(result.best_validation->accuracy) << "\n";
  }
  out << "final_val_acc " << format_number(result.final_validation.accuracy) << "\n";
  if (result.truncated > 0) out << "truncated_sequences " << result.truncated << "\n";
}

}  // namespace detail

inline int pretrain_teacher(const fs::path& corpus_path, const fs::path& config_path,
                            const fs::path& out_dir, const std::optional<fs::path>& vocab_path,
                            std::ostream& out, std::ostream& log) {
  TrainConfig cfg = load_train_config(config_path);
  if (auto s = seed_from_env()) cfg.seed = *s;
  if (cfg.needs_teacher()) throw UsageError("pretrain-teacher trains with the mlm term only");
  const std::vector<std::string> corpus = read_lines(corpus_path);
  if (corpus.empty()) throw UsageError(corpus_path.string() + " holds no text");
  RunManifest m;
  m.command = "pretrain-teacher";
  m.inputs[corpus_path.string()] = file_digest(corpus_path);
  m.inputs[config_path.string()] = file_digest(config_path);

  Vocabulary vocab;
  std::optional<fs::path> vp = vocab_path;
  if (!vp && !cfg.vocab.empty()) vp = cfg.vocab;
  if (vp) {
    vocab = load_vocab(*vp);
    m.inputs[vp->string()] = file_digest(*vp);
  } else {
    if (cfg.model.vocab_size == 0) throw UsageError("config needs model.vocab_size or a vocabulary path");
    const std::string text = read_file(corpus_path);
    vocab = build_vocab(std::string_view(text), cfg.model.vocab_size, {});
  }
  cfg.model.vocab_size = vocab.size();
  cfg.vocab = vp ? vp->string() : std::string();
  m.config = cfg;
  m.seed = cfg.seed;

  std::mt19937_64 rng(cfg.seed);
  ModelParams params = init_model(cfg.model, rng);
  Trainer trainer(cfg, params, cfg.model, vocab);
  const detail::RunOutputs outs{out_dir};
  const TrainResult result =
      detail::run_training(trainer, corpus, outs, cfg.model, vocab, {{"kind", "teacher"}}, log);
  detail::finish_run(m, outs, cfg, result, out);
  return 0;
}

inline int distill_run(const fs::path& teacher_dir, const fs::path& config_path,
                       const fs::path& corpus_path, const fs::path& out_dir, std::ostream& out,
                       std::ostream& log) {
  TrainConfig cfg = load_train_config(config_path);
  if (auto s = seed_from_env()) cfg.seed = *s;
  const Checkpoint teacher = load_checkpoint(teacher_dir);
  const std::vector<std::string> corpus = read_lines(corpus_path);
  if (corpus.empty()) throw UsageError(corpus_path.string() + " holds no text");
  RunManifest m;
  m.command = "distill run";
  m.inputs[(teacher_dir / "arrays.bin").string()] = file_digest(teacher_dir / "arrays.bin");
  m.inputs[config_path.string()] = file_digest(config_path);
  m.inputs[corpus_path.string()] = file_digest(corpus_path);

  const Vocabulary student_vocab = cfg.vocab.empty() ? teacher.vocab : load_vocab(cfg.vocab);
  if (!cfg.vocab.empty()) m.inputs[cfg.vocab] = file_digest(cfg.vocab);
  cfg.model.vocab_size = student_vocab.size();
  m.config = cfg;
  m.seed = cfg.seed;

  std::mt19937_64 rng(cfg.seed);
  ModelParams student;
  if (cfg.init == StudentInit::teacher) {
    if (cfg.model.max_positions > teacher.config.max_positions ||
        cfg.model.hidden > teacher.config.hidden || cfg.model.ffn_dim > teacher.config.ffn_dim) {
      throw UsageError("teacher initialization needs a student no wider than the teacher");
    }
    student = init_student(teacher.params, teacher.vocab, cfg.model, student_vocab, rng);
  } else {
    student = init_model(cfg.model, rng);
  }
  Trainer trainer(cfg, student, cfg.model, student_vocab,
                  TeacherModel{&teacher.params, &teacher.config, &teacher.vocab});
  const detail::RunOutputs outs{out_dir};
  const TrainResult result = detail::run_training(trainer, corpus, outs, cfg.model, student_vocab,
                                                  {{"kind", "student"}}, log);
  detail::finish_run(m, outs, cfg, result, out);
  return 0;
}

// Masks the corpus with a fixed seed and reports top-1 accuracy and mean loss
// over masked tokens.
inline MlmEval eval_mlm(const Checkpoint& model, const std::vector<std::string>& corpus,
                        std::uint64_t seed, float mask_prob = 0.15f, std::size_t batch_size = 16) {
  std::mt19937_64 rng(seed);
  BatchOptions opt;
  opt.mask_prob = mask_prob;
  opt.max_length = model.config.max_positions;
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < corpus.size(); i += batch_size) {
    const std::size_t n = std::min(batch_size, corpus.size() - i);
    batches.push_back(make_batch(std::span<const std::string>(corpus).subspan(i, n), model.vocab,
                                 nullptr, nullptr, opt, rng));
  }
  return evaluate_mlm(model.params, model.config, batches);
}

inline int eval_mlm_command(const fs::path& model_dir, const fs::path& corpus_path,
                            std::uint64_t seed, bool as_json, std::ostream& out) {
  if (auto s = seed_from_env()) seed = *s;
  const Checkpoint ck = load_checkpoint(model_dir);
  const auto corpus = read_lines(corpus_path);
  if (corpus.empty()) throw UsageError(corpus_path.string() + " holds no text");
  const MlmEval e = eval_mlm(ck, corpus, seed);
  if (as_json) {
    out << json{{"masked_tokens", e.n_masked}, {"accuracy", e.accuracy}, {"mlm_loss", e.loss}}.dump(2) << '\n';
  } else {
    out << "masked_tokens " << e.n_masked << "\naccuracy " << format_number(e.accuracy)
        << "\nmlm_loss " << format_number(e.loss) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Reports

inline int report_params(const ModelConfig& c, std::ostream& out) {
  c.validate();
  const ParamCount pc = count_params(c);
  out << "total_params " << pc.total << "\n"
      << "total_params_millions " << std::fixed << std::setprecision(2)
      << static_cast<double>(pc.total) / 1e6 << "\n"
      << std::defaultfloat << "token_embedding_params " << pc.token_embedding << "\n"
      << "embedding_fraction " << format_number(pc.embedding_fraction) << "\n";
  return 0;
}

inline int report_embedding_ratio(const std::vector<std::pair<std::string, ModelConfig>>& configs,
                                  std::ostream& out) {
  out << "name,vocab_size,hidden,layers,total_params,embedding_params,embedding_fraction\n";
  for (const auto& [name, c] : configs) {
    c.validate();
    const ParamCount pc = count_params(c);
    out << name << ',' << c.vocab_size << ',' << c.hidden << ',' << c.n_layers << ',' << pc.total
        << ',' << pc.token_embedding << ',' << format_number(pc.embedding_fraction) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Distillation toolkit for students with reduced vocabularies", "vocadistill"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  auto* vocab = app.add_subcommand("vocab", "Vocabulary tools")->require_subcommand(1);
  auto* vocab_build_cmd = vocab->add_subcommand("build", "Build a subword vocabulary");
  std::string vb_corpus, vb_out;
  std::size_t vb_size = 0;
  bool vb_lower = false;
  vocab_build_cmd->add_option("--corpus", vb_corpus, "Training text")->required();
  vocab_build_cmd->add_option("--size", vb_size, "Target vocabulary size")->required();
  vocab_build_cmd->add_option("--out", vb_out, "Output vocabulary file")->required();
  vocab_build_cmd->add_flag("--lowercase", vb_lower, "Lowercase text before merging");

  auto* align = app.add_subcommand("align", "Alignment tools")->require_subcommand(1);
  auto* inspect = align->add_subcommand("inspect", "Show teacher/student alignments");
  std::string ai_teacher, ai_student, ai_text, ai_strategy = "match";
  bool ai_json = false;
  inspect->add_option("--teacher-vocab", ai_teacher)->required();
  inspect->add_option("--student-vocab", ai_student)->required();
  inspect->add_option("--text", ai_text, "One sentence per line")->required();
  inspect->add_option("--strategy", ai_strategy)->check(CLI::IsMember({"match", "reduce"}));
  inspect->add_flag("--json", ai_json, "Machine-readable output");

  auto* pretrain = app.add_subcommand("pretrain-teacher", "Train a toy teacher with MLM");
  std::string pt_corpus, pt_config, pt_out, pt_vocab;
  pretrain->add_option("--corpus", pt_corpus)->required();
  pretrain->add_option("--config", pt_config)->required();
  pretrain->add_option("--out", pt_out)->required();
  pretrain->add_option("--vocab", pt_vocab, "Existing vocabulary (otherwise built from the corpus)");

  auto* distill = app.add_subcommand("distill", "Distillation")->require_subcommand(1);
  auto* distill_cmd = distill->add_subcommand("run", "Distill a teacher into a student");
  std::string dr_teacher, dr_config, dr_corpus, dr_out;
  distill_cmd->add_option("--teacher", dr_teacher, "Teacher checkpoint directory")->required();
  distill_cmd->add_option("--config", dr_config)->required();
  distill_cmd->add_option("--corpus", dr_corpus)->required();
  distill_cmd->add_option("--out", dr_out)->required();

  auto* eval = app.add_subcommand("eval", "Evaluation")->require_subcommand(1);
  auto* eval_cmd = eval->add_subcommand("mlm", "Masked-token accuracy and loss");
  std::string ev_model, ev_corpus;
  std::uint64_t ev_seed = 0;
  bool ev_json = false;
  eval_cmd->add_option("--model", ev_model, "Checkpoint directory")->required();
  eval_cmd->add_option("--corpus", ev_corpus)->required();
  eval_cmd->add_option("--seed", ev_seed, "Masking seed");
  eval_cmd->add_flag("--json", ev_json);

  auto* report = app.add_subcommand("report", "Parameter reports")->require_subcommand(1);
  auto* params_cmd = report->add_subcommand("params", "Parameter totals for one config");
  std::string rp_config, rp_preset;
  auto* rp_config_opt = params_cmd->add_option("--config", rp_config, "Model config JSON");
  auto* rp_preset_opt = params_cmd->add_option("--preset", rp_preset, "Named architecture");
  rp_config_opt->excludes(rp_preset_opt);
  auto* ratio_cmd = report->add_subcommand("embedding-ratio", "CSV of embedding fractions");
  std::vector<std::string> er_configs;
  ratio_cmd->add_option("--configs", er_configs, "Model config JSON files")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*vocab_build_cmd) return vocab_build(vb_corpus, vb_size, vb_out, vb_lower, out);
    if (*inspect) {
      return align_inspect(ai_teacher, ai_student, ai_text, parse_strategy(ai_strategy), ai_json, out);
    }
    if (*pretrain) {
      std::optional<fs::path> v;
      if (!pt_vocab.empty()) v = pt_vocab;
      return pretrain_teacher(pt_corpus, pt_config, pt_out, v, out, err);
    }
    if (*distill_cmd) return distill_run(dr_teacher, dr_config, dr_corpus, dr_out, out, err);
    if (*eval_cmd) return eval_mlm_command(ev_model, ev_corpus, ev_seed, ev_json, out);
    if (*params_cmd) {
      if (!rp_preset.empty()) {
        const auto presets = model_presets();
        auto it = presets.find(rp_preset);
        if (it == presets.end()) throw UsageError("unknown preset '" + rp_preset + "'");
        return report_params(it->second, out);
      }
      if (rp_config.empty()) throw UsageError("report params needs --config or --preset");
      return report_params(load_model_config(rp_config), out);
    }
    if (*ratio_cmd) {
      std::vector<std::pair<std::string, ModelConfig>> configs;
      for (const auto& p : er_configs) configs.emplace_back(fs::path(p).stem().string(), load_model_config(p));
      return report_embedding_ratio(configs, out);
    }
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << "error: no command\n";
  return 2;
}

inline int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, out, err);
}

}  // namespace vocadistill::cli
