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

// Shared test utilities: central-difference gradient checking, independent
// reference implementations, scratch directories.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "vocadistill/autodiff.hpp"
#include "vocadistill/tokenizer.hpp"

namespace vocadistill::testing {

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t passed = 0;
  double worst_rel = 0.0;

  double pass_rate() const { return checked ? static_cast<double>(passed) / static_cast<double>(checked) : 1.0; }
  bool ok(double min_rate = 0.99) const { return checked > 0 && pass_rate() >= min_rate; }
};

struct GradCheckOptions {
  float h = 1e-3f;
  double rel_tol = 1e-3;
  double small = 1e-4;            // both |analytic| and |numeric| below: pass
  std::size_t max_coords = 40;    // sampled per input
  std::uint64_t seed = 7;
};

// f maps the inputs to any tensor; the checked scalar is sum(f(x) * R) for a
// fixed random R, accumulated in double on the numeric side.
inline GradCheckResult gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                 std::vector<Tensor> inputs, const GradCheckOptions& opt = {}) {
  std::mt19937_64 rng(opt.seed);
  for (auto& x : inputs) x.set_requires_grad(true);
  const Tensor out0 = f(inputs);
  std::normal_distribution<Real> nd(0, 1);
  std::vector<Real> r(out0.numel());
  for (auto& v : r) v = nd(rng);
  const Tensor weights = Tensor::from_vector(out0.shape(), r);
  sum_all(mul(out0, weights)).backward();

  auto objective = [&]() {
    NoGradGuard ng;
    const Tensor o = f(inputs);
    double acc = 0.0;
    for (std::size_t i = 0; i < o.numel(); ++i) acc += static_cast<double>(o.data()[i]) * r[i];
    return acc;
  };

  GradCheckResult res;
  for (auto& x : inputs) {
    std::vector<Real> analytic(x.numel(), 0);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    std::vector<std::size_t> coords(x.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    std::shuffle(coords.begin(), coords.end(), rng);
    if (coords.size() > opt.max_coords) coords.resize(opt.max_coords);
    for (std::size_t c : coords) {
      const Real orig = x.data()[c];
      x.data()[c] = orig + opt.h;
      const double up = objective();
      x.data()[c] = orig - opt.h;
      const double down = objective();
      x.data()[c] = orig;
      const double numeric = (up - down) / (2.0 * static_cast<double>(opt.h));
      const double a = analytic[c];
      const double denom = std::max(std::abs(a), std::abs(numeric));
      const double rel = denom > 0.0 ? std::abs(a - numeric) / denom : 0.0;
      ++res.checked;
      const bool tiny = std::abs(a) < opt.small && std::abs(numeric) < opt.small;
      if (tiny || rel < opt.rel_tol) {
        ++res.passed;
      } else {
        res.worst_rel = std::max(res.worst_rel, rel);
      }
    }
  }
  return res;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, float stddev = 1.0f) {
  return Tensor::normal(std::move(shape), stddev, rng);
}

// ---------------------------------------------------------------------------
// Reference BPE: recounts every pair on every iteration.

inline std::vector<std::string> reference_bpe_tokens(const std::vector<std::string>& words,
                                                     std::size_t target, const std::string& prefix = "##") {
  std::map<std::vector<std::string>, std::size_t> segs;
  for (const auto& w : words) {
    const auto cps = utf8::decode(w);
    std::vector<std::string> s;
    for (std::size_t i = 0; i < cps.size(); ++i) {
      std::string piece;
      utf8::append(piece, cps[i]);
      s.push_back(i == 0 ? piece : prefix + piece);
    }
    ++segs[s];
  }
  std::vector<std::string> tokens(kSpecialTokens.begin(), kSpecialTokens.end());
  std::set<std::string> have(tokens.begin(), tokens.end());
  std::set<std::string> initial;
  for (const auto& [s, n] : segs) initial.insert(s.begin(), s.end());
  for (const auto& t : initial) {
    tokens.push_back(t);
    have.insert(t);
  }
  auto merged = [&](const std::string& a, const std::string& b) {
    return a + (b.starts_with(prefix) ? b.substr(prefix.size()) : b);
  };
  while (tokens.size() < target) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& [s, n] : segs) {
      for (std::size_t i = 0; i + 1 < s.size(); ++i) counts[{s[i], s[i + 1]}] += n;
    }
    if (counts.empty()) break;
    std::pair<std::string, std::string> best;
    std::size_t best_n = 0;
    for (const auto& [p, n] : counts) {
      if (n > best_n) {
        best = p;
        best_n = n;
      }
    }
    std::map<std::vector<std::string>, std::size_t> next;
    for (const auto& [s, n] : segs) {
      std::vector<std::string> t;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == best.first && s[i + 1] == best.second) {
          t.push_back(merged(s[i], s[i + 1]));
          ++i;
        } else {
          t.push_back(s[i]);
        }
      }
      next[t] += n;
    }
    segs = std::move(next);
    const std::string m = merged(best.first, best.second);
    if (have.insert(m).second) tokens.push_back(m);
  }
  return tokens;
}

inline Vocabulary make_vocab(std::vector<std::string> regular, std::string prefix = "##") {
  std::vector<std::string> tokens(kSpecialTokens.begin(), kSpecialTokens.end());
  tokens.insert(tokens.end(), regular.begin(), regular.end());
  return Vocabulary(std::move(tokens), SpecialIds{}, std::move(prefix), Normalization::none);
}

// ---------------------------------------------------------------------------
// Random vocabularies and texts over a small alphabet

inline std::string random_word(std::mt19937_64& rng, std::size_t max_len, std::string_view alphabet = "abcde") {
  std::uniform_int_distribution<std::size_t> len(1, max_len), ch(0, alphabet.size() - 1);
  std::string w;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) w += alphabet[ch(rng)];
  return w;
}

// Regular tokens: every alphabet letter in both forms (with probability
// full_alphabet) plus `extra` random multi-letter strings in either form.
inline Vocabulary random_vocab(std::mt19937_64& rng, std::size_t extra, double full_alphabet = 1.0,
                               std::string_view alphabet = "abcde") {
  std::set<std::string> regular;
  std::bernoulli_distribution keep(full_alphabet), cont(0.5);
  for (char c : alphabet) {
    if (keep(rng)) regular.insert(std::string(1, c));
    if (keep(rng)) regular.insert("##" + std::string(1, c));
  }
  for (std::size_t i = 0; i < extra; ++i) {
    const std::string w = random_word(rng, 4, alphabet);
    regular.insert(cont(rng) ? "##" + w : w);
  }
  std::vector<std::string> tokens(regular.begin(), regular.end());
  std::shuffle(tokens.begin(), tokens.end(), rng);
  return make_vocab(std::move(tokens));
}

inline bool shares_regular_token(const Vocabulary& a, const Vocabulary& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    if (!a.is_special(id) && b.find(a.token(id))) return true;
  }
  return false;
}

inline std::string random_text(std::mt19937_64& rng, std::size_t words, std::size_t max_len = 7) {
  std::string t;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) t += ' ';
    t += random_word(rng, max_len);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Alignment oracles

// All (i, j) whose spans coincide and whose token strings are equal and
// non-special, by exhaustive comparison.
inline std::vector<std::pair<std::size_t, std::size_t>> quadratic_match(
    const TokenizedSequence& t, const Vocabulary& tv, const TokenizedSequence& s, const Vocabulary& sv) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (t.spans[i] == s.spans[j] && !tv.is_special(t.ids[i]) && !sv.is_special(s.ids[j]) &&
          tv.token(t.ids[i]) == sv.token(s.ids[j])) {
        out.emplace_back(i, j);
      }
    }
  }
  return out;
}

// Enumerates every segmentation of `text` into student tokens (first piece
// word-initial iff `initial`) and returns the unique one in which each piece
// is the longest vocabulary prefix at its start, or nullopt if none is.
inline std::optional<std::vector<TokenId>> exhaustive_greedy_split(const std::string& text, bool initial,
                                                                   const Vocabulary& sv) {
  const auto cps = utf8::decode(text);
  const std::size_t n = cps.size();
  auto lookup = [&](std::size_t b, std::size_t e) -> std::optional<TokenId> {
    std::string piece = (b == 0 && initial) ? std::string() : sv.continuation_prefix();
    piece += utf8::encode(std::span<const char32_t>(cps).subspan(b, e - b));
    auto id = sv.find(piece);
    if (id && sv.is_special(*id)) return std::nullopt;
    return id;
  };
  std::vector<std::vector<std::pair<std::size_t, TokenId>>> all;
  std::vector<std::pair<std::size_t, TokenId>> cur;
  std::function<void(std::size_t)> rec = [&](std::size_t b) {
    if (b == n) {
      all.push_back(cur);
      return;
    }
    for (std::size_t e = b + 1; e <= n; ++e) {
      if (auto id = lookup(b, e)) {
        cur.emplace_back(e, *id);
        rec(e);
        cur.pop_back();
      }
    }
  };
  if (n > 0) rec(0);
  std::optional<std::vector<TokenId>> found;
  for (const auto& seg : all) {
    bool greedy = true;
    std::size_t b = 0;
    for (const auto& [e, id] : seg) {
      for (std::size_t longer = e + 1; longer <= n && greedy; ++longer) {
        if (lookup(b, longer)) greedy = false;
      }
      b = e;
    }
    if (greedy) {
      if (found) throw std::logic_error("two greedy segmentations");
      std::vector<TokenId> ids;
      for (const auto& [e, id] : seg) ids.push_back(id);
      found = ids;
    }
  }
  return found;
}

// Row i of the result is sum_k G[i][k] * rows[k] with G the 0/1 grouping
// matrix, evaluated as a dense product.
inline std::vector<Real> grouping_matrix_product(const std::vector<std::vector<std::size_t>>& groups,
                                                  std::size_t n_rows, const std::vector<Real>& rows,
                                                  std::size_t d) {
  std::vector<Real> g(groups.size() * n_rows, 0.0f);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (std::size_t k : groups[i]) g[i * n_rows + k] = 1.0f;
  }
  std::vector<Real> out(groups.size() * d, 0.0f);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      Real acc = 0;
      for (std::size_t k = 0; k < n_rows; ++k) acc += g[i * n_rows + k] * rows[k * d + j];
      out[i * d + j] = acc;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scratch directory removed on destruction.

class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("vocadistill_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};


}  // namespace vocadistill::testing
