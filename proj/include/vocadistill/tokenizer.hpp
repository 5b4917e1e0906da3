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

// Subword vocabularies: frequency-driven pair merging to build them, greedy
// longest-prefix matching to apply them. Non-initial pieces of a word carry a
// continuation prefix ("##" by default). Character positions are counted in
// Unicode code points.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace vocadistill {

using TokenId = std::int32_t;

// ---------------------------------------------------------------------------
// UTF-8 helpers

namespace utf8 {

inline std::vector<char32_t> decode(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  auto bad = [&](std::size_t at) {
    throw std::invalid_argument("invalid UTF-8 at byte " + std::to_string(at));
  };
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      bad(i);
    }
    if (i + len > text.size()) bad(i);
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) bad(i + k);
      cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr std::array<char32_t, 5> min_for_len{0, 0, 0x80, 0x800, 0x10000};
    if (cp < min_for_len[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      bad(i);
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline void append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string encode(std::span<const char32_t> cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t cp : cps) append(out, cp);
  return out;
}

inline bool is_space(char32_t c) {
  return c == U' ' || (c >= U'\t' && c <= U'\r') || c == 0x85 || c == 0xA0 ||
         c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 ||
         c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

// Unicode general category P* plus ASCII symbols, by block ranges.
inline bool is_punct(char32_t c) {
  if ((c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
      (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E)) {
    return true;
  }
  switch (c) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB:
    case 0xBF: case 0x37E: case 0x387: case 0x55A: case 0x55F:
    case 0x589: case 0x58A: case 0x5BE: case 0x5C0: case 0x5C3:
    case 0x5C6: case 0x5F3: case 0x5F4: case 0x60C: case 0x61B:
    case 0x61F: case 0x964: case 0x965:
      return true;
    default:
      break;
  }
  return (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) ||
         (c >= 0x2E00 && c <= 0x2E4F) || (c >= 0x3001 && c <= 0x3003) ||
         (c >= 0x3008 && c <= 0x3011) || (c >= 0x3014 && c <= 0x301F) ||
         (c >= 0xFE10 && c <= 0xFE19) || (c >= 0xFE30 && c <= 0xFE4F) ||
         (c >= 0xFF01 && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF20) ||
         (c >= 0xFF3B && c <= 0xFF40) || (c >= 0xFF5B && c <= 0xFF65);
}

// ASCII and basic Cyrillic case folding; code point count is preserved.
inline char32_t to_lower(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  return c;
}

}  // namespace utf8

// ---------------------------------------------------------------------------
// Vocabulary

enum class Normalization { none, lowercase };

struct SpecialIds {
  TokenId pad = 0;
  TokenId unk = 1;
  TokenId cls = 2;
  TokenId sep = 3;
  TokenId mask = 4;

  std::array<TokenId, 5> all() const { return {pad, unk, cls, sep, mask}; }
  bool operator==(const SpecialIds&) const = default;
};

inline constexpr std::array<std::string_view, 5> kSpecialNames{"pad", "unk", "cls",
                                                               "sep", "mask"};
inline constexpr std::array<std::string_view, 5> kSpecialTokens{
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
inline constexpr std::size_t kNumSpecials = 5;

class Vocabulary {
 public:
  Vocabulary() = default;

  // Validates uniqueness, special-token placement and non-empty subwords.
  Vocabulary(std::vector<std::string> tokens, SpecialIds specials,
             std::string continuation_prefix = "##",
             Normalization normalization = Normalization::none)
      : tokens_(std::move(tokens)),
        specials_(specials),
        prefix_(std::move(continuation_prefix)),
        normalization_(normalization) {
    if (prefix_.empty()) {
      throw std::invalid_argument("continuation prefix must be non-empty");
    }
    std::unordered_set<TokenId> seen;
    for (TokenId id : specials_.all()) {
      if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw std::invalid_argument("special token id " + std::to_string(id) +
                                    " outside vocabulary of " +
                                    std::to_string(tokens_.size()));
      }
      if (!seen.insert(id).second) {
        throw std::invalid_argument("special token ids must be distinct");
      }
    }
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      const auto id = static_cast<TokenId>(i);
      if (!is_special(id) && (strip(tokens_[i]).empty() || tokens_[i] == prefix_)) {
        throw std::invalid_argument("empty subword at id " + std::to_string(i));
      }
      if (!index_.emplace(tokens_[i], id).second) {
        throw std::invalid_argument("duplicate token '" + tokens_[i] + "'");
      }
      max_token_chars_ = std::max(max_token_chars_, utf8::decode(tokens_[i]).size());
    }
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const SpecialIds& specials() const { return specials_; }
  const std::string& continuation_prefix() const { return prefix_; }
  Normalization normalization() const { return normalization_; }
  std::size_t max_token_chars() const { return max_token_chars_; }

  std::optional<TokenId> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view token) const { return find(token).has_value(); }

  bool is_special(TokenId id) const {
    const auto all = specials_.all();
    return std::find(all.begin(), all.end(), id) != all.end();
  }

  bool is_continuation(std::string_view token) const {
    return token.size() > prefix_.size() && token.starts_with(prefix_);
  }

  // Token text without its continuation prefix.
  std::string_view strip(std::string_view token) const {
    return is_continuation(token) ? token.substr(prefix_.size()) : token;
  }

  // Header lines `#!key=value` followed by one token per line; the n-th token
  // line has id n.
  void save(std::ostream& os) const {
    os << "#!continuation_prefix=" << prefix_ << '\n';
    os << "#!normalization="
       << (normalization_ == Normalization::lowercase ? "lowercase" : "none") << '\n';
    os << "#!specials";
    const auto ids = specials_.all();
    for (std::size_t i = 0; i < kNumSpecials; ++i) {
      os << ' ' << kSpecialNames[i] << '=' << ids[i];
    }
    os << '\n';
    for (const auto& t : tokens_) os << t << '\n';
  }

  std::string serialize() const {
    std::ostringstream os;
    save(os);
    return os.str();
  }

  static Vocabulary load(std::istream& is) {
    std::string line;
    std::string prefix = "##";
    Normalization norm = Normalization::none;
    SpecialIds specials;
    std::vector<std::string> tokens;
    bool in_header = true;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (in_header && line.starts_with("#!")) {
        parse_header(line.substr(2), line_no, prefix, norm, specials);
        continue;
      }
      in_header = false;
      tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens), specials, prefix, norm);
  }

  static Vocabulary parse(const std::string& text) {
    std::istringstream is(text);
    return load(is);
  }

 private:
  static void parse_header(const std::string& body, std::size_t line_no,
                           std::string& prefix, Normalization& norm,
                           SpecialIds& specials) {
    auto fail = [&](const std::string& why) {
      throw std::invalid_argument("vocabulary header line " +
                                  std::to_string(line_no) + ": " + why);
    };
    if (body.starts_with("continuation_prefix=")) {
      prefix = body.substr(std::string_view("continuation_prefix=").size());
    } else if (body.starts_with("normalization=")) {
      const auto v = body.substr(std::string_view("normalization=").size());
      if (v == "none") {
        norm = Normalization::none;
      } else if (v == "lowercase") {
        norm = Normalization::lowercase;
      } else {
        fail("unknown normalization '" + v + "'");
      }
    } else if (body.starts_with("specials")) {
      std::istringstream fields(body.substr(8));
      std::string field;
      while (fields >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) fail("malformed special '" + field + "'");
        const auto name = field.substr(0, eq);
        TokenId id = 0;
        try {
          id = static_cast<TokenId>(std::stol(field.substr(eq + 1)));
        } catch (const std::exception&) {
          fail("malformed special id in '" + field + "'");
        }
        if (name == "pad") specials.pad = id;
        else if (name == "unk") specials.unk = id;
        else if (name == "cls") specials.cls = id;
        else if (name == "sep") specials.sep = id;
        else if (name == "mask") specials.mask = id;
        else fail("unknown special role '" + name + "'");
      }
    } else {
      fail("unknown header '" + body + "'");
    }
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  SpecialIds specials_;
  std::string prefix_ = "##";
  Normalization normalization_ = Normalization::none;
  std::size_t max_token_chars_ = 0;
};

// ---------------------------------------------------------------------------
// Pre-tokenization

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  bool operator==(const Span&) const = default;
};

// Normalized code points of a text plus its whitespace/punctuation words.
struct WordSplit {
  std::vector<char32_t> chars;
  std::vector<Span> words;
};

inline WordSplit split_words(std::string_view text, Normalization norm) {
  WordSplit out;
  out.chars = utf8::decode(text);
  if (norm == Normalization::lowercase) {
    for (auto& c : out.chars) c = utf8::to_lower(c);
  }
  std::size_t start = 0;
  bool in_word = false;
  for (std::size_t i = 0; i < out.chars.size(); ++i) {
    const char32_t c = out.chars[i];
    if (utf8::is_space(c) || utf8::is_punct(c)) {
      if (in_word) out.words.push_back({start, i});
      in_word = false;
      if (!utf8::is_space(c)) out.words.push_back({i, i + 1});
    } else if (!in_word) {
      start = i;
      in_word = true;
    }
  }
  if (in_word) out.words.push_back({start, out.chars.size()});
  return out;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Greedy segmentation

struct Piece {
  TokenId id;
  Span span;  // relative to the segmented string
};

// Longest-prefix-first segmentation of chars[0, n). The first piece is looked
// up in word-initial form when word_initial is set; every other piece carries
// the continuation prefix. Returns nullopt when some position admits no piece.
inline std::optional<std::vector<Piece>> greedy_segment(const Vocabulary& vocab,
                                                        std::span<const char32_t> chars,
                                                        bool word_initial) {
  std::vector<Piece> pieces;
  std::size_t pos = 0;
  const std::size_t n = chars.size();
  if (n == 0) return std::nullopt;
  while (pos < n) {
    const bool initial = word_initial && pos == 0;
    std::optional<TokenId> found;
    std::size_t end = std::min(n, pos + vocab.max_token_chars());
    for (; end > pos; --end) {
      std::string candidate = initial ? std::string() : vocab.continuation_prefix();
      candidate += utf8::encode(chars.subspan(pos, end - pos));
      if (auto id = vocab.find(candidate); id && !vocab.is_special(*id)) {
        found = id;
        break;
      }
    }
    if (!found) return std::nullopt;
    pieces.push_back({*found, {pos, end}});
    pos = end;
  }
  return pieces;
}

// ---------------------------------------------------------------------------
// Tokenization

struct TokenizedSequence {
  std::vector<TokenId> ids;
  std::vector<Span> spans;  // code-point offsets into the normalized source
  std::uint64_t source_hash = 0;

  std::size_t size() const { return ids.size(); }
};

inline constexpr std::size_t kMaxWordChars = 100;

inline TokenizedSequence tokenize(const Vocabulary& vocab, std::string_view text) {
  TokenizedSequence seq;
  seq.source_hash = fnv1a64(text);
  const WordSplit split = split_words(text, vocab.normalization());
  const std::span<const char32_t> chars(split.chars);
  for (const Span& w : split.words) {
    const std::size_t len = w.end - w.begin;
    std::optional<std::vector<Piece>> pieces;
    if (len <= kMaxWordChars) pieces = greedy_segment(vocab, chars.subspan(w.begin, len), true);
    if (!pieces) {
      seq.ids.push_back(vocab.specials().unk);
      seq.spans.push_back(w);
      continue;
    }
    for (const Piece& p : *pieces) {
      seq.ids.push_back(p.id);
      seq.spans.push_back({w.begin + p.span.begin, w.begin + p.span.end});
    }
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Vocabulary construction

struct BuildOptions {
  std::string continuation_prefix = "##";
  Normalization normalization = Normalization::none;
};

// Iteratively merges the most frequent adjacent symbol pair (ties: smallest
// pair of strings) until the vocabulary reaches target_size or no pair is
// left. Ids 0..4 are PAD, UNK, CLS, SEP, MASK; the initial alphabet follows in
// sorted order, then merged symbols in merge order.
inline Vocabulary build_vocab(std::istream& corpus, std::size_t target_size,
                              const BuildOptions& options = {}) {
  const std::string& prefix = options.continuation_prefix;
  std::unordered_map<std::string, std::uint64_t> word_freq;
  std::string line;
  while (std::getline(corpus, line)) {
    const WordSplit split = split_words(line, options.normalization);
    for (const Span& w : split.words) {
      const std::size_t len = w.end - w.begin;
      if (len > kMaxWordChars) continue;
      ++word_freq[utf8::encode(std::span<const char32_t>(split.chars).subspan(w.begin, len))];
    }
  }
  if (word_freq.empty()) throw std::invalid_argument("build_vocab: empty corpus");

  // Interned symbol strings.
  std::vector<std::string> symbols;
  std::unordered_map<std::string, std::uint32_t> symbol_index;
  auto intern = [&](const std::string& s) {
    auto [it, inserted] = symbol_index.emplace(s, static_cast<std::uint32_t>(symbols.size()));
    if (inserted) symbols.push_back(s);
    return it->second;
  };

  std::vector<std::string> word_text;
  word_text.reserve(word_freq.size());
  for (const auto& kv : word_freq) word_text.push_back(kv.first);
  std::sort(word_text.begin(), word_text.end());

  std::vector<std::vector<std::uint32_t>> words(word_text.size());
  std::vector<std::uint64_t> freq(word_text.size());
  std::set<std::string> alphabet;
  for (std::size_t w = 0; w < word_text.size(); ++w) {
    freq[w] = word_freq[word_text[w]];
    const auto cps = utf8::decode(word_text[w]);
    for (std::size_t i = 0; i < cps.size(); ++i) {
      std::string s = i == 0 ? std::string() : prefix;
      utf8::append(s, cps[i]);
      alphabet.insert(s);
      words[w].push_back(intern(s));
    }
  }

  const std::size_t minimum = kNumSpecials + alphabet.size();
  if (target_size < minimum) {
    throw std::invalid_argument("build_vocab: target size " + std::to_string(target_size) +
                                " is below the minimum feasible size " +
                                std::to_string(minimum) + " (5 specials + " +
                                std::to_string(alphabet.size()) + " initial symbols)");
  }

  std::vector<std::string> tokens(kSpecialTokens.begin(), kSpecialTokens.end());
  std::unordered_set<std::string> in_vocab(tokens.begin(), tokens.end());
  for (const auto& s : alphabet) {
    if (in_vocab.insert(s).second) tokens.push_back(s);
  }

  using PairKey = std::uint64_t;
  auto key_of = [](std::uint32_t l, std::uint32_t r) {
    return (static_cast<PairKey>(l) << 32) | r;
  };
  struct Ranked {
    std::uint64_t count;
    PairKey key;
  };
  // Highest count first; ties resolved by lexicographic (left, right).
  auto cmp = [&symbols](const Ranked& a, const Ranked& b) {
    if (a.count != b.count) return a.count > b.count;
    const auto al = static_cast<std::uint32_t>(a.key >> 32), ar = static_cast<std::uint32_t>(a.key);
    const auto bl = static_cast<std::uint32_t>(b.key >> 32), br = static_cast<std::uint32_t>(b.key);
    if (al != bl) return symbols[al] < symbols[bl];
    return symbols[ar] < symbols[br];
  };
  std::set<Ranked, decltype(cmp)> queue(cmp);
  std::unordered_map<PairKey, std::uint64_t> pair_count;
  std::unordered_map<PairKey, std::unordered_set<std::uint32_t>> pair_words;

  auto adjust = [&](PairKey key, std::int64_t delta) {
    auto& c = pair_count[key];
    if (c > 0) queue.erase(Ranked{c, key});
    c = static_cast<std::uint64_t>(static_cast<std::int64_t>(c) + delta);
    if (c > 0) queue.insert(Ranked{c, key});
  };
  auto account = [&](std::uint32_t w, std::int64_t sign) {
    const auto& syms = words[w];
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      const PairKey k = key_of(syms[i], syms[i + 1]);
      adjust(k, sign * static_cast<std::int64_t>(freq[w]));
      if (sign > 0) pair_words[k].insert(w);
    }
  };
  for (std::uint32_t w = 0; w < words.size(); ++w) account(w, +1);

  while (tokens.size() < target_size && !queue.empty()) {
    const PairKey best = queue.begin()->key;
    const auto left = static_cast<std::uint32_t>(best >> 32);
    const auto right = static_cast<std::uint32_t>(best);
    const std::string merged =
        symbols[left] + std::string(std::string_view(symbols[right]).substr(prefix.size()));
    const std::uint32_t merged_id = intern(merged);
    if (in_vocab.insert(merged).second) tokens.push_back(merged);

    std::vector<std::uint32_t> affected(pair_words[best].begin(), pair_words[best].end());
    std::sort(affected.begin(), affected.end());
    for (std::uint32_t w : affected) {
      account(w, -1);
      auto& syms = words[w];
      std::vector<std::uint32_t> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
          next.push_back(merged_id);
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
      account(w, +1);
    }
    pair_words.erase(best);
  }
  return Vocabulary(std::move(tokens), SpecialIds{}, prefix, options.normalization);
}

inline Vocabulary build_vocab(std::string_view corpus, std::size_t target_size,
                              const BuildOptions& options = {}) {
  std::istringstream is{std::string(corpus)};
  return build_vocab(is, target_size, options);
}

// ---------------------------------------------------------------------------
// Vocabulary intersection

struct VocabMatch {
  // (student_id, teacher_id) of identical non-special token strings, ordered
  // by student id.
  std::vector<std::pair<TokenId, TokenId>> pairs;
  // The five special tokens paired by role.
  std::vector<std::pair<TokenId, TokenId>> special_pairs;
  // |pairs| / (|V_s| - 5)
  double coverage = 0.0;

  // Specials first, then string matches; column j of a gathered teacher tensor
  // and column j of a gathered student tensor name the same subword.
  std::vector<std::pair<TokenId, TokenId>> all_pairs() const {
    auto out = special_pairs;
    out.insert(out.end(), pairs.begin(), pairs.end());
    return out;
  }
  std::vector<std::size_t> student_columns() const {
    std::vector<std::size_t> out;
    for (const auto& [s, t] : all_pairs()) out.push_back(static_cast<std::size_t>(s));
    return out;
  }
  std::vector<std::size_t> teacher_columns() const {
    std::vector<std::size_t> out;
    for (const auto& [s, t] : all_pairs()) out.push_back(static_cast<std::size_t>(t));
    return out;
  }
};

inline VocabMatch vocab_intersection(const Vocabulary& teacher, const Vocabulary& student) {
  if (teacher.continuation_prefix() != student.continuation_prefix()) {
    throw std::invalid_argument("vocabularies use different continuation prefixes");
  }
  VocabMatch m;
  const auto ts = teacher.specials().all();
  const auto ss = student.specials().all();
  for (std::size_t i = 0; i < kNumSpecials; ++i) m.special_pairs.emplace_back(ss[i], ts[i]);
  for (std::size_t s = 0; s < student.size(); ++s) {
    const auto sid = static_cast<TokenId>(s);
    if (student.is_special(sid)) continue;
    if (auto tid = teacher.find(student.token(sid)); tid && !teacher.is_special(*tid)) {
      m.pairs.emplace_back(sid, *tid);
    }
  }
  if (m.pairs.empty()) {
    throw std::invalid_argument(
        "teacher and student vocabularies share no non-special tokens");
  }
  m.coverage = static_cast<double>(m.pairs.size()) /
               static_cast<double>(student.size() - kNumSpecials);
  return m;
}

}  // namespace vocadistill
