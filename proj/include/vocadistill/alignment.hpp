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

// Sequence and vocabulary alignment between teacher- and student-tokenized
// views of one text.
//
//  * match:  keep only positions whose subword string and character span agree
//            on both sides, and only vocabulary entries present in both.
//  * reduce: split every teacher subword greedily into student subwords and
//            sum the student rows belonging to each teacher position.

#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vocadistill/autodiff.hpp"
#include "vocadistill/tokenizer.hpp"

namespace vocadistill {

struct MatchAlignment {
  // (teacher_pos, student_pos), strictly increasing in both coordinates.
  std::vector<std::pair<std::size_t, std::size_t>> seq_pairs;
  // (student_id, teacher_id) used to gather logit columns.
  std::vector<std::pair<TokenId, TokenId>> vocab_pairs;

  std::size_t n_match() const { return seq_pairs.size(); }

  std::vector<std::size_t> teacher_positions() const {
    std::vector<std::size_t> out;
    out.reserve(seq_pairs.size());
    for (const auto& p : seq_pairs) out.push_back(p.first);
    return out;
  }
  std::vector<std::size_t> student_positions() const {
    std::vector<std::size_t> out;
    out.reserve(seq_pairs.size());
    for (const auto& p : seq_pairs) out.push_back(p.second);
    return out;
  }
};

struct ReduceAlignment {
  // groups[i] lists the auxiliary student positions covering teacher token i.
  std::vector<std::vector<std::size_t>> groups;
  // Auxiliary student input: the teacher sequence re-split by student subwords.
  std::vector<TokenId> student_ids;
  // unk[i] marks a teacher token no student segmentation exists for; such
  // groups hold a single student UNK and are left out of distillation terms.
  std::vector<bool> unk;

  std::size_t teacher_size() const { return groups.size(); }
  std::size_t aux_size() const { return student_ids.size(); }

  std::vector<std::size_t> usable_positions() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (!unk[i]) out.push_back(i);
    }
    return out;
  }
};

class AlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Positions whose token strings and spans coincide. Token identity is decided
// through the vocabulary intersection, so UNK never matches UNK.
inline MatchAlignment match_align(const TokenizedSequence& teacher,
                                  const TokenizedSequence& student,
                                  const VocabMatch& vocab) {
  if (teacher.source_hash != student.source_hash) {
    throw AlignmentError("match_align: sequences tokenize different texts");
  }
  std::unordered_set<std::uint64_t> same_string;
  same_string.reserve(vocab.pairs.size() * 2);
  auto key = [](TokenId t, TokenId s) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)) << 32) |
           static_cast<std::uint32_t>(s);
  };
  for (const auto& [s, t] : vocab.pairs) same_string.insert(key(t, s));

  MatchAlignment out;
  out.vocab_pairs = vocab.all_pairs();
  std::size_t i = 0, j = 0;
  while (i < teacher.size() && j < student.size()) {
    const Span& a = teacher.spans[i];
    const Span& b = student.spans[j];
    if (a == b) {
      if (same_string.contains(key(teacher.ids[i], student.ids[j]))) {
        out.seq_pairs.emplace_back(i, j);
      }
      ++i;
      ++j;
    } else if (std::pair(a.begin, a.end) < std::pair(b.begin, b.end)) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

inline TokenId map_special(const Vocabulary& from, const Vocabulary& to, TokenId id) {
  const auto f = from.specials().all();
  const auto t = to.specials().all();
  for (std::size_t r = 0; r < kNumSpecials; ++r) {
    if (f[r] == id) return t[r];
  }
  throw std::invalid_argument("map_special: id " + std::to_string(id) + " is not special");
}

// Greedy split of one teacher subword into student subwords. A continuation
// teacher subword is split into continuation pieces only. nullopt when no
// segmentation exists.
inline std::optional<std::vector<TokenId>> split_teacher_token(std::string_view teacher_token,
                                                               const Vocabulary& teacher,
                                                               const Vocabulary& student) {
  const bool continuation = teacher.is_continuation(teacher_token);
  const auto chars = utf8::decode(teacher.strip(teacher_token));
  auto pieces = greedy_segment(student, chars, !continuation);
  if (!pieces) return std::nullopt;
  std::vector<TokenId> ids;
  ids.reserve(pieces->size());
  for (const auto& p : *pieces) ids.push_back(p.id);
  return ids;
}

inline ReduceAlignment reduce_split(const TokenizedSequence& teacher_seq,
                                    const Vocabulary& teacher,
                                    const Vocabulary& student) {
  ReduceAlignment out;
  out.groups.reserve(teacher_seq.size());
  for (TokenId tid : teacher_seq.ids) {
    std::vector<std::size_t> group;
    bool is_unk = false;
    if (teacher.is_special(tid)) {
      out.student_ids.push_back(map_special(teacher, student, tid));
      is_unk = tid == teacher.specials().unk;
      group.push_back(out.student_ids.size() - 1);
    } else if (auto ids = split_teacher_token(teacher.token(tid), teacher, student)) {
      for (TokenId sid : *ids) {
        out.student_ids.push_back(sid);
        group.push_back(out.student_ids.size() - 1);
      }
    } else {
      out.student_ids.push_back(student.specials().unk);
      group.push_back(out.student_ids.size() - 1);
      is_unk = true;
    }
    out.groups.push_back(std::move(group));
    out.unk.push_back(is_unk);
  }
  return out;
}

// Row i of the result is the sum of student rows in groups[i]. Works for
// hidden states (d = hidden size) and pre-softmax outputs (d = |V_s|).
inline Tensor reduce_aggregate(const Tensor& student_rows,
                               const std::vector<std::vector<std::size_t>>& groups) {
  std::size_t total = 0;
  for (const auto& g : groups) total += g.size();
  if (student_rows.rank() == 0 || student_rows.size(0) != total) {
    throw ShapeError("reduce_aggregate: " + std::to_string(total) +
                     " grouped positions but student rows have shape " +
                     shape_str(student_rows.shape()));
  }
  return group_sum_rows(student_rows, groups);
}

inline Tensor reduce_aggregate(const Tensor& student_rows, const ReduceAlignment& alignment) {
  return reduce_aggregate(student_rows, alignment.groups);
}

// Column gather along the last axis in the order given by columns.
inline Tensor gather_matched_logits(const Tensor& logits, std::span<const std::size_t> columns) {
  if (logits.rank() == 0) throw ShapeError("gather_matched_logits: scalar input");
  return index_select(logits, logits.rank() - 1, columns);
}

// ---------------------------------------------------------------------------
// Line-oriented text form: one teacher position per line,
//   <teacher_pos>\t<student positions, comma separated>\t<ok|unk>[\t<notes>]

inline std::string format_reduce_map(const ReduceAlignment& a,
                                     const TokenizedSequence* teacher_seq = nullptr,
                                     const Vocabulary* teacher = nullptr,
                                     const Vocabulary* student = nullptr) {
  std::ostringstream os;
  for (std::size_t i = 0; i < a.groups.size(); ++i) {
    os << i << '\t';
    for (std::size_t k = 0; k < a.groups[i].size(); ++k) {
      if (k) os << ',';
      os << a.groups[i][k];
    }
    os << '\t' << (a.unk[i] ? "unk" : "ok");
    if (teacher_seq && teacher && student) {
      os << '\t' << teacher->token(teacher_seq->ids[i]) << '\t';
      for (std::size_t k = 0; k < a.groups[i].size(); ++k) {
        if (k) os << ' ';
        os << student->token(a.student_ids[a.groups[i][k]]);
      }
    }
    os << '\n';
  }
  return os.str();
}

// Recovers groups and UNK flags (student ids are not part of the text form).
inline ReduceAlignment parse_reduce_map(const std::string& text) {
  ReduceAlignment a;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    auto fail = [&] {
      throw std::invalid_argument("reduce map line " + std::to_string(line_no) +
                                  " is malformed");
    };
    if (cols.size() < 3) fail();
    try {
      if (std::stoul(cols[0]) != a.groups.size()) fail();
      std::vector<std::size_t> group;
      std::istringstream ps(cols[1]);
      std::string item;
      while (std::getline(ps, item, ',')) group.push_back(std::stoul(item));
      if (group.empty()) fail();
      a.groups.push_back(std::move(group));
    } catch (const std::logic_error&) {
      fail();
    }
    if (cols[2] != "ok" && cols[2] != "unk") fail();
    a.unk.push_back(cols[2] == "unk");
  }
  return a;
}

}  // namespace vocadistill
