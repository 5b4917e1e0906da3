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

// Deterministic toy-language generator: templated sentences with number
// agreement between determiners, nouns, verbs and copulas, so masked tokens
// are partly predictable from context.

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace vocadistill {

namespace synthetic {

inline constexpr std::array<std::string_view, 40> kNouns{
    "cat",     "dog",     "teacher", "river",   "garden",  "farmer",  "bird",    "window",
    "painter", "city",    "student", "horse",   "forest",  "doctor",  "boat",    "castle",
    "singer",  "mountain", "child",  "market",  "engine",  "lantern", "village", "soldier",
    "baker",   "island",  "letter",  "dancer",  "wizard",  "bridge",  "sailor",  "tower",
    "writer",  "meadow",  "hunter",  "kitchen", "planet",  "monkey",  "pilot",   "garage"};

inline constexpr std::array<std::string_view, 30> kVerbs{
    "watch", "follow", "paint", "visit", "open",  "carry", "clean",  "help",
    "push",  "pull",   "call",  "greet", "climb", "kick",  "jump",   "walk",
    "play",  "listen", "wash",  "cook",  "fix",   "touch", "remember", "answer",
    "reach", "guard",  "wander", "cross", "protect", "discover"};

inline constexpr std::array<std::string_view, 30> kAdjectives{
    "old",    "young",  "quiet",  "bright",  "small",   "large",  "happy",  "angry",
    "clever", "gentle", "brave",  "lonely",  "strange", "golden", "silent", "rapid",
    "heavy",  "narrow", "ancient", "curious", "friendly", "hungry", "careful", "sleepy",
    "dark",   "warm",   "cold",   "tall",    "famous",  "wooden"};

inline constexpr std::array<std::string_view, 12> kPrepositions{
    "near", "behind", "under", "above", "beside", "inside",
    "across", "through", "around", "before", "after", "without"};

inline constexpr std::array<std::string_view, 10> kAdverbs{
    "slowly", "quickly", "often", "rarely", "always", "never", "gladly", "softly", "loudly", "eagerly"};

inline std::string plural(std::string_view noun) {
  std::string s(noun);
  if (s == "child") return "children";
  if (s.ends_with("y") && s.size() > 1 && std::string_view("aeiou").find(s[s.size() - 2]) == std::string_view::npos) {
    s.pop_back();
    return s + "ies";
  }
  if (s.ends_with("s") || s.ends_with("x") || s.ends_with("ch") || s.ends_with("sh")) return s + "es";
  return s + "s";
}

inline std::string third_person(std::string_view verb) {
  std::string s(verb);
  if (s.ends_with("s") || s.ends_with("x") || s.ends_with("ch") || s.ends_with("sh")) return s + "es";
  return s + "s";
}

inline std::string past(std::string_view verb) {
  std::string s(verb);
  if (s.ends_with("e")) return s + "d";
  return s + "ed";
}

inline std::string progressive(std::string_view verb) {
  std::string s(verb);
  if (s.ends_with("e")) s.pop_back();
  return s + "ing";
}

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {}

  std::string sentence() {
    switch (pick(6)) {
      case 0: return transitive() + " .";
      case 1: {
        const std::string clause = transitive();
        return clause + " " + prep_phrase() + " .";
      }
      case 2: return copula() + " .";
      case 3: return relative() + " .";
      case 4: return progressive_clause() + " .";
      default: return adverbial() + " .";
    }
  }

  std::vector<std::string> corpus(std::size_t target_bytes) {
    std::vector<std::string> out;
    std::size_t bytes = 0;
    while (bytes < target_bytes) {
      out.push_back(sentence());
      bytes += out.back().size() + 1;
    }
    return out;
  }

 private:
  struct Phrase {
    std::string text;
    bool plural;
  };

  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  bool coin() { return pick(2) == 1; }

  // Zipf-like preference for early list entries.
  template <std::size_t N>
  std::string_view skewed(const std::array<std::string_view, N>& list) {
    const std::size_t a = pick(N), b = pick(N);
    return list[std::min(a, b)];
  }

  // 1 is past; other values are present tense.
  int tense() { return static_cast<int>(pick(3)); }

  Phrase subject_phrase(bool plural_form) {
    std::string det;
    if (plural_form) {
      constexpr std::array<std::string_view, 4> dets{"the", "some", "many", "these"};
      det = dets[pick(dets.size())];
    } else {
      constexpr std::array<std::string_view, 4> dets{"the", "a", "every", "this"};
      det = dets[pick(dets.size())];
    }
    std::string text = det + " ";
    if (coin()) text += std::string(skewed(kAdjectives)) + " ";
    const auto noun = skewed(kNouns);
    text += plural_form ? plural(noun) : std::string(noun);
    if (det == "a" && std::string_view("aeiou").find(text[2]) != std::string_view::npos) {
      text.insert(1, "n");
    }
    return {text, plural_form};
  }

  std::string verb_form(bool plural_subject, int t) {
    const auto verb = skewed(kVerbs);
    if (t == 1) return past(verb);
    return plural_subject ? std::string(verb) : third_person(verb);
  }

  std::string object() { return subject_phrase(coin()).text; }

  std::string prep_phrase() {
    const std::string prep(kPrepositions[pick(kPrepositions.size())]);
    return prep + " " + subject_phrase(coin()).text;
  }

  std::string adverbial() {
    const Phrase s = subject_phrase(coin());
    const std::string adverb(kAdverbs[pick(kAdverbs.size())]);
    const std::string verb = verb_form(s.plural, tense());
    return s.text + " " + adverb + " " + verb + " " + object();
  }

  std::string transitive() {
    const Phrase s = subject_phrase(coin());
    const std::string verb = verb_form(s.plural, tense());
    return s.text + " " + verb + " " + object();
  }

  std::string copula() {
    const Phrase s = subject_phrase(coin());
    const int t = tense();
    const char* be = t == 1 ? (s.plural ? "were" : "was") : (s.plural ? "are" : "is");
    return s.text + " " + be + " " + std::string(skewed(kAdjectives));
  }

  std::string relative() {
    const Phrase s = subject_phrase(coin());
    const std::string verb = verb_form(s.plural, 0);
    const std::string inner = verb + " " + object();
    const char* be = s.plural ? "are" : "is";
    return s.text + " that " + inner + " " + be + " " + std::string(skewed(kAdjectives));
  }

  std::string progressive_clause() {
    const Phrase s = subject_phrase(coin());
    const int t = tense();
    const char* be = t == 1 ? (s.plural ? "were" : "was") : (s.plural ? "are" : "is");
    const std::string verb = progressive(skewed(kVerbs));
    return s.text + " " + be + " " + verb + " " + object();
  }

  std::mt19937_64 rng_;
};

}  // namespace synthetic

// About target_bytes of newline-free sentences, identical for equal seeds.
inline std::vector<std::string> synthetic_corpus(std::size_t target_bytes, std::uint64_t seed) {
  return synthetic::Generator(seed).corpus(target_bytes);
}

}  // namespace vocadistill
