#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "rpfslu/errors.hpp"

namespace rpfslu {

/// Lowercase + whitespace split.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string join(std::span<const std::string> parts, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

class Vocabulary {
 public:
  static constexpr std::size_t unk_id = 0;
  static constexpr const char* unk_token = "<unk>";

  Vocabulary() : tokens_{unk_token} { index_[unk_token] = unk_id; }
  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.empty() || tokens_[0] != unk_token) throw DataError("vocabulary must start with <unk>");
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      if (!index_.emplace(tokens_[i], i).second) throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? unk_id : it->second;
  }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// A token sequence with its vocabulary ids.
struct Utterance {
  std::vector<std::string> tokens;
  std::vector<std::size_t> token_ids;

  static Utterance encode(std::vector<std::string> tokens, const Vocabulary& vocab) {
    if (tokens.empty()) throw DataError("utterance must have at least one token");
    Utterance u;
    u.token_ids.reserve(tokens.size());
    for (const auto& t : tokens) u.token_ids.push_back(vocab.id(t));
    u.tokens = std::move(tokens);
    return u;
  }
  std::size_t size() const noexcept { return tokens.size(); }
  bool operator==(const Utterance&) const = default;
};

/// Ordered name ↔ index maps for intents and BIO slot tags.
class LabelMaps {
 public:
  LabelMaps() = default;
  LabelMaps(std::vector<std::string> intents, std::vector<std::string> slots)
      : intents_(std::move(intents)), slots_(std::move(slots)) {
    if (intents_.size() < 2) throw DataError("need at least 2 intent labels");
    if (slots_.size() < 2) throw DataError("need at least 2 slot labels");
    for (std::size_t i = 0; i < intents_.size(); ++i)
      if (!intent_index_.emplace(intents_[i], i).second) throw DataError("duplicate intent label '" + intents_[i] + "'");
    for (std::size_t i = 0; i < slots_.size(); ++i)
      if (!slot_index_.emplace(slots_[i], i).second) throw DataError("duplicate slot label '" + slots_[i] + "'");
    if (!slot_index_.contains("O")) throw DataError("slot labels must contain 'O'");
  }

  std::size_t num_intents() const noexcept { return intents_.size(); }
  std::size_t num_slots() const noexcept { return slots_.size(); }
  const std::vector<std::string>& intents() const noexcept { return intents_; }
  const std::vector<std::string>& slots() const noexcept { return slots_; }

  const std::string& intent_name(std::size_t i) const { return intents_.at(i); }
  const std::string& slot_name(std::size_t i) const { return slots_.at(i); }
  std::size_t intent_id(const std::string& name) const {
    auto it = intent_index_.find(name);
    if (it == intent_index_.end()) throw DataError("unknown intent label '" + name + "'");
    return it->second;
  }
  std::size_t slot_id(const std::string& name) const {
    auto it = slot_index_.find(name);
    if (it == slot_index_.end()) throw DataError("unknown slot tag '" + name + "'");
    return it->second;
  }
  bool has_intent(const std::string& name) const { return intent_index_.contains(name); }
  bool has_slot(const std::string& name) const { return slot_index_.contains(name); }
  std::size_t outside_id() const { return slot_index_.at("O"); }

  bool operator==(const LabelMaps& o) const { return intents_ == o.intents_ && slots_ == o.slots_; }

 private:
  std::vector<std::string> intents_;
  std::vector<std::string> slots_;
  std::unordered_map<std::string, std::size_t> intent_index_;
  std::unordered_map<std::string, std::size_t> slot_index_;
};

// ---------------------------------------------------------------------------
// Prediction results

inline constexpr double distribution_tolerance = 1e-6;

inline void check_distribution(std::span<const double> p, const char* what) {
  if (p.empty()) throw ContractError(std::string(what) + ": empty distribution");
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ContractError(std::string(what) + ": negative or NaN probability");
    s += v;
  }
  if (std::abs(s - 1.0) > distribution_tolerance)
    throw ContractError(std::string(what) + ": probabilities sum to " + std::to_string(s));
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Probability vector over intent labels.
struct IntentDistribution {
  std::vector<double> probs;

  IntentDistribution() = default;
  explicit IntentDistribution(std::vector<double> p) : probs(std::move(p)) {
    check_distribution(probs, "IntentDistribution");
  }
  static IntentDistribution one_hot(std::size_t n, std::size_t c) {
    std::vector<double> p(n, 0.0);
    p.at(c) = 1.0;
    return IntentDistribution(std::move(p));
  }
  std::size_t size() const noexcept { return probs.size(); }
  std::size_t argmax() const { return rpfslu::argmax(probs); }
  bool operator==(const IntentDistribution&) const = default;
};

/// Independent per-intent scores in [0,1] (second-round sigmoid output).
struct IntentScoreVector {
  std::vector<double> scores;

  IntentScoreVector() = default;
  explicit IntentScoreVector(std::vector<double> s) : scores(std::move(s)) {
    for (double v : scores)
      if (!(v >= 0.0 && v <= 1.0)) throw ContractError("IntentScoreVector: score outside [0,1]");
  }
  std::size_t size() const noexcept { return scores.size(); }
  bool operator==(const IntentScoreVector&) const = default;
};

/// One slot-tag distribution per token.
struct SlotDistributionSequence {
  std::vector<std::vector<double>> per_token;

  SlotDistributionSequence() = default;
  explicit SlotDistributionSequence(std::vector<std::vector<double>> p) : per_token(std::move(p)) {
    for (const auto& s : per_token) check_distribution(s, "SlotDistributionSequence");
  }
  static SlotDistributionSequence one_hot(std::size_t n, std::span<const std::size_t> tags) {
    std::vector<std::vector<double>> p;
    for (auto t : tags) {
      std::vector<double> v(n, 0.0);
      v.at(t) = 1.0;
      p.push_back(std::move(v));
    }
    return SlotDistributionSequence(std::move(p));
  }
  std::size_t size() const noexcept { return per_token.size(); }
  std::vector<std::size_t> argmax() const {
    std::vector<std::size_t> out;
    for (const auto& s : per_token) out.push_back(rpfslu::argmax(s));
    return out;
  }
  bool operator==(const SlotDistributionSequence&) const = default;
};

struct MemoryEntry {
  Utterance utterance;
  IntentDistribution intent;
  SlotDistributionSequence slots;
};

/// Per-dialogue list of past utterances with their predicted results.
/// Stored distributions are plain values, never part of a gradient graph.
class DialogueMemory {
 public:
  void append(Utterance u, IntentDistribution resI, SlotDistributionSequence resS) {
    if (resS.size() != u.size())
      throw ContractError("memory_append: " + std::to_string(resS.size()) + " slot distributions for " +
                          std::to_string(u.size()) + " tokens");
    entries_.push_back({std::move(u), std::move(resI), std::move(resS)});
  }
  void clear() { entries_.clear(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<MemoryEntry>& entries() const noexcept { return entries_; }
  const MemoryEntry& operator[](std::size_t i) const { return entries_.at(i); }

 private:
  std::vector<MemoryEntry> entries_;
};

// ---------------------------------------------------------------------------
// Corpus data model

struct LabeledTurn {
  std::vector<std::string> tokens;
  std::size_t gold_intent = 0;
  std::vector<std::size_t> gold_slots;
  // Raw assistant responses between the previous user turn and this one.
  std::vector<std::vector<std::string>> assistant_before;

  bool operator==(const LabeledTurn&) const = default;
};

struct Dialogue {
  std::string dialogue_id;
  std::vector<LabeledTurn> turns;

  bool operator==(const Dialogue&) const = default;
};

/// Tokens with frequency ≥ min_count, ordered by descending frequency then
/// lexicographically, after the reserved <unk> at index 0.
inline Vocabulary build_vocab(std::span<const Dialogue> corpus, std::size_t min_count) {
  if (corpus.empty()) throw DataError("build_vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& d : corpus)
    for (const auto& t : d.turns)
      for (const auto& tok : t.tokens) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> items;
  for (auto& [tok, n] : counts)
    if (n >= min_count && tok != Vocabulary::unk_token) items.emplace_back(tok, n);
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{Vocabulary::unk_token};
  for (auto& [tok, n] : items) tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

// ---------------------------------------------------------------------------
// BIO spans

struct Span {
  std::string type;
  std::size_t start;
  std::size_t end;  // inclusive

  auto operator<=>(const Span&) const = default;
};

struct BioTag {
  char prefix;  // 'B', 'I' or 'O'
  std::string type;
};

inline BioTag parse_bio(const std::string& tag) {
  if (tag == "O") return {'O', {}};
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') return {tag[0], tag.substr(2)};
  throw DataError("malformed BIO tag '" + tag + "'");
}

/// Contiguous spans under lenient decoding: an I- tag that does not continue
/// a span of the same type opens a new one.
inline std::set<Span> extract_spans(std::span<const std::string> tags) {
  std::set<Span> spans;
  bool open = false;
  Span cur{};
  for (std::size_t j = 0; j < tags.size(); ++j) {
    const BioTag t = parse_bio(tags[j]);
    const bool continues = t.prefix == 'I' && open && cur.type == t.type;
    if (continues) {
      cur.end = j;
      continue;
    }
    if (open) spans.insert(cur), open = false;
    if (t.prefix != 'O') cur = {t.type, j, j}, open = true;
  }
  if (open) spans.insert(cur);
  return spans;
}

/// Same as above, but also rejects tags outside the label set.
inline std::set<Span> extract_spans(std::span<const std::string> tags, const LabelMaps& labels) {
  for (const auto& t : tags)
    if (!labels.has_slot(t)) throw DataError("unknown slot tag '" + t + "'");
  return extract_spans(tags);
}

inline std::vector<std::string> tag_names(std::span<const std::size_t> ids, const LabelMaps& labels) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(labels.slot_name(i));
  return out;
}

/// True when every I-x directly follows B-x or I-x.
inline bool is_bio_well_formed(std::span<const std::string> tags) {
  std::string prev = "O";
  for (const auto& tag : tags) {
    const BioTag t = parse_bio(tag);
    if (t.prefix == 'I') {
      const BioTag p = parse_bio(prev);
      if (p.prefix == 'O' || p.type != t.type) return false;
    }
    prev = tag;
  }
  return true;
}

}  // namespace rpfslu
