#pragma once

// Corpus ingestion and generation.
//
// Every source is first read into RawDialogue (string labels), then indexed
// against label maps built from the training split only.
//
// Interchange format (one UTF-8 JSON document per split):
//   {"dialogues": [{"id": "...",
//                   "turns": [{"tokens": ["..."], "intent": "...",
//                              "slots": ["O", "B-x", ...],
//                              "assistant_before": [["..."]]   // optional
//                             }]}]}

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rpfslu/domain.hpp"
#include "rpfslu/errors.hpp"
#include "rpfslu/log.hpp"
#include "rpfslu/tensor.hpp"

namespace rpfslu {

struct RawTurn {
  std::vector<std::string> tokens;
  std::string intent;
  std::vector<std::string> slots;
  std::vector<std::vector<std::string>> assistant_before;

  bool operator==(const RawTurn&) const = default;
};

struct RawDialogue {
  std::string id;
  std::vector<RawTurn> turns;

  bool operator==(const RawDialogue&) const = default;
};

struct Corpus {
  LabelMaps labels;
  std::vector<Dialogue> train;
  std::vector<Dialogue> dev;
  std::vector<Dialogue> test;
};

inline constexpr const char* unknown_intent = "<unk>";

struct IndexOptions {
  // Reserve an "<unk>" intent for labels absent from the training split and
  // map unseen slot types to "O" (with a warning) instead of failing.
  bool reserve_unknown = false;
};

inline LabelMaps build_label_maps(std::span<const RawDialogue> train, const IndexOptions& opt = {}) {
  std::set<std::string> intents;
  std::set<std::string> types;
  for (const auto& d : train)
    for (const auto& t : d.turns) {
      intents.insert(t.intent);
      for (const auto& tag : t.slots) {
        const BioTag b = parse_bio(tag);
        if (b.prefix != 'O') types.insert(b.type);
      }
    }
  std::vector<std::string> intent_list(intents.begin(), intents.end());
  if (opt.reserve_unknown && !intents.contains(unknown_intent)) intent_list.push_back(unknown_intent);
  std::vector<std::string> slot_list{"O"};
  for (const auto& ty : types) {
    slot_list.push_back("B-" + ty);
    slot_list.push_back("I-" + ty);
  }
  return LabelMaps(std::move(intent_list), std::move(slot_list));
}

inline std::vector<Dialogue> index_dialogues(std::span<const RawDialogue> raw, const LabelMaps& labels,
                                             const IndexOptions& opt, const std::string& split) {
  std::vector<Dialogue> out;
  out.reserve(raw.size());
  std::size_t unseen_intents = 0, unseen_tags = 0;
  for (const auto& rd : raw) {
    Dialogue d{rd.id, {}};
    for (const auto& rt : rd.turns) {
      if (rt.tokens.size() != rt.slots.size())
        throw DataError("dialogue '" + rd.id + "': " + std::to_string(rt.tokens.size()) + " tokens but " +
                        std::to_string(rt.slots.size()) + " slot tags");
      LabeledTurn t;
      t.tokens = rt.tokens;
      t.assistant_before = rt.assistant_before;
      if (labels.has_intent(rt.intent)) {
        t.gold_intent = labels.intent_id(rt.intent);
      } else if (opt.reserve_unknown) {
        t.gold_intent = labels.intent_id(unknown_intent);
        ++unseen_intents;
      } else {
        throw DataError("dialogue '" + rd.id + "': intent '" + rt.intent + "' not seen in training split");
      }
      for (const auto& tag : rt.slots) {
        if (labels.has_slot(tag)) {
          t.gold_slots.push_back(labels.slot_id(tag));
        } else if (opt.reserve_unknown) {
          t.gold_slots.push_back(labels.outside_id());
          ++unseen_tags;
        } else {
          throw DataError("dialogue '" + rd.id + "': slot tag '" + tag + "' not seen in training split");
        }
      }
      if (!is_bio_well_formed(rt.slots)) log::debug("dialogue '" + rd.id + "': gold tags are not BIO well-formed");
      d.turns.push_back(std::move(t));
    }
    if (d.turns.empty()) throw DataError("dialogue '" + rd.id + "' has no labeled turns");
    out.push_back(std::move(d));
  }
  if (unseen_intents)
    log::warn(split + ": " + std::to_string(unseen_intents) + " turn(s) with intents unseen in training mapped to " +
              unknown_intent);
  if (unseen_tags)
    log::warn(split + ": " + std::to_string(unseen_tags) + " slot tag(s) unseen in training mapped to O");
  return out;
}

inline Corpus build_corpus(std::span<const RawDialogue> train, std::span<const RawDialogue> dev,
                           std::span<const RawDialogue> test, const IndexOptions& opt = {}) {
  if (train.empty()) throw DataError("training split is empty");
  Corpus c;
  c.labels = build_label_maps(train, opt);
  c.train = index_dialogues(train, c.labels, opt, "train");
  c.dev = index_dialogues(dev, c.labels, opt, "dev");
  c.test = index_dialogues(test, c.labels, opt, "test");
  return c;
}

inline std::vector<RawDialogue> to_raw(std::span<const Dialogue> dialogues, const LabelMaps& labels) {
  std::vector<RawDialogue> out;
  for (const auto& d : dialogues) {
    RawDialogue rd{d.dialogue_id, {}};
    for (const auto& t : d.turns)
      rd.turns.push_back({t.tokens, labels.intent_name(t.gold_intent), tag_names(t.gold_slots, labels),
                          t.assistant_before});
    out.push_back(std::move(rd));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interchange JSON

inline nlohmann::json interchange_json(std::span<const RawDialogue> dialogues) {
  nlohmann::json ds = nlohmann::json::array();
  for (const auto& d : dialogues) {
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& t : d.turns) {
      nlohmann::json jt = {{"tokens", t.tokens}, {"intent", t.intent}, {"slots", t.slots}};
      if (!t.assistant_before.empty()) jt["assistant_before"] = t.assistant_before;
      turns.push_back(std::move(jt));
    }
    ds.push_back({{"id", d.id}, {"turns", std::move(turns)}});
  }
  return {{"dialogues", std::move(ds)}};
}

inline std::vector<RawDialogue> parse_interchange(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("dialogues") || !doc["dialogues"].is_array())
    throw DataError("interchange document must be an object with a 'dialogues' array");
  std::vector<RawDialogue> out;
  std::size_t index = 0;
  for (const auto& jd : doc["dialogues"]) {
    try {
      RawDialogue d;
      d.id = jd.at("id").get<std::string>();
      for (const auto& jt : jd.at("turns")) {
        RawTurn t;
        t.tokens = jt.at("tokens").get<std::vector<std::string>>();
        t.intent = jt.at("intent").get<std::string>();
        t.slots = jt.at("slots").get<std::vector<std::string>>();
        if (jt.contains("assistant_before"))
          t.assistant_before = jt["assistant_before"].get<std::vector<std::vector<std::string>>>();
        if (t.tokens.empty()) throw DataError("turn with no tokens");
        d.turns.push_back(std::move(t));
      }
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("dialogue " + std::to_string(index) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("dialogue " + std::to_string(index) + ": " + e.what());
    }
    ++index;
  }
  return out;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw DataError("'" + path.string() + "' is empty");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("'" + path.string() + "': malformed JSON at byte " + std::to_string(e.byte));
  }
}

inline void write_interchange(const std::filesystem::path& path, std::span<const RawDialogue> dialogues) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << interchange_json(dialogues).dump(1) << '\n';
}

inline std::vector<RawDialogue> read_interchange(const std::filesystem::path& path) {
  return parse_interchange(read_json_file(path));
}

/// Reads train.json / dev.json / test.json from a directory.
inline Corpus load_interchange_dir(const std::filesystem::path& dir) {
  auto train = read_interchange(dir / "train.json");
  auto dev = read_interchange(dir / "dev.json");
  auto test = read_interchange(dir / "test.json");
  return build_corpus(train, dev, test);
}

// ---------------------------------------------------------------------------
// KVRET

/// Places B-/I- tags for `value` at its leftmost exact token match that does
/// not overlap an existing span. Returns false when the value is not found.
inline bool align_slot_value(std::span<const std::string> tokens, std::vector<std::string>& tags, const std::string& type,
                             const std::string& value) {
  const auto vt = tokenize(value);
  if (vt.empty() || vt.size() > tokens.size()) return false;
  for (std::size_t s = 0; s + vt.size() <= tokens.size(); ++s) {
    bool ok = true;
    for (std::size_t i = 0; i < vt.size() && ok; ++i) ok = tokens[s + i] == vt[i] && tags[s + i] == "O";
    if (!ok) continue;
    tags[s] = "B-" + type;
    for (std::size_t i = 1; i < vt.size(); ++i) tags[s + i] = "I-" + type;
    return true;
  }
  return false;
}

namespace detail {

inline std::vector<std::pair<std::string, std::string>> slot_pairs(const nlohmann::json& js) {
  std::vector<std::pair<std::string, std::string>> out;
  if (js.is_object()) {
    for (auto it = js.begin(); it != js.end(); ++it)
      if (it.value().is_string()) out.emplace_back(it.key(), it.value().get<std::string>());
  } else if (js.is_array()) {
    for (const auto& s : js)
      if (s.is_object() && s.contains("slot") && s.contains("value") && s["value"].is_string())
        out.emplace_back(s["slot"].get<std::string>(), s["value"].get<std::string>());
  }
  return out;
}

struct KvretStats {
  std::size_t aligned = 0;
  std::size_t skipped = 0;
};

inline RawTurn make_kvret_turn(const std::string& text, const std::string& intent,
                               const std::vector<std::pair<std::string, std::string>>& slots, KvretStats& stats) {
  RawTurn t;
  t.tokens = tokenize(text);
  t.intent = intent;
  t.slots.assign(t.tokens.size(), "O");
  for (const auto& [type, value] : slots) {
    if (align_slot_value(t.tokens, t.slots, type, value))
      ++stats.aligned;
    else
      ++stats.skipped, log::debug("slot value '" + value + "' (" + type + ") not found in '" + text + "'");
  }
  return t;
}

inline bool is_user_speaker(const std::string& s) { return s == "driver" || s == "user"; }

}  // namespace detail

/// Parses one KVRET-style file. Two dialogue layouts are accepted:
///  - the public release: {"dialogue": [{"turn": "driver"|"assistant",
///    "data": {"utterance", "slots"?, "intent"?}}], "scenario": {"task":
///    {"intent"}, "uuid"}}; a driver turn without its own slots takes the
///    slots of the following assistant turn, and without its own intent the
///    scenario intent;
///  - a flat layout: {"id", "turns": [{"speaker", "transcript"|"tokens",
///    "intent", "slots"}]}.
inline std::vector<RawDialogue> parse_kvret(const nlohmann::json& doc) {
  if (!doc.is_array()) throw DataError("KVRET document must be an array of dialogues");
  if (doc.empty()) throw DataError("KVRET document contains no dialogues");
  std::vector<RawDialogue> out;
  detail::KvretStats stats;
  for (std::size_t di = 0; di < doc.size(); ++di) {
    const auto& jd = doc[di];
    const std::string where = "dialogue " + std::to_string(di);
    try {
      if (!jd.is_object()) throw DataError("not an object");
      RawDialogue d;
      std::vector<std::vector<std::string>> pending_assistant;
      if (jd.contains("dialogue")) {
        const auto& turns = jd.at("dialogue");
        std::string default_intent;
        if (jd.contains("scenario")) {
          const auto& sc = jd["scenario"];
          if (sc.contains("task") && sc["task"].contains("intent")) default_intent = sc["task"]["intent"].get<std::string>();
          if (sc.contains("uuid")) d.id = sc["uuid"].get<std::string>();
        }
        if (d.id.empty()) d.id = "kvret-" + std::to_string(di);
        for (std::size_t ti = 0; ti < turns.size(); ++ti) {
          const auto& jt = turns[ti];
          const std::string speaker = jt.at("turn").get<std::string>();
          const auto& data = jt.at("data");
          const std::string text = data.value("utterance", std::string{});
          if (!detail::is_user_speaker(speaker)) {
            if (auto toks = tokenize(text); !toks.empty()) pending_assistant.push_back(std::move(toks));
            continue;
          }
          std::string intent = data.contains("intent") ? data["intent"].get<std::string>() : default_intent;
          if (intent.empty()) throw DataError("turn " + std::to_string(ti) + ": missing intent on a user turn");
          nlohmann::json slots = data.contains("slots") ? data["slots"] : nlohmann::json{};
          if (!data.contains("slots") && ti + 1 < turns.size() && turns[ti + 1].value("turn", "") == "assistant" &&
              turns[ti + 1].contains("data") && turns[ti + 1]["data"].contains("slots"))
            slots = turns[ti + 1]["data"]["slots"];
          if (tokenize(text).empty()) {
            log::debug(where + " turn " + std::to_string(ti) + ": empty user utterance skipped");
            continue;
          }
          RawTurn t = detail::make_kvret_turn(text, intent, detail::slot_pairs(slots), stats);
          t.assistant_before = std::move(pending_assistant);
          pending_assistant.clear();
          d.turns.push_back(std::move(t));
        }
      } else if (jd.contains("turns")) {
        d.id = jd.contains("id") ? jd["id"].get<std::string>() : "kvret-" + std::to_string(di);
        const auto& turns = jd["turns"];
        for (std::size_t ti = 0; ti < turns.size(); ++ti) {
          const auto& jt = turns[ti];
          const std::string speaker = jt.value("speaker", std::string{"user"});
          std::vector<std::string> tokens;
          std::string text;
          if (jt.contains("tokens")) {
            tokens = jt["tokens"].get<std::vector<std::string>>();
            text = join(tokens);
          } else {
            text = jt.value("transcript", std::string{});
          }
          if (!detail::is_user_speaker(speaker)) {
            if (auto toks = tokenize(text); !toks.empty()) pending_assistant.push_back(std::move(toks));
            continue;
          }
          if (!jt.contains("intent") || !jt["intent"].is_string())
            throw DataError("turn " + std::to_string(ti) + ": missing intent on a user turn");
          if (tokenize(text).empty()) continue;
          RawTurn t = detail::make_kvret_turn(text, jt["intent"].get<std::string>(),
                                              detail::slot_pairs(jt.value("slots", nlohmann::json{})), stats);
          t.assistant_before = std::move(pending_assistant);
          pending_assistant.clear();
          d.turns.push_back(std::move(t));
        }
      } else {
        throw DataError("expected a 'dialogue' or 'turns' array");
      }
      if (d.turns.empty()) {
        log::warn(where + " ('" + d.id + "') has no user turns; skipped");
        continue;
      }
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  if (stats.skipped)
    log::info("KVRET slot alignment: " + std::to_string(stats.aligned) + " aligned, " + std::to_string(stats.skipped) +
              " skipped");
  return out;
}

inline std::vector<RawDialogue> read_kvret_file(const std::filesystem::path& path) {
  return parse_kvret(read_json_file(path));
}

struct KvretSplits {
  std::vector<RawDialogue> train, dev, test;
};

/// Public release file names inside `dir`.
inline KvretSplits read_kvret_dir(const std::filesystem::path& dir) {
  return {read_kvret_file(dir / "kvret_train_public.json"), read_kvret_file(dir / "kvret_dev_public.json"),
          read_kvret_file(dir / "kvret_test_public.json")};
}

inline Corpus load_kvret(const std::filesystem::path& dir) {
  auto s = read_kvret_dir(dir);
  return build_corpus(s.train, s.dev, s.test, {.reserve_unknown = true});
}

// ---------------------------------------------------------------------------
// Synthetic multi-turn corpus

struct IntentTemplates {
  std::string intent;
  std::vector<std::string> patterns;  // "{type}" placeholders
  std::map<std::string, std::vector<std::string>> fillers;
};

/// Follow-up turns carry no intent signal: their patterns and fillers are
/// shared by every intent, and their gold intent repeats the previous turn's.
struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t num_dialogues = 800;
  std::size_t min_turns = 2;
  std::size_t max_turns = 5;
  double followup_rate = 0.3;
  std::vector<IntentTemplates> intents;
  std::vector<std::string> followup_patterns;
  std::map<std::string, std::vector<std::string>> followup_fillers;

  static SynthConfig reference();
};

inline SynthConfig SynthConfig::reference() {
  SynthConfig c;
  const std::vector<std::string> dates{"today",     "tomorrow",  "tonight",   "this weekend",
                                       "on monday", "on friday", "next week", "on thursday"};
  c.intents = {
      {"weather",
       {"what is the weather in {location} {date}", "will it rain in {location} {date}",
        "weather forecast for {location}", "is it going to be cold {date} in {location}",
        "check the temperature in {location}"},
       {{"location", {"new york", "san francisco", "paris", "boston", "los angeles", "seattle", "chicago", "denver"}},
        {"date", dates}}},
      {"navigate",
       {"navigate to the nearest {poi}", "give me directions to {poi}", "find a route to the closest {poi}",
        "take me to {poi} please", "where is the {poi}"},
       {{"poi",
         {"gas station", "coffee shop", "hospital", "parking garage", "grocery store", "rest stop",
          "chinese restaurant", "pizza place"}}}},
      {"schedule",
       {"when is my {event} {date}", "remind me about the {event} {date}", "schedule a {event} for {date}",
        "what time is my {event}", "cancel my {event}"},
       {{"event",
         {"dentist appointment", "meeting", "doctor appointment", "tennis activity", "lab appointment", "dinner",
          "conference", "yoga class"}},
        {"date", dates}}},
  };
  c.followup_patterns = {"what about {date}", "and {date}", "how about {date} then", "ok what about {date}",
                         "can you check again", "thanks tell me more"};
  c.followup_fillers = {{"date", dates}};
  return c;
}

namespace detail {

inline RawTurn instantiate(const std::string& pattern, const std::map<std::string, std::vector<std::string>>& fillers,
                           Rng& rng) {
  RawTurn t;
  for (const auto& piece : tokenize(pattern)) {
    if (piece.size() > 2 && piece.front() == '{' && piece.back() == '}') {
      const std::string type = piece.substr(1, piece.size() - 2);
      auto it = fillers.find(type);
      if (it == fillers.end() || it->second.empty()) throw ConfigError("no fillers for slot type '" + type + "'");
      const auto value = tokenize(it->second[rng.below(it->second.size())]);
      for (std::size_t i = 0; i < value.size(); ++i) {
        t.tokens.push_back(value[i]);
        t.slots.push_back((i == 0 ? "B-" : "I-") + type);
      }
    } else {
      t.tokens.push_back(piece);
      t.slots.push_back("O");
    }
  }
  return t;
}

}  // namespace detail

/// Per-turn follow-up probability for turns 2..n of an n-turn dialogue,
/// scaled so that the expected follow-up share over all turns equals
/// `followup_rate` (turn 1 is never a follow-up).
inline double followup_probability(const SynthConfig& cfg, std::size_t n) {
  if (n < 2) return 0.0;
  return std::min(1.0, cfg.followup_rate * static_cast<double>(n) / static_cast<double>(n - 1));
}

inline void validate(const SynthConfig& cfg) {
  if (!(cfg.followup_rate >= 0.0 && cfg.followup_rate <= 1.0)) throw ConfigError("followup_rate must lie in [0,1]");
  if (cfg.min_turns < 1 || cfg.max_turns < cfg.min_turns) throw ConfigError("invalid turns_per_dialogue range");
  if (cfg.intents.size() < 2) throw ConfigError("synthetic corpus needs at least 2 intents");
  auto check_fillers = [](const std::vector<std::string>& patterns,
                          const std::map<std::string, std::vector<std::string>>& fillers, const std::string& owner) {
    for (const auto& pattern : patterns)
      for (const auto& piece : tokenize(pattern))
        if (piece.size() > 2 && piece.front() == '{' && piece.back() == '}') {
          const auto it = fillers.find(piece.substr(1, piece.size() - 2));
          if (it == fillers.end() || it->second.empty())
            throw ConfigError(owner + ": no fillers for slot type '" + piece.substr(1, piece.size() - 2) + "'");
        }
  };
  for (const auto& it : cfg.intents) {
    if (it.patterns.empty()) throw ConfigError("no templates for intent '" + it.intent + "'");
    check_fillers(it.patterns, it.fillers, "intent '" + it.intent + "'");
  }
  if (cfg.followup_rate > 0.0 && cfg.followup_patterns.empty()) throw ConfigError("no follow-up templates");
  check_fillers(cfg.followup_patterns, cfg.followup_fillers, "follow-up templates");
}

/// Each dialogue keeps one topic intent; turn 1 always instantiates a topic
/// template, later turns are follow-ups with followup_probability().
inline std::vector<RawDialogue> generate_synthetic(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  std::vector<RawDialogue> out;
  out.reserve(cfg.num_dialogues);
  for (std::size_t d = 0; d < cfg.num_dialogues; ++d) {
    std::ostringstream id;
    id << "synth-" << d;
    RawDialogue dlg{id.str(), {}};
    const std::size_t n = cfg.min_turns + rng.below(cfg.max_turns - cfg.min_turns + 1);
    const auto& topic = cfg.intents[rng.below(cfg.intents.size())];
    const double p_follow = followup_probability(cfg, n);
    for (std::size_t t = 0; t < n; ++t) {
      RawTurn turn;
      if (t > 0 && rng.bernoulli(p_follow)) {
        turn = detail::instantiate(cfg.followup_patterns[rng.below(cfg.followup_patterns.size())],
                                   cfg.followup_fillers, rng);
        turn.intent = dlg.turns.back().intent;
      } else {
        turn = detail::instantiate(topic.patterns[rng.below(topic.patterns.size())], topic.fillers, rng);
        turn.intent = topic.intent;
      }
      dlg.turns.push_back(std::move(turn));
    }
    out.push_back(std::move(dlg));
  }
  return out;
}

struct SyntheticSplits {
  std::size_t train = 600;
  std::size_t dev = 100;
  std::size_t test = 100;
};

/// Generates train+dev+test dialogues in one stream and splits in order.
inline Corpus make_synthetic_corpus(SynthConfig cfg, const SyntheticSplits& sizes = {}) {
  cfg.num_dialogues = sizes.train + sizes.dev + sizes.test;
  auto all = generate_synthetic(cfg);
  const auto b = all.begin();
  std::vector<RawDialogue> train(b, b + static_cast<std::ptrdiff_t>(sizes.train));
  std::vector<RawDialogue> dev(b + static_cast<std::ptrdiff_t>(sizes.train),
                               b + static_cast<std::ptrdiff_t>(sizes.train + sizes.dev));
  std::vector<RawDialogue> test(b + static_cast<std::ptrdiff_t>(sizes.train + sizes.dev), all.end());
  return build_corpus(train, dev, test);
}

}  // namespace rpfslu
