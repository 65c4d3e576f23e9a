#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "rpfslu/corpus.hpp"

using namespace rpfslu;
namespace fs = std::filesystem;

namespace {

using Tokens = std::vector<std::string>;

fs::path fixture(const std::string& name) { return fs::path(RPFSLU_FIXTURE_DIR) / name; }

fs::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = fs::temp_directory_path() / (std::string("rpfslu_") + info->test_suite_name() + "_" + info->name());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::vector<RawDialogue> parse_text(const std::string& text) { return parse_kvret(nlohmann::json::parse(text)); }

SynthConfig synth(double rate, std::size_t n, std::uint64_t seed = 5) {
  auto c = SynthConfig::reference();
  c.followup_rate = rate;
  c.num_dialogues = n;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Kvret, FixtureTranscribedFieldByField) {
  const auto ds = read_kvret_file(fixture("kvret_sample.json"));
  ASSERT_EQ(ds.size(), 3u);

  EXPECT_EQ(ds[0].id, "sched-0001");
  ASSERT_EQ(ds[0].turns.size(), 2u);
  const auto& a = ds[0].turns[0];
  EXPECT_EQ(a.tokens, (Tokens{"when", "is", "my", "dentist", "appointment"}));
  EXPECT_EQ(a.intent, "schedule");
  EXPECT_EQ(a.slots, (Tokens{"O", "O", "O", "B-event", "I-event"}));
  EXPECT_TRUE(a.assistant_before.empty());
  const auto& b = ds[0].turns[1];
  EXPECT_EQ(b.tokens, (Tokens{"thanks", "what", "time", "again"}));
  EXPECT_EQ(b.intent, "schedule");
  EXPECT_EQ(b.slots, (Tokens{"O", "O", "O", "O"}));
  ASSERT_EQ(b.assistant_before.size(), 1u);
  EXPECT_EQ(b.assistant_before[0], (Tokens{"your", "dentist", "appointment", "is", "on", "monday", "at", "5pm"}));

  EXPECT_EQ(ds[1].id, "flat-0002");
  ASSERT_EQ(ds[1].turns.size(), 2u);
  EXPECT_EQ(ds[1].turns[0].tokens, (Tokens{"navigate", "to", "the", "gas", "station"}));
  EXPECT_EQ(ds[1].turns[0].slots, (Tokens{"O", "O", "O", "B-poi_type", "I-poi_type"}));
  EXPECT_EQ(ds[1].turns[0].intent, "navigate");
  EXPECT_EQ(ds[1].turns[1].tokens, (Tokens{"is", "it", "open"}));
  EXPECT_EQ(ds[1].turns[1].slots, (Tokens{"O", "O", "O"}));
  ASSERT_EQ(ds[1].turns[1].assistant_before.size(), 1u);
  EXPECT_EQ(ds[1].turns[1].assistant_before[0], (Tokens{"chevron", "is", "3", "miles", "away"}));

  EXPECT_EQ(ds[2].id, "weather-0003");
  ASSERT_EQ(ds[2].turns.size(), 1u);
  EXPECT_EQ(ds[2].turns[0].intent, "weather");
  EXPECT_EQ(ds[2].turns[0].slots, (Tokens{"O", "O", "B-location", "I-location", "O", "O"}));
}

TEST(Kvret, EmptyFileRejected) {
  const auto dir = scratch_dir();
  write_text(dir / "empty.json", "");
  EXPECT_THROW(read_kvret_file(dir / "empty.json"), DataError);
  write_text(dir / "blank.json", "  \n");
  EXPECT_THROW(read_kvret_file(dir / "blank.json"), DataError);
  EXPECT_THROW(parse_text("[]"), DataError);
  EXPECT_THROW(read_kvret_file(dir / "missing.json"), DataError);
}

TEST(Kvret, MalformedJsonNamesPosition) {
  const auto dir = scratch_dir();
  write_text(dir / "bad.json", "[{\"dialogue\": [}]");
  try {
    read_kvret_file(dir / "bad.json");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("malformed JSON"), std::string::npos) << e.what();
  }
}

TEST(Kvret, MissingIntentOnUserTurnNamesDialogue) {
  const std::string flat = R"([{"turns": [{"speaker": "user", "transcript": "hi", "intent": "x"}]},
                               {"turns": [{"speaker": "user", "transcript": "where to"}]}])";
  try {
    parse_text(flat);
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("dialogue 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("missing intent"), std::string::npos) << msg;
  }
  const std::string release = R"([{"dialogue": [{"turn": "driver", "data": {"utterance": "go home"}}],
                                    "scenario": {"task": {}}}])";
  EXPECT_THROW(parse_text(release), DataError);
}

TEST(Kvret, AssistantOnlyDialogueSkipped) {
  const auto ds = parse_text(R"([{"turns": [{"speaker": "assistant", "transcript": "hello"}]},
                                  {"turns": [{"speaker": "user", "transcript": "hi", "intent": "x"}]}])");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].id, "kvret-1");
}

TEST(Kvret, AlignmentLeftmostNonOverlappingAndSkips) {
  const Tokens toks{"a", "b", "a", "b", "c"};
  Tokens tags(5, "O");
  EXPECT_TRUE(align_slot_value(toks, tags, "x", "a b"));
  EXPECT_TRUE(align_slot_value(toks, tags, "y", "b"));
  EXPECT_EQ(tags, (Tokens{"B-x", "I-x", "O", "B-y", "O"}));
  EXPECT_FALSE(align_slot_value(toks, tags, "z", "d"));
  EXPECT_FALSE(align_slot_value(toks, tags, "z", ""));
  EXPECT_TRUE(align_slot_value(toks, tags, "z", "A"));
  EXPECT_EQ(tags[2], "B-z");
}

TEST(Kvret, DirectoryLoadMapsUnseenLabels) {
  const auto dir = scratch_dir();
  const auto all = nlohmann::json::parse(std::ifstream(fixture("kvret_sample.json")));
  write_text(dir / "kvret_train_public.json", nlohmann::json::array({all[0], all[1]}).dump());
  write_text(dir / "kvret_dev_public.json", nlohmann::json::array({all[2]}).dump());
  write_text(dir / "kvret_test_public.json", nlohmann::json::array({all[1]}).dump());
  const auto c = load_kvret(dir);
  EXPECT_EQ(c.train.size(), 2u);
  EXPECT_EQ(c.dev.size(), 1u);
  EXPECT_EQ(c.test.size(), 1u);
  EXPECT_EQ(c.labels.intents(), (Tokens{"navigate", "schedule", "<unk>"}));
  EXPECT_EQ(c.labels.slots(), (Tokens{"O", "B-event", "I-event", "B-poi_type", "I-poi_type"}));
  const auto& dev = c.dev[0].turns[0];
  EXPECT_EQ(dev.gold_intent, c.labels.intent_id("<unk>"));
  EXPECT_EQ(dev.gold_slots, std::vector<std::size_t>(6, c.labels.outside_id()));
  EXPECT_EQ(c.test[0].turns[0].gold_slots, (std::vector<std::size_t>{0, 0, 0, 3, 4}));
}

TEST(Kvret, ReleaseSplitSizes) {
  const char* dir = std::getenv("RPFSLU_KVRET_DIR");
  if (!dir) GTEST_SKIP() << "RPFSLU_KVRET_DIR not set";
  const auto s = read_kvret_dir(dir);
  EXPECT_EQ(s.train.size(), 2425u);
  EXPECT_EQ(s.dev.size(), 302u);
  EXPECT_EQ(s.test.size(), 304u);
}

TEST(Interchange, RoundTripThroughFile) {
  auto raw = generate_synthetic(synth(0.3, 30));
  raw[0].turns[1].assistant_before = {{"sure", "thing"}, {"anything", "else"}};
  const auto dir = scratch_dir();
  write_interchange(dir / "x.json", raw);
  EXPECT_EQ(read_interchange(dir / "x.json"), raw);
}

TEST(Interchange, CorpusRoundTrip) {
  const auto c = make_synthetic_corpus(synth(0.3, 0), {20, 5, 5});
  const auto dir = scratch_dir();
  write_interchange(dir / "train.json", to_raw(c.train, c.labels));
  write_interchange(dir / "dev.json", to_raw(c.dev, c.labels));
  write_interchange(dir / "test.json", to_raw(c.test, c.labels));
  const auto back = load_interchange_dir(dir);
  EXPECT_EQ(back.labels.intents(), c.labels.intents());
  EXPECT_EQ(back.labels.slots(), c.labels.slots());
  EXPECT_EQ(to_raw(back.train, back.labels), to_raw(c.train, c.labels));
  EXPECT_EQ(to_raw(back.test, back.labels), to_raw(c.test, c.labels));
  for (std::size_t i = 0; i < c.dev.size(); ++i) {
    ASSERT_EQ(back.dev[i].turns.size(), c.dev[i].turns.size());
    for (std::size_t t = 0; t < c.dev[i].turns.size(); ++t) {
      EXPECT_EQ(back.dev[i].turns[t].gold_intent, c.dev[i].turns[t].gold_intent);
      EXPECT_EQ(back.dev[i].turns[t].gold_slots, c.dev[i].turns[t].gold_slots);
    }
  }
}

TEST(Interchange, SchemaErrors) {
  EXPECT_THROW(parse_interchange(nlohmann::json::array()), DataError);
  EXPECT_THROW(parse_interchange(nlohmann::json::parse(R"({"dialogues": [{"turns": []}]})")), DataError);
  EXPECT_THROW(parse_interchange(nlohmann::json::parse(
                   R"({"dialogues": [{"id": "d", "turns": [{"tokens": [], "intent": "x", "slots": []}]}]})")),
               DataError);
  const auto raw = parse_interchange(nlohmann::json::parse(
      R"({"dialogues": [{"id": "d", "turns": [{"tokens": ["a", "b"], "intent": "x", "slots": ["O"]}]}]})"));
  EXPECT_THROW(build_corpus(raw, {}, {}), DataError);
  const auto ok = parse_interchange(nlohmann::json::parse(
      R"({"dialogues": [{"id": "d", "turns": [{"tokens": ["a"], "intent": "x", "slots": ["O"]}]}]})"));
  const auto other = parse_interchange(nlohmann::json::parse(
      R"({"dialogues": [{"id": "e", "turns": [{"tokens": ["a"], "intent": "y", "slots": ["O"]}]}]})"));
  EXPECT_THROW(build_corpus(ok, other, {}), DataError);
  EXPECT_THROW(build_corpus({}, ok, {}), DataError);
}

TEST(Synthetic, SameSeedSameCorpus) {
  EXPECT_EQ(generate_synthetic(synth(0.3, 50)), generate_synthetic(synth(0.3, 50)));
  EXPECT_NE(generate_synthetic(synth(0.3, 50, 1)), generate_synthetic(synth(0.3, 50, 2)));
}

TEST(Synthetic, ShapeOfGeneratedCorpus) {
  const auto ds = generate_synthetic(synth(0.3, 300));
  ASSERT_EQ(ds.size(), 300u);
  std::set<std::string> intents, types;
  for (const auto& d : ds) {
    EXPECT_GE(d.turns.size(), 2u);
    EXPECT_LE(d.turns.size(), 5u);
    for (const auto& t : d.turns) {
      EXPECT_EQ(t.tokens.size(), t.slots.size());
      EXPECT_TRUE(is_bio_well_formed(t.slots));
      EXPECT_EQ(t.intent, d.turns[0].intent);
      intents.insert(t.intent);
      for (const auto& s : t.slots)
        if (s != "O") types.insert(parse_bio(s).type);
    }
  }
  EXPECT_EQ(intents.size(), 3u);
  EXPECT_EQ(types.size(), 4u);
}

TEST(Synthetic, DefaultSplitSizes) {
  const auto c = make_synthetic_corpus(SynthConfig::reference());
  EXPECT_EQ(c.train.size(), 600u);
  EXPECT_EQ(c.dev.size(), 100u);
  EXPECT_EQ(c.test.size(), 100u);
  EXPECT_EQ(c.labels.num_intents(), 3u);
  EXPECT_EQ(c.labels.num_slots(), 9u);
}

TEST(Synthetic, ConfigErrors) {
  auto c = synth(0.3, 5);
  c.intents[1].patterns.clear();
  EXPECT_THROW(generate_synthetic(c), ConfigError);
  c = synth(1.5, 5);
  EXPECT_THROW(generate_synthetic(c), ConfigError);
  c = synth(0.3, 5);
  c.min_turns = 4;
  c.max_turns = 3;
  EXPECT_THROW(generate_synthetic(c), ConfigError);
  c = synth(0.3, 5);
  c.intents[0].fillers.clear();
  EXPECT_THROW(generate_synthetic(c), ConfigError);
}

namespace {

// Accuracy of the best classifier that sees one turn's surface form only:
// each distinct token sequence is labeled with its most frequent intent.
double surface_majority_accuracy(const std::vector<RawDialogue>& ds) {
  std::map<Tokens, std::map<std::string, std::size_t>> counts;
  std::size_t total = 0;
  for (const auto& d : ds)
    for (const auto& t : d.turns) ++counts[t.tokens][t.intent], ++total;
  std::size_t best = 0;
  for (const auto& [form, by_intent] : counts) {
    std::size_t m = 0;
    for (const auto& [intent, n] : by_intent) m = std::max(m, n);
    best += m;
  }
  return static_cast<double>(best) / static_cast<double>(total);
}

}  // namespace

TEST(Synthetic, NoFollowupsMeansEveryTurnClassifiable) {
  EXPECT_EQ(surface_majority_accuracy(generate_synthetic(synth(0.0, 400))), 1.0);
}

TEST(Synthetic, FollowupProbabilityScaling) {
  const auto c = synth(0.3, 1);
  EXPECT_EQ(followup_probability(c, 1), 0.0);
  EXPECT_NEAR(followup_probability(c, 2), 0.6, 1e-15);
  EXPECT_NEAR(followup_probability(c, 3), 0.45, 1e-15);
  EXPECT_NEAR(followup_probability(c, 5), 0.375, 1e-15);
  EXPECT_EQ(followup_probability(synth(0.8, 1), 2), 1.0);
}

TEST(Synthetic, BayesCeilingByExhaustiveEnumeration) {
  // Outcomes: dialogue length n uniform on 2..5, topic uniform over 3
  // intents, each later turn independently a follow-up with probability
  // rate*n/(n-1). A topic turn is classified perfectly; a follow-up's surface
  // form is intent-independent, so the best guess is right 1/3 of the time.
  const double rate = 0.3, k = 3.0;
  double correct = 0.0, turns = 0.0;
  for (int n = 2; n <= 5; ++n) {
    const double pn = 0.25;
    const double q = rate * n / (n - 1);
    for (int f = 0; f <= n - 1; ++f) {
      const double binom = std::tgamma(n) / (std::tgamma(f + 1) * std::tgamma(n - f));
      const double pf = binom * std::pow(q, f) * std::pow(1 - q, n - 1 - f);
      correct += pn * pf * ((n - f) + f / k);
      turns += pn * pf * n;
    }
  }
  EXPECT_NEAR(correct / turns, 0.8, 1e-12);
  const double empirical = surface_majority_accuracy(generate_synthetic(synth(rate, 4000, 17)));
  EXPECT_NEAR(empirical, 0.8, 0.02);
}

TEST(Synthetic, FollowupTokensIndependentOfIntent) {
  // Rate 1 makes every later turn a follow-up.
  const auto ds = generate_synthetic(synth(1.0, 3000, 23));
  std::map<std::string, std::map<std::string, double>> freq;
  std::map<std::string, double> totals;
  for (const auto& d : ds)
    for (std::size_t t = 1; t < d.turns.size(); ++t)
      for (const auto& tok : d.turns[t].tokens) ++freq[d.turns[t].intent][tok], ++totals[d.turns[t].intent];
  ASSERT_EQ(freq.size(), 3u);
  std::set<std::string> vocab;
  for (const auto& [intent, f] : freq)
    for (const auto& [tok, n] : f) vocab.insert(tok);
  for (const auto& [a, fa] : freq)
    for (const auto& [b, fb] : freq) {
      if (a >= b) continue;
      double tv = 0.0;
      for (const auto& tok : vocab) {
        const double pa = fa.contains(tok) ? fa.at(tok) / totals[a] : 0.0;
        const double pb = fb.contains(tok) ? fb.at(tok) / totals[b] : 0.0;
        tv += 0.5 * std::abs(pa - pb);
      }
      EXPECT_LT(tv, 0.03) << a << " vs " << b;
    }
  for (const auto& d : ds)
    for (std::size_t t = 1; t < d.turns.size(); ++t)
      for (const auto& tag : d.turns[t].slots) EXPECT_TRUE(tag == "O" || parse_bio(tag).type == "date") << tag;
}
