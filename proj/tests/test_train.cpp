#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "rpfslu/corpus.hpp"
#include "rpfslu/models/registry.hpp"
#include "rpfslu/train.hpp"

using namespace rpfslu;

namespace {

Var vec(Tape& t, std::vector<double> v) { return t.constant(Tensor::vector(std::move(v))); }

TrainConfig tiny(Mode mode, const std::string& model = "bigru") {
  TrainConfig c;
  c.model = model;
  c.mode = mode;
  c.d_w = 6;
  c.d_I = 3;
  c.d_S = 4;
  c.d_a = 4;
  c.d_h = 6;
  c.d_e = 4;
  c.lr = 1e-2;
  c.epochs = 1;
  c.seed = 3;
  return c;
}

const Corpus& tiny_corpus() {
  static const Corpus c = [] {
    auto cfg = SynthConfig::reference();
    cfg.seed = 11;
    return make_synthetic_corpus(cfg, {12, 4, 4});
  }();
  return c;
}

std::vector<Tensor> values(const Framework& fw) { return fw.params().snapshot(); }

LabelMaps toy_labels() { return LabelMaps({"a", "b"}, {"O", "B-x", "I-x", "B-y", "I-y"}); }

}  // namespace

TEST(JointLoss, PerfectPredictionIsZero) {
  Tape t;
  TurnGraph g;
  g.resI = vec(t, {0, 1, 0});
  g.resI1 = g.resI;
  g.resS = {vec(t, {1, 0}), vec(t, {0, 1})};
  g.resS1 = g.resS;
  const LabeledTurn gold{{"x", "y"}, 1, {0, 1}, {}};
  EXPECT_DOUBLE_EQ(joint_loss(g, gold, 0.5).scalar(), 0.0);
}

TEST(JointLoss, UniformIntentIsLogK) {
  Tape t;
  TurnGraph g;
  g.resI = vec(t, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  g.resI1 = g.resI;
  g.resS = {vec(t, {1, 0})};
  g.resS1 = g.resS;
  const LabeledTurn gold{{"x"}, 2, {0}, {}};
  EXPECT_NEAR(joint_loss(g, gold, 0.0).scalar(), std::log(3.0), 1e-15);
}

TEST(JointLoss, HandInstanceWithAuxiliaryTerm) {
  Tape t;
  TurnGraph g;
  g.resI = vec(t, {0.5, 0.25, 0.25});
  g.resS = {vec(t, {0.5, 0.5}), vec(t, {0.25, 0.75})};
  g.resI1 = vec(t, {0.25, 0.5, 0.25});
  g.resS1 = {vec(t, {0.8, 0.2}), vec(t, {0.5, 0.5})};
  const LabeledTurn gold{{"x", "y"}, 0, {0, 1}, {}};
  const double main = std::log(2.0) + (std::log(2.0) + std::log(4.0 / 3.0)) / 2;
  const double aux = std::log(4.0) + (std::log(1.25) + std::log(2.0)) / 2;
  EXPECT_NEAR(joint_loss(g, gold, 0.5).scalar(), main, 1e-14);
  g.resI2 = vec(t, {0.9, 0.1, 0.3});
  EXPECT_NEAR(joint_loss(g, gold, 0.5).scalar(), main + 0.5 * aux, 1e-14);
  EXPECT_NEAR(joint_loss(g, gold, 0.0).scalar(), main, 1e-14);
  const LabeledTurn short_gold{{"x"}, 0, {0}, {}};
  EXPECT_THROW(joint_loss(g, short_gold, 0.5), DimensionError);
}

TEST(Adam, HandComputedSteps) {
  ParameterSet ps;
  auto& p = ps.add("w", Tensor::vector({0.0, 1.0}));
  AdamOptimizer adam(ps.all());
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.1;
  double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {0.0, 1.0};
  const double grads[3][2] = {{1.0, -2.0}, {0.5, 0.0}, {-3.0, 1.0}};
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < 2; ++i) {
      p.grad[i] = grads[k][i];
      m[i] = b1 * m[i] + (1 - b1) * grads[k][i];
      v[i] = b2 * v[i] + (1 - b2) * grads[k][i] * grads[k][i];
      const double mh = m[i] / (1 - std::pow(b1, k + 1));
      const double vh = v[i] / (1 - std::pow(b2, k + 1));
      x[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
    adam.step(lr);
    EXPECT_NEAR(p.value[0], x[0], 1e-15);
    EXPECT_NEAR(p.value[1], x[1], 1e-15);
    if (k == 0) {
      EXPECT_NEAR(p.value[0], -0.1, 1e-8);
      EXPECT_NEAR(p.value[1], 1.1, 1e-8);
    }
  }
  EXPECT_EQ(adam.steps(), 3u);
}

TEST(Adam, ZeroGradientLeavesValues) {
  ParameterSet ps;
  auto& p = ps.add("w", Tensor::vector({0.3, -0.7}));
  AdamOptimizer adam(ps.all());
  for (int k = 0; k < 4; ++k) adam.step(0.5);
  EXPECT_EQ(p.value.data(), (std::vector<double>{0.3, -0.7}));
}

TEST(Metrics, AllCorrect) {
  const auto labels = toy_labels();
  MetricsAccumulator acc(labels);
  const std::vector<std::size_t> s{1, 2, 0};
  acc.add(0, s, 0, s);
  acc.add(1, s, 1, s);
  const auto m = acc.result();
  EXPECT_EQ(m.intent_accuracy, 1.0);
  EXPECT_EQ(m.slot_f1, 1.0);
  EXPECT_EQ(m.overall_accuracy, 1.0);
  EXPECT_EQ(m.turns, 2u);
}

TEST(Metrics, HandCountedFourTurns) {
  const auto labels = toy_labels();
  MetricsAccumulator acc(labels);
  using V = std::vector<std::size_t>;
  acc.add(0, V{1, 2, 0}, 0, V{1, 2, 0});
  acc.add(1, V{3, 0}, 1, V{1, 0});
  acc.add(0, V{0}, 1, V{0});
  acc.add(0, V{1}, 0, V{1});
  const auto m = acc.result();
  EXPECT_DOUBLE_EQ(m.intent_accuracy, 0.75);
  EXPECT_DOUBLE_EQ(m.overall_accuracy, 0.5);
  // 3 gold spans, 3 predicted, 2 matching.
  EXPECT_NEAR(m.slot_f1, 2.0 / 3.0, 1e-15);
}

TEST(Metrics, IntentRightSlotsWrong) {
  const auto labels = toy_labels();
  MetricsAccumulator acc(labels);
  using V = std::vector<std::size_t>;
  acc.add(1, V{1, 2}, 1, V{1, 0});
  const auto m = acc.result();
  EXPECT_EQ(m.intent_accuracy, 1.0);
  EXPECT_EQ(m.overall_accuracy, 0.0);
  EXPECT_EQ(m.slot_f1, 0.0);
}

TEST(Metrics, NoSpansAnywhereScoresOne) {
  const auto labels = toy_labels();
  MetricsAccumulator acc(labels);
  using V = std::vector<std::size_t>;
  acc.add(0, V{0, 0}, 0, V{0, 0});
  EXPECT_EQ(acc.result().slot_f1, 1.0);
  EXPECT_EQ(MetricsAccumulator(labels).result().turns, 0u);
}

TEST(MetricsProperty, OverallNeverExceedsIntentOrSlotExactness) {
  const auto labels = toy_labels();
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    MetricsAccumulator acc(labels);
    std::size_t exact = 0, n = 1 + rng.below(10);
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<std::size_t> g(1 + rng.below(5)), p;
      for (auto& x : g) x = rng.below(5);
      p = g;
      if (rng.bernoulli(0.5)) p[rng.below(p.size())] = rng.below(5);
      exact += p == g;
      acc.add(rng.below(2), g, rng.below(2), p);
    }
    const auto m = acc.result();
    EXPECT_LE(m.overall_accuracy, m.intent_accuracy);
    EXPECT_LE(m.overall_accuracy, static_cast<double>(exact) / static_cast<double>(n) + 1e-15);
    EXPECT_GE(m.slot_f1, 0.0);
    EXPECT_LE(m.slot_f1, 1.0);
  }
}

TEST(Training, LossDecreasesOnRepeatedTurn) {
  for (Mode mode : {Mode::basic, Mode::dhr_only, Mode::full}) {
    const auto& corpus = tiny_corpus();
    const auto cfg = tiny(mode);
    const auto vocab = build_vocab(corpus.train, 1);
    Framework fw(framework_config(cfg, vocab.size(), corpus.labels), make_model);
    AdamOptimizer adam(fw.params().all());
    const auto& d = corpus.train[0];
    DialogueMemory memory;
    rpfslu_predict_turn(fw, memory, Utterance::encode(d.turns[0].tokens, vocab), true);
    const auto u = Utterance::encode(d.turns[1].tokens, vocab);
    std::vector<double> losses;
    for (int step = 0; step < 6; ++step) {
      Tape t;
      Var loss = joint_loss(fw.forward_turn(t, memory, u), d.turns[1], 0.5);
      losses.push_back(loss.scalar());
      fw.params().zero_grad();
      t.backward(loss);
      adam.step(1e-2);
    }
    for (std::size_t k = 1; k < losses.size(); ++k) EXPECT_LT(losses[k], losses[k - 1]) << to_string(mode);
  }
}

TEST(Training, DeterministicTrajectories) {
  const auto a = train(tiny(Mode::full), tiny_corpus(), make_model);
  const auto b = train(tiny(Mode::full), tiny_corpus(), make_model);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) {
    EXPECT_EQ(a.history[k].mean_loss, b.history[k].mean_loss);
    EXPECT_EQ(a.history[k].dev, b.history[k].dev);
  }
  EXPECT_EQ(values(*a.framework), values(*b.framework));
  auto other = tiny(Mode::full);
  other.seed = 4;
  EXPECT_NE(values(*train(other, tiny_corpus(), make_model).framework), values(*a.framework));
}

TEST(Training, ZeroEpochsKeepsInitialization) {
  auto cfg = tiny(Mode::dhr_only);
  cfg.epochs = 0;
  const auto r = train(cfg, tiny_corpus(), make_model);
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.best_epoch, 0u);
  Framework fresh(framework_config(cfg, r.vocab.size(), r.labels), make_model);
  EXPECT_EQ(values(*r.framework), values(fresh));
  EXPECT_EQ(r.best_dev, evaluate(fresh, r.vocab, r.labels, tiny_corpus().dev));
}

TEST(Training, BestEpochByDevOverall) {
  auto cfg = tiny(Mode::basic);
  cfg.epochs = 3;
  const auto r = train(cfg, tiny_corpus(), make_model);
  ASSERT_EQ(r.history.size(), 4u);
  EXPECT_EQ(r.best_dev, r.history[r.best_epoch].dev);
  for (const auto& h : r.history) EXPECT_LE(h.dev.overall_accuracy, r.best_dev.overall_accuracy);
  EXPECT_EQ(evaluate(*r.framework, r.vocab, r.labels, tiny_corpus().dev), r.best_dev);
}

TEST(Training, BasicModeIgnoresHistorySource) {
  auto cfg = tiny(Mode::basic);
  const auto a = train(cfg, tiny_corpus(), make_model);
  cfg.gold_history = true;
  const auto b = train(cfg, tiny_corpus(), make_model);
  EXPECT_EQ(a.history[1].mean_loss, b.history[1].mean_loss);
  EXPECT_EQ(a.history[1].dev, b.history[1].dev);
  auto full = tiny(Mode::full);
  const auto c = train(full, tiny_corpus(), make_model);
  full.gold_history = true;
  EXPECT_NE(c.history[1].mean_loss, train(full, tiny_corpus(), make_model).history[1].mean_loss);
}

TEST(Training, DivergenceReported) {
  auto cfg = tiny(Mode::full);
  cfg.lr = 1e200;
  EXPECT_THROW(train(cfg, tiny_corpus(), make_model), TrainingError);
}

TEST(Training, InvalidConfigRejected) {
  auto cfg = tiny(Mode::full);
  cfg.d_S = 0;
  EXPECT_THROW(train(cfg, tiny_corpus(), make_model), ConfigError);
  cfg = tiny(Mode::full);
  cfg.model = "transformer";
  EXPECT_THROW(train(cfg, tiny_corpus(), make_model), ConfigError);
}

TEST(Evaluate, NoSideEffects) {
  const auto r = train(tiny(Mode::full), tiny_corpus(), make_model);
  const auto before = values(*r.framework);
  const auto m1 = evaluate(*r.framework, r.vocab, r.labels, tiny_corpus().test);
  const auto m2 = evaluate(*r.framework, r.vocab, r.labels, tiny_corpus().test);
  EXPECT_EQ(m1, m2);
  EXPECT_EQ(values(*r.framework), before);
  std::size_t turns = 0;
  for (const auto& d : tiny_corpus().test) turns += d.turns.size();
  EXPECT_EQ(m1.turns, turns);
}

TEST(Evaluate, MatchesManualPredictionLoop) {
  const auto r = train(tiny(Mode::full, "window"), tiny_corpus(), make_model);
  MetricsAccumulator acc(r.labels);
  for (const auto& d : tiny_corpus().test) {
    DialogueSession s(*r.framework, r.vocab);
    for (const auto& t : d.turns) {
      const auto p = s.predict(t.tokens);
      acc.add(t.gold_intent, t.gold_slots, p.intent(), p.slots());
    }
  }
  EXPECT_EQ(acc.result(), evaluate(*r.framework, r.vocab, r.labels, tiny_corpus().test));
}

TEST(Config, KeyValueRoundTripAndHash) {
  auto cfg = tiny(Mode::dhr_only, "window");
  cfg.lr = 0.1;
  cfg.aux_loss_weight = 0.3;
  cfg.gold_history = true;
  cfg.max_history = 4;
  TrainConfig back;
  for (const auto& [k, v] : to_key_values(cfg)) ASSERT_TRUE(set_train_key(back, k, v)) << k;
  EXPECT_EQ(to_key_values(back), to_key_values(cfg));
  EXPECT_EQ(back.lr, 0.1);
  EXPECT_EQ(config_hash(to_key_values(back)), config_hash(to_key_values(cfg)));
  back.seed = 9;
  EXPECT_NE(config_hash(to_key_values(back)), config_hash(to_key_values(cfg)));
  EXPECT_EQ(config_hash(to_key_values(cfg)).size(), 16u);
  EXPECT_FALSE(set_train_key(back, "nonsense", "1"));
  EXPECT_THROW(set_train_key(back, "d_w", "-3"), ConfigError);
  EXPECT_THROW(set_train_key(back, "lr", "fast"), ConfigError);
  EXPECT_THROW(set_train_key(back, "gold_history", "maybe"), ConfigError);
  EXPECT_THROW(set_train_key(back, "mode", "turbo"), ConfigError);
}

TEST(Checkpoint, BasicModeHasNoHistoryOrRefinementTensors) {
  const auto r = train(tiny(Mode::basic), tiny_corpus(), make_model);
  const auto tf = make_checkpoint(r.config, r.labels, r.vocab, r.framework->params());
  for (const auto& [name, tensor] : tf.tensors) {
    EXPECT_FALSE(name.starts_with("dhr.")) << name;
    EXPECT_FALSE(name.starts_with("rbfn.")) << name;
    EXPECT_FALSE(name.starts_with("repr.")) << name;
  }
}

TEST(Checkpoint, TrainedModelRoundTrip) {
  for (Mode mode : {Mode::basic, Mode::full}) {
    const auto r = train(tiny(mode), tiny_corpus(), make_model);
    const auto bytes =
        encode_tensor_file(make_checkpoint(r.config, r.labels, r.vocab, r.framework->params(), {{"note", "x"}}));
    const auto ck = load_checkpoint(decode_tensor_file(bytes), make_model);
    EXPECT_EQ(to_key_values(ck.config), to_key_values(r.config));
    EXPECT_EQ(ck.labels.intents(), r.labels.intents());
    EXPECT_EQ(ck.labels.slots(), r.labels.slots());
    EXPECT_EQ(ck.vocab.tokens(), r.vocab.tokens());
    EXPECT_EQ(ck.extra["note"], "x");
    EXPECT_EQ(values(*ck.framework), values(*r.framework));
    EXPECT_EQ(evaluate(*ck.framework, ck.vocab, ck.labels, tiny_corpus().test),
              evaluate(*r.framework, r.vocab, r.labels, tiny_corpus().test));
  }
}

TEST(Checkpoint, MismatchedConfigRejected) {
  const auto r = train(tiny(Mode::full), tiny_corpus(), make_model);
  auto tf = make_checkpoint(r.config, r.labels, r.vocab, r.framework->params());
  tf.metadata["config"]["mode"] = "basic";
  EXPECT_THROW(load_checkpoint(tf, make_model), Error);
  tf = make_checkpoint(r.config, r.labels, r.vocab, r.framework->params());
  tf.metadata["config"]["d_I"] = "5";
  EXPECT_THROW(load_checkpoint(tf, make_model), Error);
  tf = make_checkpoint(r.config, r.labels, r.vocab, r.framework->params());
  tf.metadata.erase("vocab");
  EXPECT_THROW(load_checkpoint(tf, make_model), DataError);
}

TEST(AblationTable, LayoutAndMissingColumns) {
  Metrics m{0.9, 0.8, 0.75, 10};
  const auto s = ablation_table("BiGRU", m, std::nullopt, m);
  EXPECT_NE(s.find("Basic Model"), std::string::npos);
  EXPECT_NE(s.find("with DHR"), std::string::npos);
  EXPECT_NE(s.find("with RPFSLU"), std::string::npos);
  EXPECT_NE(s.find("90.0"), std::string::npos);
  EXPECT_NE(s.find("75.0"), std::string::npos);
  EXPECT_NE(s.find(" - "), std::string::npos);
  const auto j = to_json({"dev", Mode::dhr_only, m, 4, "abc"});
  EXPECT_EQ(j["mode"], "dhr_only");
  EXPECT_EQ(j["intent_acc"], 0.9);
  EXPECT_EQ(j["config_hash"], "abc");
}
