#pragma once

// Joint training over dialogues with on-policy memory, evaluation metrics
// and the metrics report.

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rpfslu/basic_model.hpp"
#include "rpfslu/checkpoint.hpp"
#include "rpfslu/corpus.hpp"
#include "rpfslu/domain.hpp"
#include "rpfslu/framework.hpp"
#include "rpfslu/log.hpp"

namespace rpfslu {

struct TrainConfig {
  std::string model = "bigru";
  Mode mode = Mode::full;
  std::size_t d_w = 32;
  std::size_t d_I = 8;
  std::size_t d_S = 32;
  std::size_t d_a = 64;
  std::size_t d_h = 64;
  std::size_t d_e = 64;
  std::size_t window_radius = 1;
  double lr = 1e-3;
  std::size_t epochs = 5;
  std::uint64_t seed = 1;
  double aux_loss_weight = 0.5;
  bool gold_history = false;
  bool include_assistant_history = false;
  std::size_t max_history = 0;
  std::size_t min_count = 1;
};

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size() || x < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

}  // namespace detail

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline KeyValues to_key_values(const TrainConfig& c) {
  using detail::format_double;
  return {{"model", c.model},
          {"mode", to_string(c.mode)},
          {"d_w", std::to_string(c.d_w)},
          {"d_I", std::to_string(c.d_I)},
          {"d_S", std::to_string(c.d_S)},
          {"d_a", std::to_string(c.d_a)},
          {"d_h", std::to_string(c.d_h)},
          {"d_e", std::to_string(c.d_e)},
          {"window_radius", std::to_string(c.window_radius)},
          {"lr", format_double(c.lr)},
          {"epochs", std::to_string(c.epochs)},
          {"seed", std::to_string(c.seed)},
          {"aux_loss_weight", format_double(c.aux_loss_weight)},
          {"gold_history", c.gold_history ? "true" : "false"},
          {"include_assistant_history", c.include_assistant_history ? "true" : "false"},
          {"max_history", std::to_string(c.max_history)},
          {"min_count", std::to_string(c.min_count)}};
}

/// Applies one key; returns false when the key is not a training key.
inline bool set_train_key(TrainConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  if (key == "model") c.model = v;
  else if (key == "mode") c.mode = parse_mode(v);
  else if (key == "d_w") c.d_w = parse_size(key, v);
  else if (key == "d_I") c.d_I = parse_size(key, v);
  else if (key == "d_S") c.d_S = parse_size(key, v);
  else if (key == "d_a") c.d_a = parse_size(key, v);
  else if (key == "d_h") c.d_h = parse_size(key, v);
  else if (key == "d_e") c.d_e = parse_size(key, v);
  else if (key == "window_radius") c.window_radius = parse_size(key, v);
  else if (key == "lr") c.lr = parse_double(key, v);
  else if (key == "epochs") c.epochs = parse_size(key, v);
  else if (key == "seed") c.seed = parse_size(key, v);
  else if (key == "aux_loss_weight") c.aux_loss_weight = parse_double(key, v);
  else if (key == "gold_history") c.gold_history = parse_bool(key, v);
  else if (key == "include_assistant_history") c.include_assistant_history = parse_bool(key, v);
  else if (key == "max_history") c.max_history = parse_size(key, v);
  else if (key == "min_count") c.min_count = parse_size(key, v);
  else return false;
  return true;
}

inline void validate(const TrainConfig& c) {
  for (auto [name, d] : {std::pair{"d_w", c.d_w}, {"d_I", c.d_I}, {"d_S", c.d_S}, {"d_a", c.d_a}, {"d_h", c.d_h},
                         {"d_e", c.d_e}})
    if (d == 0) throw ConfigError(std::string(name) + " must be positive");
  if (c.aux_loss_weight < 0) throw ConfigError("aux_loss_weight must be non-negative");
  if (!(c.lr > 0)) throw ConfigError("lr must be positive");
}

/// FNV-1a over "key=value\n" lines, hex encoded.
inline std::string config_hash(const KeyValues& kv) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : kv)
    for (char ch : k + "=" + v + "\n") h = (h ^ static_cast<unsigned char>(ch)) * 0x100000001b3ULL;
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline FrameworkConfig framework_config(const TrainConfig& c, std::size_t vocab_size, const LabelMaps& labels) {
  FrameworkConfig f;
  f.mode = c.mode;
  f.model = {c.model, c.d_w, c.d_h, c.window_radius, labels.num_intents(), labels.num_slots()};
  f.vocab_size = vocab_size;
  f.d_I = c.d_I;
  f.d_S = c.d_S;
  f.d_a = c.d_a;
  f.d_e = c.d_e;
  f.max_history = c.max_history;
  f.seed = c.seed;
  return f;
}

// ---------------------------------------------------------------------------
// Loss and optimizer

inline Var mean_slot_ce(std::span<const Var> slots, std::span<const std::size_t> gold) {
  if (slots.size() != gold.size())
    throw DimensionError("joint_loss: " + std::to_string(slots.size()) + " slot distributions for " +
                         std::to_string(gold.size()) + " gold tags");
  Var total = neg_log_pick(slots[0], gold[0]);
  for (std::size_t j = 1; j < slots.size(); ++j) total = add(total, neg_log_pick(slots[j], gold[j]));
  return scale(total, 1.0 / static_cast<double>(slots.size()));
}

/// CE(resI) + mean_j CE(s_j) + λ·[CE(resI¹) + mean_j CE(s¹_j)]. The λ term
/// applies only when the final results differ from round one (full mode).
inline Var joint_loss(const TurnGraph& g, const LabeledTurn& gold, double aux_weight) {
  Var loss = add(neg_log_pick(g.resI, gold.gold_intent), mean_slot_ce(g.resS, gold.gold_slots));
  if (g.resI2 && aux_weight > 0.0) {
    Var aux = add(neg_log_pick(g.resI1, gold.gold_intent), mean_slot_ce(g.resS1, gold.gold_slots));
    loss = add(loss, scale(aux, aux_weight));
  }
  return loss;
}

/// Adam with bias correction.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Parameter*> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }

  /// One in-place update from each parameter's accumulated gradient.
  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double g = p.grad[i];
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
        p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
    }
  }

  std::size_t steps() const noexcept { return t_; }
  const std::vector<double>& first_moment(std::size_t k) const { return m_.at(k); }
  const std::vector<double>& second_moment(std::size_t k) const { return v_.at(k); }

 private:
  std::vector<Parameter*> params_;
  double beta1_, beta2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation

struct Metrics {
  double intent_accuracy = 0.0;
  double slot_f1 = 0.0;
  double overall_accuracy = 0.0;
  std::size_t turns = 0;

  bool operator==(const Metrics&) const = default;
};

/// Accumulates turn-level counts; slot F1 is span-level micro F1.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(const LabelMaps& labels) : labels_(labels) {}

  void add(std::size_t gold_intent, std::span<const std::size_t> gold_slots, std::size_t pred_intent,
           std::span<const std::size_t> pred_slots) {
    ++turns_;
    const bool intent_ok = gold_intent == pred_intent;
    const bool slots_ok = std::equal(gold_slots.begin(), gold_slots.end(), pred_slots.begin(), pred_slots.end());
    intent_correct_ += intent_ok;
    overall_correct_ += intent_ok && slots_ok;
    const auto gold = extract_spans(tag_names(gold_slots, labels_));
    const auto pred = extract_spans(tag_names(pred_slots, labels_));
    gold_spans_ += gold.size();
    pred_spans_ += pred.size();
    for (const auto& s : pred) true_positives_ += gold.contains(s);
  }

  Metrics result() const {
    Metrics m;
    m.turns = turns_;
    if (turns_ == 0) return m;
    const double n = static_cast<double>(turns_);
    m.intent_accuracy = static_cast<double>(intent_correct_) / n;
    m.overall_accuracy = static_cast<double>(overall_correct_) / n;
    if (gold_spans_ == 0 && pred_spans_ == 0) {
      m.slot_f1 = 1.0;
    } else if (true_positives_ > 0) {
      const double p = static_cast<double>(true_positives_) / static_cast<double>(pred_spans_);
      const double r = static_cast<double>(true_positives_) / static_cast<double>(gold_spans_);
      m.slot_f1 = 2.0 * p * r / (p + r);
    }
    return m;
  }

 private:
  const LabelMaps& labels_;
  std::size_t turns_ = 0, intent_correct_ = 0, overall_correct_ = 0;
  std::size_t gold_spans_ = 0, pred_spans_ = 0, true_positives_ = 0;
};

/// Predictions for every user turn of a dialogue, with on-policy memory.
/// Assistant utterances, when included, are predicted and remembered but
/// not returned.
inline std::vector<TurnPrediction> predict_dialogue(const Framework& fw, const Vocabulary& vocab, const Dialogue& d,
                                                    bool include_assistant = false) {
  DialogueMemory memory;
  std::vector<TurnPrediction> out;
  out.reserve(d.turns.size());
  for (const auto& turn : d.turns) {
    if (include_assistant)
      for (const auto& a : turn.assistant_before) rpfslu_predict_turn(fw, memory, Utterance::encode(a, vocab), true);
    out.push_back(rpfslu_predict_turn(fw, memory, Utterance::encode(turn.tokens, vocab), true));
  }
  return out;
}

inline Metrics evaluate(const Framework& fw, const Vocabulary& vocab, const LabelMaps& labels,
                        std::span<const Dialogue> split, bool include_assistant = false) {
  MetricsAccumulator acc(labels);
  for (const auto& d : split) {
    const auto preds = predict_dialogue(fw, vocab, d, include_assistant);
    for (std::size_t t = 0; t < d.turns.size(); ++t)
      acc.add(d.turns[t].gold_intent, d.turns[t].gold_slots, preds[t].intent(), preds[t].slots());
  }
  return acc.result();
}

struct MetricsReport {
  std::string split;
  Mode mode = Mode::full;
  Metrics metrics;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  return {{"split", r.split},
          {"mode", to_string(r.mode)},
          {"intent_acc", r.metrics.intent_accuracy},
          {"slot_f1", r.metrics.slot_f1},
          {"overall_acc", r.metrics.overall_accuracy},
          {"seed", r.seed},
          {"config_hash", r.config_hash}};
}

/// Fixed-width table with the three ablation columns; missing columns print "-".
inline std::string ablation_table(const std::string& row_name, const std::optional<Metrics>& basic,
                                  const std::optional<Metrics>& dhr, const std::optional<Metrics>& full) {
  auto cell = [](const std::optional<Metrics>& m, double Metrics::*field) {
    std::ostringstream os;
    if (m)
      os << std::fixed << std::setprecision(1) << 100.0 * ((*m).*field);
    else
      os << "-";
    return os.str();
  };
  std::ostringstream os;
  os << std::left << std::setw(16) << "Model" << " | " << std::setw(32) << "Basic Model" << " | " << std::setw(32)
     << "with DHR" << " | " << "with RPFSLU" << '\n';
  os << std::setw(16) << "" << " | ";
  for (int i = 0; i < 3; ++i) {
    os << std::setw(10) << "Intent" << ' ' << std::setw(10) << "Slot(F1)" << ' ' << std::setw(10) << "Overall";
    if (i < 2) os << " | ";
  }
  os << '\n' << std::setw(16) << row_name << " | ";
  const std::optional<Metrics>* cols[] = {&basic, &dhr, &full};
  for (int i = 0; i < 3; ++i) {
    os << std::setw(10) << cell(*cols[i], &Metrics::intent_accuracy) << ' ' << std::setw(10)
       << cell(*cols[i], &Metrics::slot_f1) << ' ' << std::setw(10) << cell(*cols[i], &Metrics::overall_accuracy);
    if (i < 2) os << " | ";
  }
  os << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  Metrics dev;
};

struct TrainResult {
  TrainConfig config;
  LabelMaps labels;
  Vocabulary vocab;
  std::unique_ptr<Framework> framework;
  std::vector<EpochRecord> history;  // epoch 0 is the initialization
  std::size_t best_epoch = 0;
  Metrics best_dev;
};

inline std::vector<Utterance> encode_turns(const Dialogue& d, const Vocabulary& vocab) {
  std::vector<Utterance> out;
  for (const auto& t : d.turns) out.push_back(Utterance::encode(t.tokens, vocab));
  return out;
}

/// Per-turn SGD over dialogues in a seeded shuffled order. Each dialogue
/// starts from an empty memory that is filled with the model's own results
/// (or one-hot gold results with gold_history). The returned framework holds
/// the parameters of the epoch with the best dev overall accuracy.
inline TrainResult train(const TrainConfig& cfg, const Corpus& corpus, const ModelFactory& factory,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  validate(cfg);
  if (corpus.train.empty()) throw DataError("training split is empty");
  TrainResult result;
  result.config = cfg;
  result.labels = corpus.labels;
  result.vocab = build_vocab(corpus.train, cfg.min_count);
  result.framework =
      std::make_unique<Framework>(framework_config(cfg, result.vocab.size(), result.labels), factory);
  Framework& fw = *result.framework;
  ParameterSet& params = fw.params();
  AdamOptimizer adam(params.all());

  auto dev_metrics = [&] {
    return evaluate(fw, result.vocab, result.labels, corpus.dev, cfg.include_assistant_history);
  };
  result.history.push_back({0, 0.0, dev_metrics()});
  result.best_dev = result.history.back().dev;
  std::vector<Tensor> best = params.snapshot();
  if (on_epoch) on_epoch(result.history.back());

  std::vector<std::vector<Utterance>> utterances;
  utterances.reserve(corpus.train.size());
  for (const auto& d : corpus.train) utterances.push_back(encode_turns(d, result.vocab));

  std::vector<std::size_t> order(corpus.train.size());
  Rng shuffle_rng(cfg.seed ^ 0x5DEECE66DULL);
  const std::size_t num_intents = result.labels.num_intents();
  const std::size_t num_slots = result.labels.num_slots();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double loss_sum = 0.0;
    std::size_t turn_count = 0;
    for (std::size_t di : order) {
      const Dialogue& d = corpus.train[di];
      DialogueMemory memory;
      for (std::size_t t = 0; t < d.turns.size(); ++t) {
        const LabeledTurn& gold = d.turns[t];
        if (cfg.include_assistant_history)
          for (const auto& a : gold.assistant_before)
            rpfslu_predict_turn(fw, memory, Utterance::encode(a, result.vocab), true);
        const Utterance& u = utterances[di][t];
        Tape tape;
        double loss_value = 0.0;
        TurnPrediction pred;
        try {
          TurnGraph g = fw.forward_turn(tape, memory, u);
          Var loss = joint_loss(g, gold, cfg.aux_loss_weight);
          loss_value = loss.scalar();
          if (!std::isfinite(loss_value)) throw ContractError("non-finite loss");
          if (!cfg.gold_history) pred = to_prediction(g);
          params.zero_grad();
          tape.backward(loss);
        } catch (const ContractError& e) {
          throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ", dialogue '" +
                              d.dialogue_id + "', turn " + std::to_string(t) + ": " + e.what());
        }
        adam.step(cfg.lr);
        for (auto* p : params.all())
          for (double v : p->value.values())
            if (!std::isfinite(v))
              throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ", dialogue '" +
                                  d.dialogue_id + "', turn " + std::to_string(t) + ": parameter '" + p->name +
                                  "' is not finite");
        loss_sum += loss_value;
        ++turn_count;
        if (cfg.gold_history)
          memory.append(u, IntentDistribution::one_hot(num_intents, gold.gold_intent),
                        SlotDistributionSequence::one_hot(num_slots, gold.gold_slots));
        else
          memory.append(u, std::move(pred.resI), std::move(pred.resS));
      }
    }
    EpochRecord rec{epoch, turn_count ? loss_sum / static_cast<double>(turn_count) : 0.0, dev_metrics()};
    log::info("epoch " + std::to_string(epoch) + " loss " + detail::format_double(rec.mean_loss) + " dev overall " +
              detail::format_double(rec.dev.overall_accuracy));
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (corpus.dev.empty() || rec.dev.overall_accuracy > result.best_dev.overall_accuracy) {
      result.best_dev = rec.dev;
      result.best_epoch = epoch;
      best = params.snapshot();
    }
  }
  params.restore(best);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint

inline TensorFile make_checkpoint(const TrainConfig& cfg, const LabelMaps& labels, const Vocabulary& vocab,
                                  const ParameterSet& params, const nlohmann::json& extra = nlohmann::json::object()) {
  TensorFile tf;
  nlohmann::json conf = nlohmann::json::object();
  for (const auto& [k, v] : to_key_values(cfg)) conf[k] = v;
  tf.metadata = {{"config", conf},
                 {"intent_labels", labels.intents()},
                 {"slot_labels", labels.slots()},
                 {"vocab", vocab.tokens()},
                 {"extra", extra}};
  tf.tensors = export_parameters(params);
  return tf;
}

struct LoadedCheckpoint {
  TrainConfig config;
  LabelMaps labels;
  Vocabulary vocab;
  std::unique_ptr<Framework> framework;
  nlohmann::json extra;
};

inline LoadedCheckpoint load_checkpoint(const TensorFile& tf, const ModelFactory& factory) {
  LoadedCheckpoint ck;
  try {
    const auto& md = tf.metadata;
    for (auto it = md.at("config").begin(); it != md.at("config").end(); ++it)
      if (!set_train_key(ck.config, it.key(), it.value().get<std::string>()))
        throw DataError("checkpoint config has unknown key '" + it.key() + "'");
    ck.labels = LabelMaps(md.at("intent_labels").get<std::vector<std::string>>(),
                          md.at("slot_labels").get<std::vector<std::string>>());
    ck.vocab = Vocabulary(md.at("vocab").get<std::vector<std::string>>());
    ck.extra = md.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint metadata: ") + e.what());
  }
  ck.framework = std::make_unique<Framework>(framework_config(ck.config, ck.vocab.size(), ck.labels), factory);
  import_parameters(ck.framework->params(), tf.tensors);
  return ck;
}

}  // namespace rpfslu
