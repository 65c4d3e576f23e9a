#pragma once

// Composition of history representation and bi-feedback around an opaque
// basic model. Three wirings share this code path:
//   basic   : plain embeddings, one round
//   dhr_only: history-aware embeddings, one round
//   full    : history-aware embeddings, two rounds with result feedback

#include <atomic>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rpfslu/basic_model.hpp"
#include "rpfslu/dialogue_history.hpp"
#include "rpfslu/domain.hpp"
#include "rpfslu/rbfn.hpp"
#include "rpfslu/result_repr.hpp"

namespace rpfslu {

enum class Mode { basic, dhr_only, full };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::basic: return "basic";
    case Mode::dhr_only: return "dhr_only";
    case Mode::full: return "full";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "basic") return Mode::basic;
  if (s == "dhr_only") return Mode::dhr_only;
  if (s == "full") return Mode::full;
  throw ConfigError("unknown mode '" + s + "' (expected basic, dhr_only or full)");
}

struct FrameworkConfig {
  Mode mode = Mode::full;
  ModelConfig model;
  std::size_t vocab_size = 1;
  std::size_t d_I = 8;
  std::size_t d_S = 32;
  std::size_t d_a = 64;
  std::size_t d_e = 64;
  std::size_t max_history = 0;  // 0 = unlimited
  std::uint64_t seed = 1;
  bool identity_rbfn = false;   // start the injections as pass-through projections
};

/// Recorded quantities of one predicted turn.
struct TurnGraph {
  std::vector<Var> embeddings;  // e^H (or e^T in basic mode)
  Var resI1;
  std::vector<Var> resS1;
  std::optional<Var> resI2;
  std::vector<Var> resS2;
  Var resI;
  std::vector<Var> resS;
  std::optional<Var> history_weights;
  std::optional<Var> attention;  // α over round-one slot latents
  std::size_t fallbacks = 0;
};

/// Plain-value view of a TurnGraph. resI2/resS2 are empty outside full mode.
struct TurnPrediction {
  IntentDistribution resI1;
  SlotDistributionSequence resS1;
  IntentScoreVector resI2;
  SlotDistributionSequence resS2;
  IntentDistribution resI;
  SlotDistributionSequence resS;
  std::vector<double> history_weights;
  std::vector<double> attention;

  std::size_t intent() const { return resI.argmax(); }
  std::vector<std::size_t> slots() const { return resS.argmax(); }
};

inline std::vector<std::vector<double>> values_of(std::span<const Var> vs) {
  std::vector<std::vector<double>> out;
  out.reserve(vs.size());
  for (const auto& v : vs) out.push_back(v.values());
  return out;
}

inline TurnPrediction to_prediction(const TurnGraph& g) {
  TurnPrediction p;
  p.resI1 = IntentDistribution(g.resI1.values());
  p.resS1 = SlotDistributionSequence(values_of(g.resS1));
  if (g.resI2) p.resI2 = IntentScoreVector(g.resI2->values());
  if (!g.resS2.empty()) p.resS2 = SlotDistributionSequence(values_of(g.resS2));
  p.resI = IntentDistribution(g.resI.values());
  p.resS = SlotDistributionSequence(values_of(g.resS));
  if (g.history_weights) p.history_weights = g.history_weights->values();
  if (g.attention) p.attention = g.attention->values();
  return p;
}

class Framework {
 public:
  Framework(const FrameworkConfig& cfg, const ModelFactory& factory) : cfg_(cfg) {
    Rng rng(cfg.seed);
    embedding_ = EmbeddingTable::create(params_, "embed.table", cfg.vocab_size, cfg.model.embedding_dim, rng);
    model_ = factory(params_, cfg.model, rng);
    if (!model_) throw ConfigError("model factory returned no model");
    if (model_->embedding_dim() != cfg.model.embedding_dim)
      throw ConfigError("model embedding width does not match the embedding table");
    const std::size_t d_w = cfg.model.embedding_dim;
    if (cfg.mode != Mode::basic) {
      repr_ = ResultReprParams::create(params_, "repr", cfg.model.num_intents, cfg.model.num_slots, cfg.d_I, cfg.d_S,
                                       cfg.d_a, rng);
      dhr_ = DhrParams::create(params_, "dhr", d_w, cfg.d_e, cfg.d_I, cfg.d_S, rng);
    }
    if (cfg.mode == Mode::full) {
      rbfn_ = RbfnParams::create(params_, "rbfn", d_w, cfg.d_I, cfg.d_S, rng);
      if (cfg.identity_rbfn) rbfn_.set_identity();
    }
  }

  Framework(const Framework&) = delete;
  Framework& operator=(const Framework&) = delete;

  const FrameworkConfig& config() const noexcept { return cfg_; }
  Mode mode() const noexcept { return cfg_.mode; }
  ParameterSet& params() noexcept { return params_; }
  const ParameterSet& params() const noexcept { return params_; }
  const BasicModel& model() const noexcept { return *model_; }
  const EmbeddingTable& embedding() const noexcept { return embedding_; }
  const ResultReprParams& repr() const {
    require(cfg_.mode != Mode::basic, "result representation");
    return repr_;
  }
  const DhrParams& dhr() const {
    require(cfg_.mode != Mode::basic, "history representation");
    return dhr_;
  }
  const RbfnParams& rbfn() const {
    require(cfg_.mode == Mode::full, "bi-feedback");
    return rbfn_;
  }
  RbfnParams& rbfn() {
    require(cfg_.mode == Mode::full, "bi-feedback");
    return rbfn_;
  }

  /// Zero-sum merge fallbacks observed since construction.
  std::size_t fallback_count() const noexcept { return fallbacks_.load(); }

  /// Records one turn on `tape`. Memory is read, never modified.
  TurnGraph forward_turn(Tape& tape, const DialogueMemory& memory, const Utterance& u) const {
    TurnGraph g;
    if (cfg_.mode == Mode::basic) {
      g.embeddings = embed(tape, embedding_, u);
    } else {
      DhrOutput h = dhr_forward(tape, dhr_, repr_, embedding_, memory, u, cfg_.max_history);
      g.embeddings = std::move(h.embeddings);
      g.history_weights = h.weights;
    }
    ModelOutput first = round_one(tape, *model_, g.embeddings);
    g.resI1 = first.intent;
    g.resS1 = std::move(first.slots);
    if (cfg_.mode != Mode::full) {
      g.resI = g.resI1;
      g.resS = g.resS1;
      return g;
    }
    Var lsvI = intent_latent(tape, repr_, g.resI1);
    AttentionPool pooled = slot_latent(tape, repr_, g.resS1);
    g.attention = pooled.weights;
    InjectedEmbeddings injected = result_inject(tape, rbfn_, g.embeddings, lsvI, pooled.pooled);
    RoundTwo second = round_two(tape, *model_, injected.intent_guided, injected.slot_guided);
    g.resI2 = second.intent_scores;
    g.resS2 = second.slots;
    MergedResults merged = merge_and_normalize(g.resI1, second.intent_scores, g.resS1, second.slots);
    g.resI = merged.intent;
    g.resS = std::move(merged.slots);
    g.fallbacks = merged.fallbacks;
    if (merged.fallbacks) fallbacks_ += merged.fallbacks;
    return g;
  }

 private:
  void require(bool ok, const char* what) const {
    if (!ok) throw ContractError(std::string(what) + " parameters are not present in mode " + to_string(cfg_.mode));
  }

  FrameworkConfig cfg_;
  ParameterSet params_;
  EmbeddingTable embedding_;
  std::unique_ptr<BasicModel> model_;
  ResultReprParams repr_;
  DhrParams dhr_;
  RbfnParams rbfn_;
  mutable std::atomic<std::size_t> fallbacks_{0};
};

/// Predicts one turn and, when asked, appends (u, resI, resS) to memory
/// after the prediction.
inline TurnPrediction rpfslu_predict_turn(const Framework& fw, DialogueMemory& memory, const Utterance& u,
                                          bool update_memory) {
  Tape tape;
  TurnPrediction p = to_prediction(fw.forward_turn(tape, memory, u));
  if (update_memory) memory.append(u, p.resI, p.resS);
  return p;
}

/// One dialogue's running state: the framework plus its own memory.
class DialogueSession {
 public:
  DialogueSession(const Framework& fw, const Vocabulary& vocab) : fw_(fw), vocab_(vocab) {}

  TurnPrediction predict(std::vector<std::string> tokens) {
    return rpfslu_predict_turn(fw_, memory_, Utterance::encode(std::move(tokens), vocab_), true);
  }
  void reset() { memory_.clear(); }
  const DialogueMemory& memory() const noexcept { return memory_; }

 private:
  const Framework& fw_;
  Vocabulary vocab_;
  DialogueMemory memory_;
};

}  // namespace rpfslu
