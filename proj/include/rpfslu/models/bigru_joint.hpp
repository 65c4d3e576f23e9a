#pragma once

#include <memory>
#include <span>
#include <vector>

#include "rpfslu/basic_model.hpp"
#include "rpfslu/gru.hpp"

namespace rpfslu {

/// Joint intent/slot tagger over a single-layer bidirectional GRU.
/// The intent head reads the two final states; the slot head reads each
/// token's concatenated forward/backward states.
class BiGruJointModel final : public BasicModel {
 public:
  BiGruJointModel(ParameterSet& ps, const ModelConfig& cfg, Rng& rng, const std::string& prefix = "model")
      : d_w_(cfg.embedding_dim) {
    fw_ = GruParams::create(ps, prefix + ".fw", cfg.embedding_dim, cfg.hidden_dim, rng);
    bw_ = GruParams::create(ps, prefix + ".bw", cfg.embedding_dim, cfg.hidden_dim, rng);
    intent_W_ = &ps.add_uniform(prefix + ".intent.W", {cfg.num_intents, 2 * cfg.hidden_dim}, rng);
    intent_b_ = &ps.add_uniform(prefix + ".intent.b", {cfg.num_intents}, rng);
    slot_W_ = &ps.add_uniform(prefix + ".slot.W", {cfg.num_slots, 2 * cfg.hidden_dim}, rng);
    slot_b_ = &ps.add_uniform(prefix + ".slot.b", {cfg.num_slots}, rng);
  }

  std::string kind() const override { return "bigru"; }
  std::size_t embedding_dim() const override { return d_w_; }

  ModelOutput predict(Tape& tape, std::span<const Var> embeddings, Activation intent_activation) const override {
    check_input(embeddings);
    const BiGruStates states = run_bigru(tape, fw_, bw_, embeddings);
    ModelOutput out;
    Var logits = affine(tape.param(*intent_W_), concat({states.last_forward(), states.last_backward()}),
                        tape.param(*intent_b_));
    out.intent = activation(intent_activation, logits);
    Var Ws = tape.param(*slot_W_);
    Var bs = tape.param(*slot_b_);
    out.slots.reserve(embeddings.size());
    for (std::size_t j = 0; j < embeddings.size(); ++j)
      out.slots.push_back(softmax(affine(Ws, concat({states.forward[j], states.backward[j]}), bs)));
    return out;
  }

  std::vector<Parameter*> parameters() const override {
    auto out = fw_.parameters();
    for (auto* p : bw_.parameters()) out.push_back(p);
    for (auto* p : {intent_W_, intent_b_, slot_W_, slot_b_}) out.push_back(p);
    return out;
  }

 private:
  std::size_t d_w_;
  GruParams fw_;
  GruParams bw_;
  Parameter* intent_W_ = nullptr;
  Parameter* intent_b_ = nullptr;
  Parameter* slot_W_ = nullptr;
  Parameter* slot_b_ = nullptr;
};

}  // namespace rpfslu
