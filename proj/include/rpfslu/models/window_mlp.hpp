#pragma once

#include <memory>
#include <span>
#include <vector>

#include "rpfslu/basic_model.hpp"

namespace rpfslu {

// Feed-forward tagger without recurrence. Each token sees the concatenated
// embeddings of a (2r+1)-token window, zero-padded at the edges; the intent
// head sees the mean embedding of the utterance.
class WindowMlpModel final : public BasicModel {
 public:
  WindowMlpModel(ParameterSet& ps, const ModelConfig& cfg, Rng& rng, const std::string& prefix = "model")
      : d_w_(cfg.embedding_dim), radius_(cfg.window_radius) {
    const std::size_t window = (2 * radius_ + 1) * d_w_;
    slot_hidden_W_ = &ps.add_uniform(prefix + ".slot_hidden.W", {cfg.hidden_dim, window}, rng);
    slot_hidden_b_ = &ps.add_uniform(prefix + ".slot_hidden.b", {cfg.hidden_dim}, rng);
    slot_out_W_ = &ps.add_uniform(prefix + ".slot_out.W", {cfg.num_slots, cfg.hidden_dim}, rng);
    slot_out_b_ = &ps.add_uniform(prefix + ".slot_out.b", {cfg.num_slots}, rng);
    intent_hidden_W_ = &ps.add_uniform(prefix + ".intent_hidden.W", {cfg.hidden_dim, d_w_}, rng);
    intent_hidden_b_ = &ps.add_uniform(prefix + ".intent_hidden.b", {cfg.hidden_dim}, rng);
    intent_out_W_ = &ps.add_uniform(prefix + ".intent_out.W", {cfg.num_intents, cfg.hidden_dim}, rng);
    intent_out_b_ = &ps.add_uniform(prefix + ".intent_out.b", {cfg.num_intents}, rng);
  }

  std::string kind() const override { return "window"; }
  std::size_t embedding_dim() const override { return d_w_; }

  ModelOutput predict(Tape& tape, std::span<const Var> embeddings, Activation intent_activation) const override {
    check_input(embeddings);
    const std::size_t k = embeddings.size();
    ModelOutput out;

    Var mean_w = tape.constant(Tensor::vector(std::vector<double>(k, 1.0 / static_cast<double>(k))));
    Var pooled = weighted_sum(mean_w, embeddings);
    Var ih = tanh(affine(tape.param(*intent_hidden_W_), pooled, tape.param(*intent_hidden_b_)));
    out.intent = activation(intent_activation, affine(tape.param(*intent_out_W_), ih, tape.param(*intent_out_b_)));

    Var pad = tape.constant(Tensor({d_w_}));
    Var hW = tape.param(*slot_hidden_W_);
    Var hb = tape.param(*slot_hidden_b_);
    Var oW = tape.param(*slot_out_W_);
    Var ob = tape.param(*slot_out_b_);
    out.slots.reserve(k);
    std::vector<Var> window;
    for (std::size_t j = 0; j < k; ++j) {
      window.clear();
      for (std::ptrdiff_t off = -static_cast<std::ptrdiff_t>(radius_); off <= static_cast<std::ptrdiff_t>(radius_); ++off) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(j) + off;
        window.push_back(pos < 0 || pos >= static_cast<std::ptrdiff_t>(k) ? pad : embeddings[static_cast<std::size_t>(pos)]);
      }
      Var h = tanh(affine(hW, concat(window), hb));
      out.slots.push_back(softmax(affine(oW, h, ob)));
    }
    return out;
  }

  std::vector<Parameter*> parameters() const override {
    return {slot_hidden_W_, slot_hidden_b_, slot_out_W_,   slot_out_b_,
            intent_hidden_W_, intent_hidden_b_, intent_out_W_, intent_out_b_};
  }

 private:
  std::size_t d_w_;
  std::size_t radius_;
  Parameter* slot_hidden_W_ = nullptr;
  Parameter* slot_hidden_b_ = nullptr;
  Parameter* slot_out_W_ = nullptr;
  Parameter* slot_out_b_ = nullptr;
  Parameter* intent_hidden_W_ = nullptr;
  Parameter* intent_hidden_b_ = nullptr;
  Parameter* intent_out_W_ = nullptr;
  Parameter* intent_out_b_ = nullptr;
};

}  // namespace rpfslu
