#pragma once

// Dialogue history representation: similarity-weighted fusion of past
// result latents into the current turn's token embeddings.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rpfslu/basic_model.hpp"
#include "rpfslu/domain.hpp"
#include "rpfslu/gru.hpp"
#include "rpfslu/result_repr.hpp"

namespace rpfslu {

struct DhrParams {
  GruParams encoder_fw;
  GruParams encoder_bw;
  Parameter* W_H = nullptr;  // [d_w × (d_w + d_I + d_S)]
  Parameter* b_H = nullptr;  // [d_w]

  static DhrParams create(ParameterSet& ps, const std::string& prefix, std::size_t d_w, std::size_t d_e,
                          std::size_t d_I, std::size_t d_S, Rng& rng) {
    DhrParams p;
    p.encoder_fw = GruParams::create(ps, prefix + ".encoder.fw", d_w, d_e, rng);
    p.encoder_bw = GruParams::create(ps, prefix + ".encoder.bw", d_w, d_e, rng);
    p.W_H = &ps.add_uniform(prefix + ".W_H", {d_w, d_w + d_I + d_S}, rng);
    p.b_H = &ps.add_uniform(prefix + ".b_H", {d_w}, rng);
    return p;
  }

  std::vector<Parameter*> parameters() const {
    auto out = encoder_fw.parameters();
    for (auto* p : encoder_bw.parameters()) out.push_back(p);
    out.push_back(W_H);
    out.push_back(b_H);
    return out;
  }
};

/// Sentence vector he: final forward state ⊕ final backward state.
inline Var encode_sentence(Tape& tape, const DhrParams& p, std::span<const Var> e) {
  if (e.empty()) throw ContractError("encode_sentence: empty embedding sequence");
  const BiGruStates s = run_bigru(tape, p.encoder_fw, p.encoder_bw, e);
  return concat({s.last_forward(), s.last_backward()});
}

/// w_t = softmax_t(he_T · he_t), unscaled dot products.
inline Var history_weights(Var he_T, std::span<const Var> history) {
  if (history.empty()) throw ContractError("history_weights: empty history");
  std::vector<Var> sims;
  sims.reserve(history.size());
  for (const auto& he : history) sims.push_back(dot(he_T, he));
  return softmax(concat(sims));
}

struct HistoryLatents {
  Var intent;  // lsvI_H
  Var slot;    // lsvS_H
};

/// Weighted mix of per-entry latents, computed with the current parameters.
/// Entry distributions enter the tape as constants.
inline HistoryLatents history_latents(Tape& tape, std::span<const MemoryEntry> entries, Var w,
                                      const ResultReprParams& repr) {
  if (entries.empty() || w.size() != entries.size())
    throw ContractError("history_latents: " + std::to_string(w.size()) + " weights for " +
                        std::to_string(entries.size()) + " memory entries");
  std::vector<Var> intents;
  std::vector<Var> slots;
  intents.reserve(entries.size());
  slots.reserve(entries.size());
  for (const auto& entry : entries) {
    intents.push_back(intent_latent(tape, repr, tape.constant(Tensor::vector(entry.intent.probs))));
    std::vector<Var> s;
    s.reserve(entry.slots.size());
    for (const auto& tok : entry.slots.per_token) s.push_back(tape.constant(Tensor::vector(tok)));
    slots.push_back(slot_latent(tape, repr, s).pooled);
  }
  return {weighted_sum(w, intents), weighted_sum(w, slots)};
}

/// e^H_j = W_H · (e^T_j ⊕ lsvI_H ⊕ lsvS_H) + b_H.
inline std::vector<Var> contextual_embed(Tape& tape, const DhrParams& p, std::span<const Var> e_T, Var lsvI_H,
                                         Var lsvS_H) {
  const std::size_t d_w = p.W_H->value.rows();
  if (p.W_H->value.cols() != d_w + lsvI_H.size() + lsvS_H.size())
    throw ContractError("contextual_embed: W_H " + shape_str(p.W_H->value.shape()) + " does not fit inputs of width " +
                        std::to_string(d_w) + "+" + std::to_string(lsvI_H.size()) + "+" +
                        std::to_string(lsvS_H.size()));
  Var W = tape.param(*p.W_H);
  Var b = tape.param(*p.b_H);
  std::vector<Var> out;
  out.reserve(e_T.size());
  for (const auto& e : e_T) {
    if (e.size() != d_w)
      throw ContractError("contextual_embed: token width " + std::to_string(e.size()) + ", expected " +
                          std::to_string(d_w));
    out.push_back(affine(W, concat({e, lsvI_H, lsvS_H}), b));
  }
  return out;
}

struct DhrOutput {
  std::vector<Var> embeddings;  // e^H
  std::optional<Var> weights;   // w, absent for an empty history
};

/// Contextual embeddings for the current turn. With an empty memory the
/// result is the plain embedding lookup. `max_history` > 0 restricts the
/// history to the most recent entries.
inline DhrOutput dhr_forward(Tape& tape, const DhrParams& p, const ResultReprParams& repr, const EmbeddingTable& table,
                             const DialogueMemory& memory, const Utterance& current, std::size_t max_history = 0) {
  DhrOutput out;
  std::vector<Var> e_T = embed(tape, table, current);
  if (memory.empty()) {
    out.embeddings = std::move(e_T);
    return out;
  }
  std::span<const MemoryEntry> entries(memory.entries());
  if (max_history > 0 && entries.size() > max_history) entries = entries.last(max_history);

  Var he_T = encode_sentence(tape, p, e_T);
  std::vector<Var> history;
  history.reserve(entries.size());
  for (const auto& entry : entries) history.push_back(encode_sentence(tape, p, embed(tape, table, entry.utterance)));
  Var w = history_weights(he_T, history);
  const HistoryLatents latents = history_latents(tape, entries, w, repr);
  out.embeddings = contextual_embed(tape, p, e_T, latents.intent, latents.slot);
  out.weights = w;
  return out;
}

}  // namespace rpfslu
