#pragma once

// Maps prediction-result distributions into learned latent state vectors.
// Intent results are embedded by a single matrix product; slot results are
// embedded per token and pooled to one utterance-level vector by additive
// attention. The same parameters serve history results and round-one results.

#include <span>
#include <string>
#include <vector>

#include "rpfslu/autodiff.hpp"

namespace rpfslu {

struct ResultReprParams {
  Parameter* S_I = nullptr;  // [d_I × d_i]
  Parameter* S_S = nullptr;  // [d_S × d_s]
  Parameter* W_a = nullptr;  // [d_a × d_S]
  Parameter* V_a = nullptr;  // [1 × d_a]
  Parameter* b_a = nullptr;  // [d_a]

  static ResultReprParams create(ParameterSet& ps, const std::string& prefix, std::size_t num_intents,
                                 std::size_t num_slots, std::size_t d_I, std::size_t d_S, std::size_t d_a, Rng& rng) {
    ResultReprParams p;
    p.S_I = &ps.add_uniform(prefix + ".S_I", {d_I, num_intents}, rng);
    p.S_S = &ps.add_uniform(prefix + ".S_S", {d_S, num_slots}, rng);
    p.W_a = &ps.add_uniform(prefix + ".W_a", {d_a, d_S}, rng);
    p.V_a = &ps.add_uniform(prefix + ".V_a", {1, d_a}, rng);
    p.b_a = &ps.add_uniform(prefix + ".b_a", {d_a}, rng);
    return p;
  }

  std::size_t intent_dim() const { return S_I->value.rows(); }
  std::size_t slot_dim() const { return S_S->value.rows(); }
  std::vector<Parameter*> parameters() const { return {S_I, S_S, W_a, V_a, b_a}; }
};

/// lsvI = S_I · resI. Accepts distributions or sigmoid score vectors alike.
inline Var intent_latent(Tape& tape, const ResultReprParams& p, Var resI) {
  if (resI.size() != p.S_I->value.cols())
    throw ContractError("intent_latent: expected " + std::to_string(p.S_I->value.cols()) + " intent scores, got " +
                        std::to_string(resI.size()));
  return matvec(tape.param(*p.S_I), resI);
}

/// ls_j = S_S · s_j for every token, order preserved.
inline std::vector<Var> slot_token_latents(Tape& tape, const ResultReprParams& p, std::span<const Var> resS) {
  std::vector<Var> out;
  out.reserve(resS.size());
  Var S = tape.param(*p.S_S);
  for (const auto& s : resS) {
    if (s.size() != p.S_S->value.cols())
      throw ContractError("slot_token_latents: expected " + std::to_string(p.S_S->value.cols()) +
                          " slot scores, got " + std::to_string(s.size()));
    out.push_back(matvec(S, s));
  }
  return out;
}

struct AttentionPool {
  Var weights;  // α, one per token
  Var pooled;   // lsvS
};

/// α = softmax_j(V_a · tanh(W_a·ls_j + b_a)), lsvS = Σ_j α_j·ls_j.
inline AttentionPool slot_attention_pool(Tape& tape, const ResultReprParams& p, std::span<const Var> latents) {
  if (latents.empty()) throw ContractError("slot_attention_pool: empty token sequence");
  Var W = tape.param(*p.W_a);
  Var V = tape.param(*p.V_a);
  Var b = tape.param(*p.b_a);
  std::vector<Var> scores;
  scores.reserve(latents.size());
  for (const auto& ls : latents) scores.push_back(matvec(V, tanh(affine(W, ls, b))));
  Var alpha = softmax(concat(scores));
  return {alpha, weighted_sum(alpha, latents)};
}

/// Utterance-level slot latent: attention pool over per-token latents.
inline AttentionPool slot_latent(Tape& tape, const ResultReprParams& p, std::span<const Var> resS) {
  auto latents = slot_token_latents(tape, p, resS);
  return slot_attention_pool(tape, p, latents);
}

}  // namespace rpfslu
