#pragma once

#include <span>
#include <string>
#include <vector>

#include "rpfslu/autodiff.hpp"

namespace rpfslu {

/// Gate weights of one GRU direction.
///
/// Update convention used throughout the project:
///   z  = σ(W_z·x + U_z·h + b_z)
///   r  = σ(W_r·x + U_r·h + b_r)
///   h̃  = tanh(W_n·x + U_n·(r⊙h) + b_n)
///   h' = z⊙h + (1−z)⊙h̃
/// so a saturated update gate (z → 1) carries the previous state through.
struct GruParams {
  Parameter* W_z = nullptr;
  Parameter* U_z = nullptr;
  Parameter* b_z = nullptr;
  Parameter* W_r = nullptr;
  Parameter* U_r = nullptr;
  Parameter* b_r = nullptr;
  Parameter* W_n = nullptr;
  Parameter* U_n = nullptr;
  Parameter* b_n = nullptr;
  std::size_t input = 0;
  std::size_t hidden = 0;

  static GruParams create(ParameterSet& ps, const std::string& prefix, std::size_t input, std::size_t hidden, Rng& rng,
                          double init_scale = 0.1) {
    GruParams g;
    g.input = input;
    g.hidden = hidden;
    g.W_z = &ps.add_uniform(prefix + ".W_z", {hidden, input}, rng, init_scale);
    g.U_z = &ps.add_uniform(prefix + ".U_z", {hidden, hidden}, rng, init_scale);
    g.b_z = &ps.add_uniform(prefix + ".b_z", {hidden}, rng, init_scale);
    g.W_r = &ps.add_uniform(prefix + ".W_r", {hidden, input}, rng, init_scale);
    g.U_r = &ps.add_uniform(prefix + ".U_r", {hidden, hidden}, rng, init_scale);
    g.b_r = &ps.add_uniform(prefix + ".b_r", {hidden}, rng, init_scale);
    g.W_n = &ps.add_uniform(prefix + ".W_n", {hidden, input}, rng, init_scale);
    g.U_n = &ps.add_uniform(prefix + ".U_n", {hidden, hidden}, rng, init_scale);
    g.b_n = &ps.add_uniform(prefix + ".b_n", {hidden}, rng, init_scale);
    return g;
  }

  std::vector<Parameter*> parameters() const { return {W_z, U_z, b_z, W_r, U_r, b_r, W_n, U_n, b_n}; }
};

inline Var gru_step(Tape& tape, const GruParams& p, Var h_prev, Var x) {
  if (x.size() != p.input || h_prev.size() != p.hidden)
    throw DimensionError("gru_step: expected x[" + std::to_string(p.input) + "] h[" + std::to_string(p.hidden) +
                         "], got x" + shape_str(x.value().shape()) + " h" + shape_str(h_prev.value().shape()));
  Var z = sigmoid(add(affine(tape.param(*p.W_z), x, tape.param(*p.b_z)), matvec(tape.param(*p.U_z), h_prev)));
  Var r = sigmoid(add(affine(tape.param(*p.W_r), x, tape.param(*p.b_r)), matvec(tape.param(*p.U_r), h_prev)));
  Var n = tanh(add(affine(tape.param(*p.W_n), x, tape.param(*p.b_n)), matvec(tape.param(*p.U_n), mul(r, h_prev))));
  return gate_mix(z, h_prev, n);
}

/// Per-token states of a bidirectional pass. backward[j] is the state of the
/// right-to-left direction after consuming token j.
struct BiGruStates {
  std::vector<Var> forward;
  std::vector<Var> backward;

  Var last_forward() const { return forward.back(); }
  Var last_backward() const { return backward.front(); }
};

inline BiGruStates run_bigru(Tape& tape, const GruParams& fw, const GruParams& bw, std::span<const Var> xs) {
  if (xs.empty()) throw ContractError("run_bigru: empty sequence");
  const std::size_t k = xs.size();
  BiGruStates s;
  s.forward.reserve(k);
  s.backward.resize(k);
  Var h = tape.constant(Tensor({fw.hidden}));
  for (std::size_t j = 0; j < k; ++j) {
    h = gru_step(tape, fw, h, xs[j]);
    s.forward.push_back(h);
  }
  h = tape.constant(Tensor({bw.hidden}));
  for (std::size_t j = k; j-- > 0;) {
    h = gru_step(tape, bw, h, xs[j]);
    s.backward[j] = h;
  }
  return s;
}

}  // namespace rpfslu
