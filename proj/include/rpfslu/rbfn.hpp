#pragma once

// Result-based bi-feedback: a second pass of the same basic model over
// embeddings enriched with the first pass's results, merged by element-wise
// product and renormalization.

#include <atomic>
#include <span>
#include <string>
#include <vector>

#include "rpfslu/basic_model.hpp"
#include "rpfslu/result_repr.hpp"

namespace rpfslu {

struct RbfnParams {
  Parameter* W_I = nullptr;  // [d_w × (d_I + d_w)]
  Parameter* b_I = nullptr;
  Parameter* W_S = nullptr;  // [d_w × (d_S + d_w)]
  Parameter* b_S = nullptr;

  static RbfnParams create(ParameterSet& ps, const std::string& prefix, std::size_t d_w, std::size_t d_I,
                           std::size_t d_S, Rng& rng) {
    RbfnParams p;
    p.W_I = &ps.add_uniform(prefix + ".W_I", {d_w, d_I + d_w}, rng);
    p.b_I = &ps.add_uniform(prefix + ".b_I", {d_w}, rng);
    p.W_S = &ps.add_uniform(prefix + ".W_S", {d_w, d_S + d_w}, rng);
    p.b_S = &ps.add_uniform(prefix + ".b_S", {d_w}, rng);
    return p;
  }

  /// W = [0 | I], b = 0: both injections pass e^H through unchanged.
  void set_identity() {
    for (auto [W, b] : {std::pair{W_I, b_I}, std::pair{W_S, b_S}}) {
      const std::size_t d_w = W->value.rows();
      const std::size_t offset = W->value.cols() - d_w;
      std::fill(W->value.values().begin(), W->value.values().end(), 0.0);
      for (std::size_t i = 0; i < d_w; ++i) W->value.at(i, offset + i) = 1.0;
      std::fill(b->value.values().begin(), b->value.values().end(), 0.0);
    }
  }

  std::vector<Parameter*> parameters() const { return {W_I, b_I, W_S, b_S}; }
};

inline ModelOutput round_one(Tape& tape, const BasicModel& model, std::span<const Var> e_H) {
  return model.predict(tape, e_H, Activation::softmax);
}

struct InjectedEmbeddings {
  std::vector<Var> intent_guided;  // e^I
  std::vector<Var> slot_guided;    // e^S
};

/// e^I_j = W_I·(lsvI ⊕ e^H_j) + b_I and e^S_j = W_S·(lsvS ⊕ e^H_j) + b_S.
inline InjectedEmbeddings result_inject(Tape& tape, const RbfnParams& p, std::span<const Var> e_H, Var lsvI, Var lsvS) {
  const std::size_t d_w = p.W_I->value.rows();
  if (p.W_I->value.cols() != lsvI.size() + d_w || p.W_S->value.cols() != lsvS.size() + d_w)
    throw ContractError("result_inject: latent widths " + std::to_string(lsvI.size()) + "/" +
                        std::to_string(lsvS.size()) + " do not fit W_I " + shape_str(p.W_I->value.shape()) +
                        " and W_S " + shape_str(p.W_S->value.shape()));
  Var WI = tape.param(*p.W_I);
  Var bI = tape.param(*p.b_I);
  Var WS = tape.param(*p.W_S);
  Var bS = tape.param(*p.b_S);
  InjectedEmbeddings out;
  out.intent_guided.reserve(e_H.size());
  out.slot_guided.reserve(e_H.size());
  for (const auto& e : e_H) {
    if (e.size() != d_w)
      throw ContractError("result_inject: token width " + std::to_string(e.size()) + ", expected " +
                          std::to_string(d_w));
    out.intent_guided.push_back(affine(WI, concat({lsvI, e}), bI));
    out.slot_guided.push_back(affine(WS, concat({lsvS, e}), bS));
  }
  return out;
}

struct RoundTwo {
  std::vector<Var> slots;  // resS², from e^I
  Var intent_scores;       // resI², sigmoid scores from e^S
};

/// Second pass of the same model: e^I guides slots, e^S verifies the intent.
inline RoundTwo round_two(Tape& tape, const BasicModel& model, std::span<const Var> e_I, std::span<const Var> e_S) {
  RoundTwo out;
  out.slots = model.predict(tape, e_I, Activation::softmax).slots;
  out.intent_scores = model.predict(tape, e_S, Activation::sigmoid).intent;
  return out;
}

struct MergedResults {
  Var intent;
  std::vector<Var> slots;
  std::size_t fallbacks = 0;
};

/// normalize(resI¹ ⊗ resI²) and per token normalize(s¹_j ⊗ s²_j). A product
/// summing to exactly zero falls back to the round-one vector and is counted.
inline MergedResults merge_and_normalize(Var resI1, Var resI2, std::span<const Var> resS1, std::span<const Var> resS2) {
  if (resS1.size() != resS2.size())
    throw DimensionError("merge_and_normalize: " + std::to_string(resS1.size()) + " vs " +
                         std::to_string(resS2.size()) + " slot distributions");
  MergedResults out;
  auto merge = [&out](Var first, Var second) {
    Var prod = mul(first, second);
    double s = 0.0;
    for (double v : prod.value().values()) s += v;
    if (s == 0.0) {
      ++out.fallbacks;
      return first;
    }
    return normalize(prod);
  };
  out.intent = merge(resI1, resI2);
  out.slots.reserve(resS1.size());
  for (std::size_t j = 0; j < resS1.size(); ++j) out.slots.push_back(merge(resS1[j], resS2[j]));
  return out;
}

}  // namespace rpfslu
