#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rpfslu/autodiff.hpp"
#include "rpfslu/domain.hpp"

namespace rpfslu {

/// Output of one basic-model call. `intent` is a probability vector under
/// softmax activation and a score vector in [0,1] under sigmoid; `slots`
/// always holds one softmax distribution per token.
struct ModelOutput {
  Var intent;
  std::vector<Var> slots;
};

/// Single-turn SLU model consumed as a black box: embeddings in, intent and
/// slot results out. Framework code only ever talks to this interface.
class BasicModel {
 public:
  virtual ~BasicModel() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t embedding_dim() const = 0;
  virtual ModelOutput predict(Tape& tape, std::span<const Var> embeddings, Activation intent_activation) const = 0;
  virtual std::vector<Parameter*> parameters() const = 0;

 protected:
  void check_input(std::span<const Var> embeddings) const {
    if (embeddings.empty()) throw ContractError(kind() + ": empty embedding sequence");
    for (const auto& e : embeddings)
      if (e.size() != embedding_dim())
        throw ContractError(kind() + ": embedding width " + std::to_string(e.size()) + ", expected " +
                            std::to_string(embedding_dim()));
  }
};

struct ModelConfig {
  std::string kind = "bigru";
  std::size_t embedding_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t window_radius = 1;
  std::size_t num_intents = 2;
  std::size_t num_slots = 2;
};

/// Builds a model whose parameters are registered into the given set.
using ModelFactory = std::function<std::unique_ptr<BasicModel>(ParameterSet&, const ModelConfig&, Rng&)>;

/// Word-embedding layer shared by the framework and the basic model.
struct EmbeddingTable {
  Parameter* table = nullptr;  // [vocab × d_w]

  static EmbeddingTable create(ParameterSet& ps, const std::string& name, std::size_t vocab, std::size_t dim, Rng& rng,
                               double init_scale = 0.1) {
    return {&ps.add_uniform(name, {vocab, dim}, rng, init_scale)};
  }
  std::size_t vocab_size() const { return table->value.rows(); }
  std::size_t dim() const { return table->value.cols(); }
};

/// Row lookup per token id.
inline std::vector<Var> embed(Tape& tape, const EmbeddingTable& table, const Utterance& u) {
  Var T = tape.param(*table.table);
  std::vector<Var> out;
  out.reserve(u.size());
  for (auto id : u.token_ids) {
    if (id >= table.vocab_size())
      throw DataError("embed: token id " + std::to_string(id) + " out of range for vocabulary of " +
                      std::to_string(table.vocab_size()));
    out.push_back(row(T, id));
  }
  return out;
}

}  // namespace rpfslu
