#pragma once

#include <memory>

#include "rpfslu/basic_model.hpp"
#include "rpfslu/models/bigru_joint.hpp"
#include "rpfslu/models/window_mlp.hpp"

namespace rpfslu {

/// Factory for the in-repo basic models: "bigru" or "window".
inline std::unique_ptr<BasicModel> make_model(ParameterSet& ps, const ModelConfig& cfg, Rng& rng) {
  if (cfg.kind == "bigru") return std::make_unique<BiGruJointModel>(ps, cfg, rng);
  if (cfg.kind == "window") return std::make_unique<WindowMlpModel>(ps, cfg, rng);
  throw ConfigError("unknown model kind '" + cfg.kind + "' (expected bigru or window)");
}

}  // namespace rpfslu
