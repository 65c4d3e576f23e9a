#pragma once

// Flat key = value configuration for the command-line tool.
//
//   # comment
//   mode = full
//   epochs = 3
//
// Every TrainConfig key is accepted, plus the data keys below. Unknown keys
// are rejected with the key named.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "rpfslu/corpus.hpp"
#include "rpfslu/train.hpp"

namespace rpfslu {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | interchange | kvret
  std::string data_dir;
  std::uint64_t synth_seed = 7;
  std::size_t synth_train = 600;
  std::size_t synth_dev = 100;
  std::size_t synth_test = 100;
  std::size_t synth_min_turns = 2;
  std::size_t synth_max_turns = 5;
  double synth_followup_rate = 0.3;
};

struct CliConfig {
  TrainConfig train;
  DataConfig data;
};

inline KeyValues to_key_values(const DataConfig& d) {
  return {{"data", d.source},
          {"data_dir", d.data_dir},
          {"synth_seed", std::to_string(d.synth_seed)},
          {"synth_train", std::to_string(d.synth_train)},
          {"synth_dev", std::to_string(d.synth_dev)},
          {"synth_test", std::to_string(d.synth_test)},
          {"synth_min_turns", std::to_string(d.synth_min_turns)},
          {"synth_max_turns", std::to_string(d.synth_max_turns)},
          {"synth_followup_rate", detail::format_double(d.synth_followup_rate)}};
}

inline KeyValues to_key_values(const CliConfig& c) {
  KeyValues kv = to_key_values(c.train);
  for (auto& p : to_key_values(c.data)) kv.push_back(std::move(p));
  return kv;
}

inline void set_key(CliConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  if (set_train_key(c.train, key, v)) return;
  auto& d = c.data;
  if (key == "data") {
    if (v != "synthetic" && v != "interchange" && v != "kvret")
      throw ConfigError("key 'data': expected synthetic, interchange or kvret, got '" + v + "'");
    d.source = v;
  } else if (key == "data_dir") d.data_dir = v;
  else if (key == "synth_seed") d.synth_seed = parse_size(key, v);
  else if (key == "synth_train") d.synth_train = parse_size(key, v);
  else if (key == "synth_dev") d.synth_dev = parse_size(key, v);
  else if (key == "synth_test") d.synth_test = parse_size(key, v);
  else if (key == "synth_min_turns") d.synth_min_turns = parse_size(key, v);
  else if (key == "synth_max_turns") d.synth_max_turns = parse_size(key, v);
  else if (key == "synth_followup_rate") d.synth_followup_rate = parse_double(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline void apply_config_text(CliConfig& c, const std::string& text, const std::string& origin = "config") {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value, got '" + t + "'");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    try {
      set_key(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline CliConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  CliConfig c;
  apply_config_text(c, ss.str(), path.string());
  return c;
}

inline std::string render_config(const CliConfig& c) {
  std::string out;
  for (const auto& [k, v] : to_key_values(c)) out += k + " = " + v + "\n";
  return out;
}

inline Corpus load_corpus(const DataConfig& d) {
  std::string source = d.source;
  if (source == "synthetic" && !d.data_dir.empty()) {
    source = std::filesystem::exists(std::filesystem::path(d.data_dir) / "kvret_train_public.json") ? "kvret"
                                                                                                    : "interchange";
  }
  if (source == "kvret") return load_kvret(d.data_dir);
  if (source == "interchange") return load_interchange_dir(d.data_dir);
  SynthConfig sc = SynthConfig::reference();
  sc.seed = d.synth_seed;
  sc.min_turns = d.synth_min_turns;
  sc.max_turns = d.synth_max_turns;
  sc.followup_rate = d.synth_followup_rate;
  return make_synthetic_corpus(sc, {d.synth_train, d.synth_dev, d.synth_test});
}

}  // namespace rpfslu
