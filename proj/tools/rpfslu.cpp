// rpfslu command-line tool: train, eval, predict, repl, gen-synth, ablate.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rpfslu/config.hpp"
#include "rpfslu/models/registry.hpp"
#include "rpfslu/repl.hpp"
#include "rpfslu/train.hpp"

namespace fs = std::filesystem;
using namespace rpfslu;

namespace {

struct Common {
  std::string config;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string data_dir;
  std::string checkpoint;
  std::string out;
  std::vector<std::string> sets;
};

void add_config_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value configuration file");
  cmd->add_option("--mode", c.mode, "basic, dhr_only or full");
  cmd->add_option("--seed", c.seed, "training seed");
  cmd->add_option("--data-dir", c.data_dir, "directory with KVRET or interchange files");
  cmd->add_option("--set", c.sets, "extra key=value override (repeatable)");
}

CliConfig resolve_config(const Common& c) {
  CliConfig cfg = c.config.empty() ? CliConfig{} : load_config_file(c.config);
  for (const auto& s : c.sets) apply_config_text(cfg, s, "--set");
  if (!c.mode.empty()) set_key(cfg, "mode", c.mode);
  if (c.seed) cfg.train.seed = *c.seed;
  if (!c.data_dir.empty()) cfg.data.data_dir = c.data_dir;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

std::string report_text(const MetricsReport& r) { return to_json(r).dump(2) + "\n"; }

std::optional<Metrics> single_column(Mode mode, const Metrics& m, Mode want) {
  return mode == want ? std::optional<Metrics>(m) : std::nullopt;
}

std::string single_table(const std::string& row, Mode mode, const Metrics& m) {
  return ablation_table(row, single_column(mode, m, Mode::basic), single_column(mode, m, Mode::dhr_only),
                        single_column(mode, m, Mode::full));
}

nlohmann::json data_metadata(const DataConfig& d) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : to_key_values(d)) j[k] = v;
  return j;
}

DataConfig data_from_metadata(const nlohmann::json& extra) {
  CliConfig c;
  if (extra.contains("data"))
    for (auto it = extra.at("data").begin(); it != extra.at("data").end(); ++it)
      set_key(c, it.key(), it.value().get<std::string>());
  return c.data;
}

std::span<const Dialogue> pick_split(const Corpus& corpus, const std::string& split) {
  if (split == "train") return corpus.train;
  if (split == "dev") return corpus.dev;
  if (split == "test") return corpus.test;
  throw ConfigError("unknown split '" + split + "' (expected train, dev or test)");
}

int cmd_train(const Common& c) {
  const CliConfig cfg = resolve_config(c);
  const fs::path out = c.out.empty() ? fs::path("run") : fs::path(c.out);
  const Corpus corpus = load_corpus(cfg.data);
  const std::string hash = config_hash(to_key_values(cfg));

  nlohmann::ordered_json history = nlohmann::ordered_json::array();
  TrainResult res = train(cfg.train, corpus, make_model, [&](const EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << "  loss " << r.mean_loss << "  dev intent " << r.dev.intent_accuracy
              << "  slot_f1 " << r.dev.slot_f1 << "  overall " << r.dev.overall_accuracy << '\n';
    history.push_back({{"epoch", r.epoch},
                       {"mean_loss", r.mean_loss},
                       {"intent_acc", r.dev.intent_accuracy},
                       {"slot_f1", r.dev.slot_f1},
                       {"overall_acc", r.dev.overall_accuracy}});
  });

  const nlohmann::json extra = {{"data", data_metadata(cfg.data)}, {"config_hash", hash},
                                {"best_epoch", res.best_epoch}};
  fs::create_directories(out);
  write_tensor_file(out / "checkpoint.rpf",
                    make_checkpoint(res.config, res.labels, res.vocab, res.framework->params(), extra));

  const MetricsReport dev{"dev", cfg.train.mode, res.best_dev, cfg.train.seed, hash};
  const Metrics test_m =
      evaluate(*res.framework, res.vocab, res.labels, corpus.test, cfg.train.include_assistant_history);
  const MetricsReport test{"test", cfg.train.mode, test_m, cfg.train.seed, hash};
  write_text(out / "metrics.json", report_text(dev));
  write_text(out / "metrics_test.json", report_text(test));
  write_text(out / "history.json", history.dump(2) + "\n");
  write_text(out / "config.cfg", render_config(cfg));

  std::cout << single_table(cfg.train.model + " (test)", cfg.train.mode, test_m);
  std::cout << "best epoch " << res.best_epoch << "; checkpoint written to " << (out / "checkpoint.rpf").string()
            << '\n';
  return 0;
}

LoadedCheckpoint open_checkpoint(const Common& c) {
  if (c.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  return load_checkpoint(read_tensor_file(c.checkpoint), make_model);
}

int cmd_eval(const Common& c, const std::string& split) {
  LoadedCheckpoint ck = open_checkpoint(c);
  DataConfig data = data_from_metadata(ck.extra);
  if (!c.config.empty()) data = load_config_file(c.config).data;
  if (!c.data_dir.empty()) data.data_dir = c.data_dir;
  const Corpus corpus = load_corpus(data);
  if (!(corpus.labels == ck.labels)) {
    std::string msg = "label maps of the data do not match the checkpoint:";
    msg += " checkpoint has " + std::to_string(ck.labels.num_intents()) + " intents / " +
           std::to_string(ck.labels.num_slots()) + " slot tags, data has " +
           std::to_string(corpus.labels.num_intents()) + " / " + std::to_string(corpus.labels.num_slots());
    for (const auto& name : corpus.labels.intents())
      if (!ck.labels.has_intent(name)) msg += "; intent '" + name + "' unknown to checkpoint";
    for (const auto& name : corpus.labels.slots())
      if (!ck.labels.has_slot(name)) msg += "; slot tag '" + name + "' unknown to checkpoint";
    throw DataError(msg);
  }
  const Metrics m = evaluate(*ck.framework, ck.vocab, ck.labels, pick_split(corpus, split),
                             ck.config.include_assistant_history);
  const std::string hash = ck.extra.value("config_hash", std::string{});
  const MetricsReport r{split, ck.config.mode, m, ck.config.seed, hash};
  const fs::path out =
      c.out.empty() ? fs::path(c.checkpoint).parent_path() / ("eval_" + split + ".json") : fs::path(c.out);
  write_text(out, report_text(r));
  std::cout << single_table(ck.config.model + " (" + split + ")", ck.config.mode, m);
  std::cout << to_json(r).dump() << '\n';
  return 0;
}

nlohmann::ordered_json prediction_json(const TurnPrediction& p, const std::vector<std::string>& tokens,
                                       const LabelMaps& labels) {
  std::vector<std::string> tags;
  for (auto s : p.slots()) tags.push_back(labels.slot_name(s));
  return {{"tokens", tokens},
          {"intent", labels.intent_name(p.intent())},
          {"slots", tags},
          {"intent_probs", p.resI.probs},
          {"history_weights", p.history_weights}};
}

int cmd_predict(const Common& c, const std::string& input) {
  LoadedCheckpoint ck = open_checkpoint(c);
  nlohmann::ordered_json result = nlohmann::ordered_json::array();
  if (!input.empty()) {
    for (const auto& d : read_interchange(input)) {
      DialogueSession session(*ck.framework, ck.vocab);
      nlohmann::ordered_json turns = nlohmann::ordered_json::array();
      for (const auto& t : d.turns) turns.push_back(prediction_json(session.predict(t.tokens), t.tokens, ck.labels));
      result.push_back({{"dialogue_id", d.id}, {"turns", turns}});
    }
  } else {
    // One utterance per line; a blank line starts a new dialogue.
    DialogueSession session(*ck.framework, ck.vocab);
    nlohmann::ordered_json turns = nlohmann::ordered_json::array();
    auto flush = [&] {
      if (turns.empty()) return;
      result.push_back({{"dialogue_id", std::to_string(result.size())}, {"turns", turns}});
      turns = nlohmann::ordered_json::array();
      session.reset();
    };
    std::string line;
    while (std::getline(std::cin, line)) {
      const auto tokens = tokenize(line);
      if (tokens.empty()) {
        flush();
        continue;
      }
      turns.push_back(prediction_json(session.predict(tokens), tokens, ck.labels));
    }
    flush();
  }
  const std::string text = result.dump(2) + "\n";
  if (c.out.empty())
    std::cout << text;
  else
    write_text(c.out, text);
  return 0;
}

int cmd_repl(const Common& c) {
  LoadedCheckpoint ck = open_checkpoint(c);
  std::cout << "mode " << to_string(ck.config.mode) << ", model " << ck.config.model
            << "; type an utterance, :reset or :quit\n";
  run_repl(*ck.framework, ck.vocab, ck.labels, std::cin, std::cout);
  return 0;
}

int cmd_gen_synth(const Common& c) {
  CliConfig cfg = resolve_config(c);
  cfg.data.source = "synthetic";
  cfg.data.data_dir.clear();
  const fs::path out = c.out.empty() ? fs::path("synthetic") : fs::path(c.out);
  const Corpus corpus = load_corpus(cfg.data);
  fs::create_directories(out);
  write_interchange(out / "train.json", to_raw(corpus.train, corpus.labels));
  write_interchange(out / "dev.json", to_raw(corpus.dev, corpus.labels));
  write_interchange(out / "test.json", to_raw(corpus.test, corpus.labels));
  std::cout << "wrote " << corpus.train.size() << "/" << corpus.dev.size() << "/" << corpus.test.size()
            << " dialogues to " << out.string() << '\n';
  return 0;
}

int cmd_ablate(const Common& c, const std::string& split) {
  const CliConfig base = resolve_config(c);
  const Corpus corpus = load_corpus(base.data);
  std::optional<Metrics> cols[3];
  const Mode modes[3] = {Mode::basic, Mode::dhr_only, Mode::full};
  nlohmann::ordered_json reports = nlohmann::ordered_json::array();
  for (int i = 0; i < 3; ++i) {
    CliConfig cfg = base;
    cfg.train.mode = modes[i];
    std::cerr << "training mode " << to_string(modes[i]) << '\n';
    TrainResult res = train(cfg.train, corpus, make_model);
    cols[i] = evaluate(*res.framework, res.vocab, res.labels, pick_split(corpus, split),
                       cfg.train.include_assistant_history);
    reports.push_back(to_json(MetricsReport{split, modes[i], *cols[i], cfg.train.seed,
                                            config_hash(to_key_values(cfg))}));
  }
  std::cout << ablation_table(base.train.model, cols[0], cols[1], cols[2]);
  if (!c.out.empty()) write_text(c.out, reports.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Result-based multi-turn spoken language understanding"};
  app.require_subcommand(1);
  Common c;
  std::string split = "test";
  std::string input;

  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint with metrics reports");
  add_config_flags(train_cmd, c);
  train_cmd->add_option("--out", c.out, "output directory (default: run)");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a data split");
  eval_cmd->add_option("--checkpoint", c.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--config", c.config, "take data settings from this configuration file");
  eval_cmd->add_option("--data-dir", c.data_dir, "directory with KVRET or interchange files");
  eval_cmd->add_option("--split", split, "train, dev or test (default: test)");
  eval_cmd->add_option("--out", c.out, "report path (default: eval_<split>.json next to the checkpoint)");

  auto* predict_cmd = app.add_subcommand("predict", "predict intents and slots for dialogues");
  predict_cmd->add_option("--checkpoint", c.checkpoint, "checkpoint file")->required();
  predict_cmd->add_option("--input", input, "interchange JSON file (default: utterances on stdin)");
  predict_cmd->add_option("--out", c.out, "output JSON file (default: stdout)");

  auto* repl_cmd = app.add_subcommand("repl", "interactive multi-turn session");
  repl_cmd->add_option("--checkpoint", c.checkpoint, "checkpoint file")->required();

  auto* gen_cmd = app.add_subcommand("gen-synth", "write the synthetic corpus as interchange JSON");
  add_config_flags(gen_cmd, c);
  gen_cmd->add_option("--out", c.out, "output directory (default: synthetic)");

  auto* ablate_cmd = app.add_subcommand("ablate", "train basic, dhr_only and full modes and print the table");
  add_config_flags(ablate_cmd, c);
  ablate_cmd->add_option("--split", split, "evaluation split (default: test)");
  ablate_cmd->add_option("--out", c.out, "write the three reports to this JSON file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(c);
    if (eval_cmd->parsed()) return cmd_eval(c, split);
    if (predict_cmd->parsed()) return cmd_predict(c, input);
    if (repl_cmd->parsed()) return cmd_repl(c);
    if (gen_cmd->parsed()) return cmd_gen_synth(c);
    if (ablate_cmd->parsed()) return cmd_ablate(c, split);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
