#pragma once

// Interactive multi-turn session printing the internal quantities of each
// prediction: history weights and round-one against final intent scores.

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "rpfslu/domain.hpp"
#include "rpfslu/framework.hpp"
#include "rpfslu/log.hpp"

namespace rpfslu {

namespace detail {

inline std::string format_scores(std::span<const double> p, const LabelMaps& labels) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < p.size(); ++i) os << (i ? " " : "") << labels.intent_name(i) << '=' << p[i];
  return os.str();
}

}  // namespace detail

inline void print_turn(std::ostream& out, const TurnPrediction& p, const std::vector<std::string>& tokens,
                       const LabelMaps& labels) {
  if (p.history_weights.empty()) {
    out << "history: none\n";
  } else {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    for (std::size_t t = 0; t < p.history_weights.size(); ++t) os << (t ? " " : "") << p.history_weights[t];
    out << "history: " << os.str() << '\n';
  }
  out << "intent: " << labels.intent_name(p.intent()) << '\n';
  const auto tags = p.slots();
  out << "slots:";
  for (std::size_t j = 0; j < tokens.size(); ++j) out << ' ' << tokens[j] << '/' << labels.slot_name(tags[j]);
  out << '\n';
  out << "round-1 intent: " << detail::format_scores(p.resI1.probs, labels) << '\n';
  out << "final intent:   " << detail::format_scores(p.resI.probs, labels) << '\n';
}

/// Reads one utterance per line until EOF or ":quit". ":reset" clears memory.
inline void run_repl(const Framework& fw, const Vocabulary& vocab, const LabelMaps& labels, std::istream& in,
                     std::ostream& out, bool prompt = true) {
  DialogueSession session(fw, vocab);
  std::string line;
  while (true) {
    if (prompt) out << "> " << std::flush;
    if (!std::getline(in, line)) break;
    const auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    if (tokens.size() == 1 && tokens[0] == ":quit") break;
    if (tokens.size() == 1 && tokens[0] == ":reset") {
      session.reset();
      out << "memory cleared\n";
      continue;
    }
    try {
      print_turn(out, session.predict(tokens), tokens, labels);
    } catch (const Error& e) {
      out << "error: " << e.what() << '\n';
    }
  }
}

}  // namespace rpfslu
