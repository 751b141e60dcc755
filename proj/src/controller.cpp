#include "qfmts/controller.hpp"

#include <atomic>
#include <cctype>
#include <fstream>
#include <thread>

#include "qfmts/linearizer.hpp"

namespace qfmts {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  return s.substr(first, s.find_last_not_of(ws) - first + 1);
}

void check_demos(std::span<const Demonstration> demos, bool needs_tables, bool needs_summary) {
  if (demos.empty()) throw Error("no demonstrations given");
  for (const auto& d : demos) {
    if (d.query.empty() || d.facts.empty() || (needs_tables && d.linearized_tables.empty()) ||
        (needs_summary && d.summary.empty())) {
      throw Error("demonstration has an empty field: " + d.query);
    }
  }
}

std::string join_blocks(const std::vector<std::string>& blocks) {
  std::string out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += blocks[i];
  }
  return out;
}

std::string join_facts(std::span<const std::string> facts) {
  std::string out;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    if (i > 0) out += ", ";
    out += facts[i];
  }
  return out;
}

std::size_t find_marker(std::string_view text, std::string_view marker, bool last) {
  auto pos = last ? text.rfind(marker) : text.find(marker);
  if (pos != std::string_view::npos) return pos;
  std::string lower(marker);
  lower[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(lower[0])));
  return last ? text.rfind(lower) : text.find(lower);
}

}  // namespace

void to_json(nlohmann::json& j, const Demonstration& demo) {
  j = nlohmann::json{{"query", demo.query},
                     {"linearized_tables", demo.linearized_tables},
                     {"facts", demo.facts},
                     {"summary", demo.summary}};
}

void from_json(const nlohmann::json& j, Demonstration& demo) {
  j.at("query").get_to(demo.query);
  j.at("linearized_tables").get_to(demo.linearized_tables);
  j.at("facts").get_to(demo.facts);
  j.at("summary").get_to(demo.summary);
}

std::vector<Demonstration> default_demonstrations() {
  return nlohmann::json::parse(builtin_resource("data/demos/summarization_demos.json"))
      .get<std::vector<Demonstration>>();
}

std::vector<Demonstration> load_demonstrations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open demonstrations " + path.string());
  return nlohmann::json::parse(in).get<std::vector<Demonstration>>();
}

std::string render_input_tables(std::span<const Table> tables) {
  std::string out;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (i > 0) out += '\n';
    out += "Table " + std::to_string(i + 1) + ": " + linearize_table(tables[i]).text;
  }
  return out;
}

PromptBundle build_direct_prompt(std::string_view query, std::span<const Table> tables,
                                 std::span<const Demonstration> demos) {
  if (tables.empty()) throw Error("direct prompt needs at least one table");
  check_demos(demos, true, true);
  std::vector<std::string> blocks;
  for (const auto& d : demos) {
    blocks.push_back("Query: " + d.query + "\n" + d.linearized_tables + "\nFacts: " + d.facts +
                     "\nSummary: " + d.summary);
  }
  PromptBundle bundle;
  bundle.template_name = "direct";
  bundle.demonstration_count = demos.size();
  bundle.text = render_template(builtin_template("direct"),
                                {{"demonstrations", join_blocks(blocks)},
                                 {"query", std::string(query)},
                                 {"tables", render_input_tables(tables)}});
  return bundle;
}

PromptBundle build_reason_prompt(std::string_view query, std::span<const Table> tables,
                                 std::span<const Demonstration> demos) {
  if (tables.empty()) throw Error("reasoning prompt needs at least one table");
  check_demos(demos, true, false);
  std::vector<std::string> blocks;
  for (const auto& d : demos) {
    blocks.push_back("Query: " + d.query + "\n" + d.linearized_tables + "\nFacts: " + d.facts);
  }
  PromptBundle bundle;
  bundle.template_name = "reason_phase1";
  bundle.demonstration_count = demos.size();
  bundle.text = render_template(builtin_template("reason_phase1"),
                                {{"demonstrations", join_blocks(blocks)},
                                 {"query", std::string(query)},
                                 {"tables", render_input_tables(tables)}});
  return bundle;
}

PromptBundle build_summarize_prompt(std::string_view query, std::span<const std::string> facts,
                                    std::span<const Demonstration> demos) {
  if (facts.empty()) throw Error("phase 1 produced no facts");
  check_demos(demos, false, true);
  std::vector<std::string> blocks;
  for (const auto& d : demos) {
    blocks.push_back("Query: " + d.query + "\nFacts: " + d.facts + "\nSummary: " + d.summary);
  }
  PromptBundle bundle;
  bundle.template_name = "reason_phase2";
  bundle.demonstration_count = demos.size();
  bundle.text = render_template(builtin_template("reason_phase2"),
                                {{"demonstrations", join_blocks(blocks)},
                                 {"query", std::string(query)},
                                 {"facts", join_facts(facts)}});
  return bundle;
}

std::vector<std::string> parse_facts(std::string_view text) {
  constexpr std::string_view marker = "Facts:";
  const auto pos = find_marker(text, marker, false);
  if (pos == std::string_view::npos) throw Error("missing Facts marker");
  auto rest = text.substr(pos + marker.size());
  std::vector<std::string> facts;
  while (true) {
    const auto comma = rest.find(',');
    if (auto item = trim(rest.substr(0, comma)); !item.empty()) facts.emplace_back(item);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return facts;
}

std::string parse_summary(std::string_view text) {
  constexpr std::string_view marker = "Summary:";
  const auto pos = find_marker(text, marker, true);
  if (pos == std::string_view::npos) throw Error("missing Summary marker");
  auto rest = text.substr(pos + marker.size());
  if (const auto facts = find_marker(rest, "Facts:", false); facts != std::string_view::npos) {
    rest = rest.substr(0, facts);
  }
  return std::string(trim(rest));
}

std::string_view to_string(Strategy strategy) {
  return strategy == Strategy::direct ? "direct" : "reason";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "direct") return Strategy::direct;
  if (text == "reason") return Strategy::reason_then_summarize;
  throw Error("unknown strategy \"" + std::string(text) + "\" (expected direct or reason)");
}

ControllerOutput run_direct(const Example& example, Gateway& gateway, const GenerationParams& params,
                            std::span<const Demonstration> demos) {
  try {
    const auto prompt = build_direct_prompt(example.query, example.input_tables, demos);
    auto response = gateway.complete(prompt, params);
    ControllerOutput out;
    out.summary = parse_summary(response.text);
    const auto text = std::string_view(response.text);
    const auto summary_at = find_marker(text, "Summary:", true);
    if (find_marker(text.substr(0, summary_at), "Facts:", false) != std::string_view::npos) {
      out.facts = parse_facts(text.substr(0, summary_at));
    }
    out.raw_phase_texts.push_back(std::move(response.text));
    if (out.summary.empty()) throw Error("empty summary");
    return out;
  } catch (const ControllerError&) {
    throw;
  } catch (const Error& e) {
    throw ControllerError(example.id, e.what());
  }
}

ControllerOutput run_reason_then_summ(const Example& example, Gateway& gateway,
                                      const GenerationParams& params,
                                      std::span<const Demonstration> demos) {
  ControllerOutput out;
  try {
    const auto reason = build_reason_prompt(example.query, example.input_tables, demos);
    auto phase1 = gateway.complete(reason, params);
    out.raw_phase_texts.push_back(phase1.text);
    out.facts = parse_facts(phase1.text);

    const auto summarize = build_summarize_prompt(example.query, out.facts, demos);
    auto phase2 = gateway.complete(summarize, params);
    out.raw_phase_texts.push_back(phase2.text);
    out.summary = parse_summary(phase2.text);
    if (out.summary.empty()) throw Error("empty summary");
    return out;
  } catch (const ControllerError&) {
    throw;
  } catch (const Error& e) {
    throw ControllerError(example.id, e.what());
  }
}

void to_json(nlohmann::json& j, const Prediction& prediction) {
  j = nlohmann::json{{"id", prediction.id},
                     {"strategy", to_string(prediction.strategy)},
                     {"facts", prediction.facts},
                     {"summary", prediction.summary}};
  if (prediction.error) j["error"] = *prediction.error;
}

void from_json(const nlohmann::json& j, Prediction& prediction) {
  j.at("id").get_to(prediction.id);
  prediction.strategy = parse_strategy(j.at("strategy").get<std::string>());
  prediction.facts = j.value("facts", std::vector<std::string>{});
  prediction.summary = j.value("summary", std::string{});
  if (j.contains("error") && !j.at("error").is_null()) {
    prediction.error = j.at("error").get<std::string>();
  } else {
    prediction.error.reset();
  }
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open predictions " + path.string());
  std::vector<Prediction> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(nlohmann::json::parse(line).get<Prediction>());
  }
  return out;
}

void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write predictions " + path.string());
  for (const auto& p : predictions) out << nlohmann::json(p).dump() << '\n';
}

std::vector<Prediction> summarize_examples(std::span<const Example> examples, Strategy strategy,
                                           Gateway& gateway, const GenerationParams& params,
                                           std::span<const Demonstration> demos, int parallelism) {
  std::vector<Prediction> predictions(examples.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < examples.size(); i = next++) {
      const auto& ex = examples[i];
      auto& pred = predictions[i];
      pred.id = ex.id;
      pred.strategy = strategy;
      try {
        auto out = strategy == Strategy::direct ? run_direct(ex, gateway, params, demos)
                                                : run_reason_then_summ(ex, gateway, params, demos);
        pred.facts = std::move(out.facts);
        pred.summary = std::move(out.summary);
      } catch (const Error& e) {
        pred.summary.clear();
        pred.error = e.what();
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, parallelism));
  std::vector<std::jthread> threads;
  for (std::size_t t = 1; t < std::min(n, examples.size()); ++t) threads.emplace_back(worker);
  worker();
  return predictions;
}

}  // namespace qfmts
