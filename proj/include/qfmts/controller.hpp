#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qfmts/llm_gateway.hpp"
#include "qfmts/prompt.hpp"
#include "qfmts/table.hpp"

namespace qfmts {

/// A few-shot demonstration: query, tables already rendered as text,
/// human-written facts and a summary.
struct Demonstration {
  std::string query;
  std::string linearized_tables;
  std::string facts;
  std::string summary;
};

void to_json(nlohmann::json& j, const Demonstration& demo);
void from_json(const nlohmann::json& j, Demonstration& demo);

/// The three built-in demonstrations (data/demos/summarization_demos.json).
std::vector<Demonstration> default_demonstrations();
std::vector<Demonstration> load_demonstrations(const std::filesystem::path& path);

/// Input tables as one "Table i: <linearized>" line each.
std::string render_input_tables(std::span<const Table> tables);

/// Single-call prompt: reasoning with "Let's think step by step" followed by
/// summary writing.
PromptBundle build_direct_prompt(std::string_view query, std::span<const Table> tables,
                                 std::span<const Demonstration> demos);
/// Phase 1: fact extraction only; demonstrations omit the summary.
PromptBundle build_reason_prompt(std::string_view query, std::span<const Table> tables,
                                 std::span<const Demonstration> demos);
/// Phase 2: summary from the query and the phase-1 facts joined with ", ".
/// Throws qfmts::Error("phase 1 produced no facts") on an empty list.
PromptBundle build_summarize_prompt(std::string_view query, std::span<const std::string> facts,
                                    std::span<const Demonstration> demos);

/// Items after the first "Facts:" marker, split on commas, trimmed, empty
/// items dropped. Falls back to "facts:" before throwing
/// qfmts::Error("missing Facts marker").
std::vector<std::string> parse_facts(std::string_view text);

/// Text after the last "Summary:" marker, trimmed, up to any later "Facts:"
/// section. Falls back to "summary:" before throwing
/// qfmts::Error("missing Summary marker").
std::string parse_summary(std::string_view text);

enum class Strategy { direct, reason_then_summarize };

/// "direct" or "reason".
std::string_view to_string(Strategy strategy);
Strategy parse_strategy(std::string_view text);

struct ControllerOutput {
  std::vector<std::string> facts;
  std::string summary;
  std::vector<std::string> raw_phase_texts;
};

/// A controller failure, tagged with the example it happened on.
class ControllerError : public Error {
 public:
  ControllerError(std::string example_id, const std::string& message)
      : Error("example " + example_id + ": " + message), example_id_(std::move(example_id)) {}
  const std::string& example_id() const noexcept { return example_id_; }

 private:
  std::string example_id_;
};

ControllerOutput run_direct(const Example& example, Gateway& gateway, const GenerationParams& params,
                            std::span<const Demonstration> demos);
/// Two sequential calls. A phase-1 failure aborts before phase 2 is sent.
ControllerOutput run_reason_then_summ(const Example& example, Gateway& gateway,
                                      const GenerationParams& params,
                                      std::span<const Demonstration> demos);

/// One line of a predictions file.
struct Prediction {
  std::string id;
  Strategy strategy = Strategy::direct;
  std::vector<std::string> facts;
  std::string summary;
  std::optional<std::string> error;

  bool failed() const noexcept { return error.has_value(); }
};

void to_json(nlohmann::json& j, const Prediction& prediction);
void from_json(const nlohmann::json& j, Prediction& prediction);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions);

/// Runs `strategy` over every example with up to `parallelism` examples in
/// flight. Failures become predictions with an empty summary and an error
/// note; output order follows input order.
std::vector<Prediction> summarize_examples(std::span<const Example> examples, Strategy strategy,
                                           Gateway& gateway, const GenerationParams& params,
                                           std::span<const Demonstration> demos, int parallelism);

}  // namespace qfmts
