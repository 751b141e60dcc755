#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qfmts/controller.hpp"
#include "qfmts/metrics.hpp"
#include "qfmts/table.hpp"

namespace qfmts {

/// Metric values of one scored prediction. All values lie in [0, 1].
struct ExampleScore {
  std::string id;
  std::size_t n_input_tables = 0;
  bool failed = false;
  double rouge_l = 0.0;  // F1
  double str_em = 0.0;
  bool empty_table = false;
  double parent = 0.0;  // F
  double completeness = 0.0;
  std::optional<double> bertscore;
  bool operator==(const ExampleScore&) const = default;
};

/// Aggregates over a set of examples. BLEU is corpus-level on [0, 100];
/// the other metrics are arithmetic means of the per-example values.
struct MetricSummary {
  std::size_t n = 0;
  std::size_t failed = 0;
  double bleu = 0.0;
  double rouge_l = 0.0;
  double str_em = 0.0;
  double parent = 0.0;
  double completeness = 0.0;
  std::optional<double> bertscore;
  bool operator==(const MetricSummary&) const = default;
};

struct ScoreReport {
  std::vector<ExampleScore> examples;  // prediction order
  MetricSummary corpus;
  MetricSummary single_table;  // exactly one input table
  MetricSummary multi_table;   // two or more
  bool operator==(const ScoreReport&) const = default;
};

struct EvaluateOptions {
  double parent_lambda = metrics::kDefaultParentLambda;
  /// Externally computed BERTScore per example id. When given, every
  /// prediction id must have an entry.
  std::optional<std::map<std::string, double>> bertscore;
  int parallelism = 4;
};

/// Scores every prediction against its example. Failed predictions are
/// scored as empty summaries and counted. The result does not depend on
/// `parallelism`. Throws qfmts::Error listing every unknown or duplicated
/// prediction id.
ScoreReport evaluate_run(std::span<const Prediction> predictions, std::span<const Example> dataset,
                         const EvaluateOptions& options = {});

/// Fixed-width text table, one row per non-empty subset (all, single,
/// multi). Columns: Subset, N, SacreBLEU, ROUGE-L, BERTScore (only when
/// present), STR-EM, PARENT, Completeness; ratios are shown on 0-100. An
/// empty report renders the header line alone.
std::string render_report(const ScoreReport& report);

void to_json(nlohmann::json& j, const ExampleScore& score);
void from_json(const nlohmann::json& j, ExampleScore& score);
void to_json(nlohmann::json& j, const MetricSummary& summary);
void from_json(const nlohmann::json& j, MetricSummary& summary);
void to_json(nlohmann::json& j, const ScoreReport& report);
void from_json(const nlohmann::json& j, ScoreReport& report);

/// Pretty-printed JSON with a trailing newline.
std::string report_to_json_text(const ScoreReport& report);

}  // namespace qfmts
