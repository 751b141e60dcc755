#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qfmts/table.hpp"

namespace qfmts {

/// One annotator's judgment of one summary.
struct HumanLabel {
  std::string example_id;
  std::string annotator_id;
  int faithfulness = 0;  // 0 or 1
  int fluency = 0;       // 1..5
  std::optional<std::string> corrected_summary;
  std::string timestamp;

  bool operator==(const HumanLabel&) const = default;
};

/// Violations of the HumanLabel invariants; empty when valid.
std::vector<std::string> validate_label(const HumanLabel& label);

void to_json(nlohmann::json& j, const HumanLabel& label);
void from_json(const nlohmann::json& j, HumanLabel& label);
std::vector<HumanLabel> read_labels(const std::filesystem::path& path);

struct AgreementReport {
  double kappa = 0.0;
  double mean_observed_agreement = 0.0;
  double expected_agreement = 0.0;
  std::size_t n_items = 0;
  std::size_t n_raters = 0;
};

void to_json(nlohmann::json& j, const AgreementReport& report);
void from_json(const nlohmann::json& j, AgreementReport& report);

/// The query, then every execution-table cell in row-major order, joined
/// with ", ". An empty table yields the query alone.
std::string build_reference_sequence(std::string_view query, const Table& execution_table);

/// ROUGE-L recall of the summary against build_reference_sequence().
double completeness(std::string_view summary, std::string_view query, const Table& execution_table);

/// Fleiss' kappa over an item x rater matrix of category labels. Every row
/// must have the same number (>= 2) of raters, else qfmts::Error. When the
/// expected agreement is 1 (one category used throughout) kappa is 1.
AgreementReport fleiss_kappa(const std::vector<std::vector<int>>& ratings);

struct ExampleLabelMeans {
  std::string example_id;
  std::size_t n_labels = 0;
  double faithfulness = 0.0;
  double fluency = 0.0;
};

struct LabelAggregate {
  std::vector<ExampleLabelMeans> per_example;  // sorted by example id
  double faithfulness = 0.0;                   // mean of per-example means
  double fluency = 0.0;
};

LabelAggregate aggregate_labels(std::span<const HumanLabel> labels);

}  // namespace qfmts
