#include "qfmts/quality.hpp"

#include <fstream>
#include <map>

#include "qfmts/error.hpp"
#include "qfmts/metrics.hpp"

namespace qfmts {

std::vector<std::string> validate_label(const HumanLabel& label) {
  std::vector<std::string> violations;
  if (label.example_id.empty()) violations.emplace_back("example_id empty");
  if (label.annotator_id.empty()) violations.emplace_back("annotator_id empty");
  if (label.faithfulness != 0 && label.faithfulness != 1) {
    violations.push_back("faithfulness must be 0 or 1, got " + std::to_string(label.faithfulness));
  }
  if (label.fluency < 1 || label.fluency > 5) {
    violations.push_back("fluency must be in 1..5, got " + std::to_string(label.fluency));
  }
  return violations;
}

void to_json(nlohmann::json& j, const HumanLabel& label) {
  j = nlohmann::json{{"example_id", label.example_id},
                     {"annotator_id", label.annotator_id},
                     {"faithfulness", label.faithfulness},
                     {"fluency", label.fluency},
                     {"corrected_summary", nullptr},
                     {"timestamp", label.timestamp}};
  if (label.corrected_summary) j["corrected_summary"] = *label.corrected_summary;
}

void from_json(const nlohmann::json& j, HumanLabel& label) {
  j.at("example_id").get_to(label.example_id);
  j.at("annotator_id").get_to(label.annotator_id);
  j.at("faithfulness").get_to(label.faithfulness);
  j.at("fluency").get_to(label.fluency);
  label.corrected_summary.reset();
  if (auto it = j.find("corrected_summary"); it != j.end() && !it->is_null()) {
    label.corrected_summary = it->get<std::string>();
  }
  label.timestamp = j.value("timestamp", std::string{});
}

std::vector<HumanLabel> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open labels " + path.string());
  std::vector<HumanLabel> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    labels.push_back(nlohmann::json::parse(line).get<HumanLabel>());
  }
  return labels;
}

void to_json(nlohmann::json& j, const AgreementReport& report) {
  j = nlohmann::json{{"kappa", report.kappa},
                     {"mean_observed_agreement", report.mean_observed_agreement},
                     {"expected_agreement", report.expected_agreement},
                     {"n_items", report.n_items},
                     {"n_raters", report.n_raters}};
}

void from_json(const nlohmann::json& j, AgreementReport& report) {
  j.at("kappa").get_to(report.kappa);
  j.at("mean_observed_agreement").get_to(report.mean_observed_agreement);
  j.at("expected_agreement").get_to(report.expected_agreement);
  j.at("n_items").get_to(report.n_items);
  j.at("n_raters").get_to(report.n_raters);
}

std::string build_reference_sequence(std::string_view query, const Table& execution_table) {
  std::string out(query);
  for (const auto& row : execution_table.rows) {
    for (const auto& cell : row) {
      out += ", ";
      out += cell;
    }
  }
  return out;
}

double completeness(std::string_view summary, std::string_view query, const Table& execution_table) {
  return metrics::rouge_l(summary, build_reference_sequence(query, execution_table)).recall;
}

AgreementReport fleiss_kappa(const std::vector<std::vector<int>>& ratings) {
  if (ratings.empty()) throw Error("fleiss_kappa: no items");
  const std::size_t raters = ratings.front().size();
  if (raters < 2) throw Error("fleiss_kappa: need at least 2 raters per item");
  std::map<int, double> category_totals;
  double observed_sum = 0.0;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    if (ratings[i].size() != raters) {
      throw Error("fleiss_kappa: item " + std::to_string(i + 1) + " has " +
                  std::to_string(ratings[i].size()) + " ratings, expected " + std::to_string(raters));
    }
    std::map<int, double> counts;
    for (int c : ratings[i]) counts[c] += 1.0;
    double agree = 0.0;
    for (const auto& [category, n] : counts) {
      agree += n * (n - 1.0);
      category_totals[category] += n;
    }
    const double r = static_cast<double>(raters);
    observed_sum += agree / (r * (r - 1.0));
  }

  AgreementReport report;
  report.n_items = ratings.size();
  report.n_raters = raters;
  const double total = static_cast<double>(ratings.size() * raters);
  report.mean_observed_agreement = observed_sum / static_cast<double>(ratings.size());
  for (const auto& [category, n] : category_totals) {
    const double p = n / total;
    report.expected_agreement += p * p;
  }
  if (report.expected_agreement >= 1.0) {
    report.kappa = 1.0;
  } else {
    report.kappa = (report.mean_observed_agreement - report.expected_agreement) /
                   (1.0 - report.expected_agreement);
  }
  return report;
}

LabelAggregate aggregate_labels(std::span<const HumanLabel> labels) {
  std::map<std::string, ExampleLabelMeans> by_example;
  for (const auto& label : labels) {
    auto& m = by_example[label.example_id];
    m.example_id = label.example_id;
    ++m.n_labels;
    m.faithfulness += label.faithfulness;
    m.fluency += label.fluency;
  }
  LabelAggregate agg;
  for (auto& [id, m] : by_example) {
    m.faithfulness /= static_cast<double>(m.n_labels);
    m.fluency /= static_cast<double>(m.n_labels);
    agg.faithfulness += m.faithfulness;
    agg.fluency += m.fluency;
    agg.per_example.push_back(m);
  }
  if (!agg.per_example.empty()) {
    agg.faithfulness /= static_cast<double>(agg.per_example.size());
    agg.fluency /= static_cast<double>(agg.per_example.size());
  }
  return agg;
}

}  // namespace qfmts
