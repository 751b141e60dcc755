#include "qfmts/table.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "qfmts/error.hpp"
#include "qfmts/metrics.hpp"

namespace qfmts {

namespace {

std::string join_lines(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += "; ";
    out += item;
  }
  return out;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : Error("validation failed: " + join_lines(violations)), violations_(std::move(violations)) {}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "validation") return Split::validation;
  if (text == "test") return Split::test;
  throw Error("invalid split \"" + std::string(text) + "\"");
}

std::vector<std::string> validate_table(const Table& table) {
  std::vector<std::string> violations;
  if (table.name.empty()) violations.emplace_back("table name empty");
  for (std::size_t j = 0; j < table.headers.size(); ++j) {
    if (table.headers[j].empty()) {
      violations.push_back("header " + std::to_string(j + 1) + " empty");
    }
  }
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (table.rows[i].size() != table.headers.size()) {
      violations.push_back("row " + std::to_string(i + 1) + " has " +
                           std::to_string(table.rows[i].size()) + " cells, expected " +
                           std::to_string(table.headers.size()));
    }
  }
  return violations;
}

std::vector<std::string> validate_example(const Example& example) {
  std::vector<std::string> violations;
  if (example.input_tables.empty()) violations.emplace_back("input_tables empty");
  for (const auto& table : example.input_tables) {
    auto v = validate_table(table);
    violations.insert(violations.end(), v.begin(), v.end());
  }
  auto v = validate_table(example.execution_table);
  violations.insert(violations.end(), v.begin(), v.end());
  return violations;
}

std::size_t word_count(std::string_view text) {
  std::size_t words = 0;
  for (const auto& token : metrics::tokenize(text)) {
    const auto c = static_cast<unsigned char>(token.front());
    if (std::isalnum(c) || c >= 0x80) ++words;
  }
  return words;
}

DatasetStats compute_stats(std::span<const Example> examples) {
  if (examples.empty()) throw Error("empty dataset");
  DatasetStats stats;
  stats.total = examples.size();
  std::size_t single = 0, dual = 0, more = 0, tables = 0, words = 0;
  for (const auto& ex : examples) {
    switch (ex.split) {
      case Split::train: ++stats.train; break;
      case Split::validation: ++stats.validation; break;
      case Split::test: ++stats.test; break;
    }
    const auto k = ex.input_tables.size();
    tables += k;
    if (k <= 1) {
      ++single;
    } else if (k == 2) {
      ++dual;
    } else {
      ++more;
    }
    words += word_count(ex.summary);
  }
  const auto n = static_cast<double>(stats.total);
  stats.fraction_single = static_cast<double>(single) / n;
  stats.fraction_double = static_cast<double>(dual) / n;
  stats.fraction_three_plus = static_cast<double>(more) / n;
  stats.mean_tables = static_cast<double>(tables) / n;
  stats.mean_summary_words = static_cast<double>(words) / n;
  return stats;
}

void to_json(nlohmann::json& j, const Table& table) {
  j = nlohmann::json{{"name", table.name}, {"headers", table.headers}, {"rows", table.rows}};
}

void from_json(const nlohmann::json& j, Table& table) {
  j.at("name").get_to(table.name);
  j.at("headers").get_to(table.headers);
  j.at("rows").get_to(table.rows);
}

void to_json(nlohmann::json& j, const Example& example) {
  j = nlohmann::json{{"id", example.id},
                     {"query", example.query},
                     {"sql", example.sql},
                     {"database_id", example.database_id},
                     {"input_tables", example.input_tables},
                     {"execution_table", example.execution_table},
                     {"summary", example.summary},
                     {"split", to_string(example.split)}};
}

void from_json(const nlohmann::json& j, Example& example) {
  j.at("id").get_to(example.id);
  j.at("query").get_to(example.query);
  j.at("sql").get_to(example.sql);
  j.at("database_id").get_to(example.database_id);
  j.at("input_tables").get_to(example.input_tables);
  j.at("execution_table").get_to(example.execution_table);
  example.summary = j.value("summary", std::string{});
  example.split = parse_split(j.at("split").get<std::string>());
}

void to_json(nlohmann::json& j, const DatasetStats& stats) {
  j = nlohmann::json{{"total", stats.total},
                     {"counts", {{"train", stats.train},
                                 {"validation", stats.validation},
                                 {"test", stats.test}}},
                     {"fraction_single_table", stats.fraction_single},
                     {"fraction_double_table", stats.fraction_double},
                     {"fraction_three_plus_tables", stats.fraction_three_plus},
                     {"mean_tables_per_example", stats.mean_tables},
                     {"mean_summary_words", stats.mean_summary_words}};
}

std::vector<Example> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  std::vector<Example> examples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    try {
      examples.push_back(nlohmann::json::parse(line).get<Example>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return examples;
}

std::string dataset_to_jsonl(std::span<const Example> examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += nlohmann::json(ex).dump();
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const Example> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset " + path.string());
  out << dataset_to_jsonl(examples);
}

}  // namespace qfmts
