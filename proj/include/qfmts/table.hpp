#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace qfmts {

/// Rendering of SQL NULL in every cell produced by this library.
inline constexpr std::string_view kNullCell = "none";

/// A named grid of string cells. Cells hold the SQL engine's text
/// rendering verbatim; no type coercion is applied anywhere.
struct Table {
  std::string name;
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> rows;

  std::size_t row_count() const noexcept { return rows.size(); }
  std::size_t column_count() const noexcept { return headers.size(); }

  bool operator==(const Table&) const = default;
};

enum class Split { train, validation, test };

std::string_view to_string(Split split);
/// Throws qfmts::Error on anything other than "train", "validation" or "test".
Split parse_split(std::string_view text);

/// One dataset record: a query over k >= 1 input tables, the gold SQL,
/// its execution table and the reference summary.
struct Example {
  std::string id;
  std::string query;
  std::string sql;
  std::string database_id;
  std::vector<Table> input_tables;
  Table execution_table;
  std::string summary;
  Split split = Split::train;

  bool operator==(const Example&) const = default;
};

struct DatasetStats {
  std::size_t total = 0;
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
  double fraction_single = 0.0;
  double fraction_double = 0.0;
  double fraction_three_plus = 0.0;
  double mean_tables = 0.0;
  double mean_summary_words = 0.0;
};

/// Violations of the Table invariants, empty when the table is well formed.
std::vector<std::string> validate_table(const Table& table);

/// Violations of the Table and Example invariants, empty when all hold.
std::vector<std::string> validate_example(const Example& example);

/// Throws qfmts::Error("empty dataset") on an empty span.
DatasetStats compute_stats(std::span<const Example> examples);

/// Number of word tokens (tokens with at least one alphanumeric or
/// non-ASCII byte) under the shared metric tokenizer.
std::size_t word_count(std::string_view text);

void to_json(nlohmann::json& j, const Table& table);
void from_json(const nlohmann::json& j, Table& table);
void to_json(nlohmann::json& j, const Example& example);
void from_json(const nlohmann::json& j, Example& example);
void to_json(nlohmann::json& j, const DatasetStats& stats);

/// JSON Lines, one Example per line. Blank lines are skipped on read.
std::vector<Example> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, std::span<const Example> examples);
std::string dataset_to_jsonl(std::span<const Example> examples);

}  // namespace qfmts
