#include "qfmts/linearizer.hpp"

#include "qfmts/error.hpp"

namespace qfmts {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

void append_cells(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t j = 0; j < cells.size(); ++j) {
    if (j > 0) out += " | ";
    out += trim(cells[j]);
  }
}

}  // namespace

LinearizedText linearize_table(const Table& table) {
  if (auto violations = validate_table(table); !violations.empty()) {
    throw ValidationError(std::move(violations));
  }
  LinearizedText result;
  result.source_table_names.push_back(table.name);
  auto& out = result.text;
  out += "<table_name>: ";
  out += trim(table.name);
  out += " col: ";
  append_cells(out, table.headers);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    out += " row ";
    out += std::to_string(i + 1);
    out += ": ";
    append_cells(out, table.rows[i]);
  }
  return result;
}

std::string linearize_model_input(std::string_view query, std::span<const Table> tables) {
  if (tables.empty()) throw Error("linearize_model_input: no input tables");
  std::string out(query);
  for (const auto& table : tables) {
    out += ' ';
    out += linearize_table(table).text;
  }
  return out;
}

}  // namespace qfmts
