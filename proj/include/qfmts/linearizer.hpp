#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qfmts/table.hpp"

namespace qfmts {

struct LinearizedText {
  std::string text;
  std::vector<std::string> source_table_names;
};

/// `<table_name>: name col: h1 | ... | hn row 1: c11 | ... | c1n ... row m: ...`
///
/// Headers and cells are trimmed of leading/trailing whitespace; inner
/// whitespace and any literal "|" are kept verbatim. Throws ValidationError
/// when the table violates its invariants.
LinearizedText linearize_table(const Table& table);

/// `query lin(t1) ... lin(tk)`, space separated, in input order.
std::string linearize_model_input(std::string_view query, std::span<const Table> tables);

}  // namespace qfmts
