#include "qfmts/sql_executor.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <cctype>
#include <memory>
#include <utility>

#include "qfmts/error.hpp"

namespace qfmts {

namespace {

struct StatementDeleter {
  void operator()(sqlite3_stmt* stmt) const noexcept { sqlite3_finalize(stmt); }
};
using Statement = std::unique_ptr<sqlite3_stmt, StatementDeleter>;

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
           return std::tolower(x) == std::tolower(y);
         });
}

// Skips leading whitespace and SQL comments.
std::string_view skip_space_and_comments(std::string_view s) {
  while (!s.empty()) {
    if (std::isspace(static_cast<unsigned char>(s.front()))) {
      s.remove_prefix(1);
    } else if (s.starts_with("--")) {
      const auto nl = s.find('\n');
      s = nl == std::string_view::npos ? std::string_view{} : s.substr(nl + 1);
    } else if (s.starts_with("/*")) {
      const auto end = s.find("*/", 2);
      s = end == std::string_view::npos ? std::string_view{} : s.substr(end + 2);
    } else {
      break;
    }
  }
  return s;
}

std::string leading_keyword(std::string_view s) {
  s = skip_space_and_comments(s);
  std::string word;
  for (char c : s) {
    if (!std::isalpha(static_cast<unsigned char>(c))) break;
    word += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return word;
}

Statement prepare(sqlite3* db, std::string_view sql, const char** tail) {
  sqlite3_stmt* raw = nullptr;
  const int rc = sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &raw, tail);
  Statement stmt(raw);
  if (rc != SQLITE_OK) {
    throw Error(std::string("execution failed: ") + sqlite3_errmsg(db));
  }
  return stmt;
}

std::string column_text(sqlite3_stmt* stmt, int col) {
  if (sqlite3_column_type(stmt, col) == SQLITE_NULL) return std::string(kNullCell);
  const auto* text = reinterpret_cast<const char*>(sqlite3_column_text(stmt, col));
  const int bytes = sqlite3_column_bytes(stmt, col);
  return text ? std::string(text, static_cast<std::size_t>(bytes)) : std::string(kNullCell);
}

Table collect(sqlite3* db, sqlite3_stmt* stmt, std::string name) {
  Table table;
  table.name = std::move(name);
  const int ncol = sqlite3_column_count(stmt);
  for (int c = 0; c < ncol; ++c) {
    const char* label = sqlite3_column_name(stmt, c);
    table.headers.emplace_back(label ? label : "");
  }
  while (true) {
    const int rc = sqlite3_step(stmt);
    if (rc == SQLITE_DONE) break;
    if (rc != SQLITE_ROW) throw Error(std::string("execution failed: ") + sqlite3_errmsg(db));
    std::vector<std::string> row;
    row.reserve(static_cast<std::size_t>(ncol));
    for (int c = 0; c < ncol; ++c) row.push_back(column_text(stmt, c));
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string quote_identifier(std::string_view name) {
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

DatabaseHandle::DatabaseHandle(sqlite3* db, std::string database_id, std::filesystem::path path,
                               std::vector<std::string> tables)
    : db_(db),
      database_id_(std::move(database_id)),
      path_(std::move(path)),
      table_names_(std::move(tables)) {}

DatabaseHandle::DatabaseHandle(DatabaseHandle&& other) noexcept
    : db_(std::exchange(other.db_, nullptr)),
      database_id_(std::move(other.database_id_)),
      path_(std::move(other.path_)),
      table_names_(std::move(other.table_names_)) {}

DatabaseHandle& DatabaseHandle::operator=(DatabaseHandle&& other) noexcept {
  if (this != &other) {
    if (db_) sqlite3_close(db_);
    db_ = std::exchange(other.db_, nullptr);
    database_id_ = std::move(other.database_id_);
    path_ = std::move(other.path_);
    table_names_ = std::move(other.table_names_);
  }
  return *this;
}

DatabaseHandle::~DatabaseHandle() {
  if (db_) sqlite3_close(db_);
}

DatabaseHandle load_database(const std::filesystem::path& path) {
  sqlite3* raw = nullptr;
  const int rc = sqlite3_open_v2(path.c_str(), &raw, SQLITE_OPEN_READONLY, nullptr);
  if (rc != SQLITE_OK) {
    std::string msg = raw ? sqlite3_errmsg(raw) : sqlite3_errstr(rc);
    sqlite3_close(raw);
    throw Error("database open failed: " + path.string() + ": " + msg);
  }
  std::vector<std::string> tables;
  try {
    auto stmt = prepare(raw,
                        "SELECT name FROM sqlite_master WHERE type = 'table' "
                        "AND name NOT LIKE 'sqlite_%' ORDER BY rowid",
                        nullptr);
    for (const auto& row : collect(raw, stmt.get(), "tables").rows) tables.push_back(row[0]);
  } catch (const Error& e) {
    sqlite3_close(raw);
    throw Error("database open failed: " + path.string() + ": " + e.what());
  }
  return DatabaseHandle(raw, path.stem().string(), path, std::move(tables));
}

bool is_single_select(std::string_view sql) {
  const auto kw = leading_keyword(sql);
  if (kw != "SELECT" && kw != "WITH") return false;
  // Any ';' outside string literals and identifiers must be trailing.
  char quote = 0;
  for (std::size_t i = 0; i < sql.size(); ++i) {
    const char c = sql[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '\'' || c == '"' || c == '`') {
      quote = c;
    } else if (c == '[') {
      quote = ']';
    } else if (c == ';') {
      if (!skip_space_and_comments(sql.substr(i + 1)).empty()) return false;
    }
  }
  return true;
}

Table execute_sql(const DatabaseHandle& handle, std::string_view sql) {
  if (!is_single_select(sql)) {
    throw Error("statement rejected: only a single read-only SELECT is permitted");
  }
  const char* tail = nullptr;
  auto stmt = prepare(handle.db_, sql, &tail);
  if (!stmt) throw Error("statement rejected: empty statement");
  if (!sqlite3_stmt_readonly(stmt.get())) {
    throw Error("statement rejected: statement is not read-only");
  }
  return collect(handle.db_, stmt.get(), "result");
}

std::vector<Table> extract_input_tables(const DatabaseHandle& handle,
                                        std::span<const std::string> table_names) {
  std::vector<Table> tables;
  tables.reserve(table_names.size());
  for (const auto& requested : table_names) {
    const auto& names = handle.table_names();
    const auto it = std::find_if(names.begin(), names.end(),
                                 [&](const std::string& n) { return iequals(n, requested); });
    if (it == names.end()) {
      throw Error("unknown table \"" + requested + "\" in database " + handle.database_id());
    }
    auto stmt = prepare(handle.db_, "SELECT * FROM " + quote_identifier(*it), nullptr);
    tables.push_back(collect(handle.db_, stmt.get(), *it));
  }
  return tables;
}

}  // namespace qfmts
