#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qfmts/table.hpp"

struct sqlite3;

namespace qfmts {

/// An open, read-only connection to one single-file SQLite database.
/// Movable, not copyable; one handle must not be used from two threads at
/// once, but distinct handles may run concurrently.
class DatabaseHandle {
 public:
  DatabaseHandle(DatabaseHandle&& other) noexcept;
  DatabaseHandle& operator=(DatabaseHandle&& other) noexcept;
  DatabaseHandle(const DatabaseHandle&) = delete;
  DatabaseHandle& operator=(const DatabaseHandle&) = delete;
  ~DatabaseHandle();

  const std::string& database_id() const noexcept { return database_id_; }
  const std::filesystem::path& path() const noexcept { return path_; }
  /// User tables in sqlite_master order.
  const std::vector<std::string>& table_names() const noexcept { return table_names_; }

 private:
  friend DatabaseHandle load_database(const std::filesystem::path& path);
  friend Table execute_sql(const DatabaseHandle& handle, std::string_view sql);
  friend std::vector<Table> extract_input_tables(const DatabaseHandle& handle,
                                                 std::span<const std::string> table_names);
  DatabaseHandle(sqlite3* db, std::string database_id, std::filesystem::path path,
                 std::vector<std::string> tables);

  sqlite3* db_ = nullptr;
  std::string database_id_;
  std::filesystem::path path_;
  std::vector<std::string> table_names_;
};

/// Opens `path` read-only; the database id is the file stem. Throws
/// qfmts::Error("database open failed: ...") on a missing or corrupt file.
DatabaseHandle load_database(const std::filesystem::path& path);

/// True when `sql` is a single SELECT (optionally introduced by WITH),
/// ignoring comments, surrounding whitespace and one trailing semicolon.
bool is_single_select(std::string_view sql);

/// Runs a single read-only SELECT. The result table is named "result",
/// headers are the engine's column labels and rows come in engine order
/// with duplicates kept. NULL renders as "none".
/// Throws qfmts::Error("statement rejected: ...") for anything that is not a
/// single SELECT and qfmts::Error("execution failed: <engine message>") on
/// engine errors.
Table execute_sql(const DatabaseHandle& handle, std::string_view sql);

/// Full contents of each named table, in request order, columns as stored.
/// Names match case-insensitively; Table::name is the stored name.
std::vector<Table> extract_input_tables(const DatabaseHandle& handle,
                                        std::span<const std::string> table_names);

}  // namespace qfmts
