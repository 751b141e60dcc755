// Builds a Spider-style directory from SQL scripts:
//   make_spider_fixture <src> <out>
// <src>/sql/<db>.sql becomes <out>/database/<db>/<db>.sqlite and the JSON
// files of <src> are copied alongside.

#include <sqlite3.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: make_spider_fixture <src> <out>\n";
    return 2;
  }
  const fs::path src = argv[1];
  const fs::path out = argv[2];
  fs::remove_all(out);
  fs::create_directories(out / "database");
  for (const auto& entry : fs::directory_iterator(src)) {
    if (entry.path().extension() == ".json") fs::copy_file(entry.path(), out / entry.path().filename());
  }
  for (const auto& entry : fs::directory_iterator(src / "sql")) {
    if (entry.path().extension() != ".sql") continue;
    const auto db_id = entry.path().stem().string();
    const auto dir = out / "database" / db_id;
    fs::create_directories(dir);
    std::ifstream in(entry.path());
    const std::string script{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    sqlite3* db = nullptr;
    const auto path = (dir / (db_id + ".sqlite")).string();
    if (sqlite3_open(path.c_str(), &db) != SQLITE_OK) {
      std::cerr << "cannot create " << path << "\n";
      return 1;
    }
    char* err = nullptr;
    if (sqlite3_exec(db, script.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
      std::cerr << entry.path() << ": " << (err ? err : "error") << "\n";
      sqlite3_free(err);
      sqlite3_close(db);
      return 1;
    }
    sqlite3_close(db);
  }
  return 0;
}
