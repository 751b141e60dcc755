#include "qfmts/review_service.hpp"

#include <spdlog/spdlog.h>
#include <sqlite3.h>

#include <algorithm>
#include <ctime>
#include <map>

#include "httplib.h"
#include "qfmts/dataset_builder.hpp"

namespace qfmts {

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::size_t split_index(Split split) { return static_cast<std::size_t>(split); }

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw Error(std::string("review store: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  void bind(int i, std::string_view v) {
    sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
  }
  void bind(int i, std::int64_t v) { sqlite3_bind_int64(stmt_, i, v); }
  void bind_null(int i) { sqlite3_bind_null(stmt_, i); }

  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw Error(std::string("review store: ") + sqlite3_errmsg(db_));
  }

  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? reinterpret_cast<const char*>(p) : "";
  }
  bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
  std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

HumanLabel read_label(const Statement& s) {
  HumanLabel l;
  l.example_id = s.text(0);
  l.annotator_id = s.text(1);
  l.faithfulness = static_cast<int>(s.integer(2));
  l.fluency = static_cast<int>(s.integer(3));
  if (!s.is_null(4)) l.corrected_summary = s.text(4);
  l.timestamp = s.text(5);
  return l;
}

constexpr const char* kLabelColumns =
    "SELECT example_id, annotator_id, faithfulness, fluency, corrected_summary, timestamp FROM labels ";

}  // namespace

void to_json(nlohmann::json& j, const ReviewTask& task) {
  j = nlohmann::json{{"example_id", task.example_id},
                     {"split", to_string(task.split)},
                     {"query", task.query},
                     {"input_tables", task.input_tables},
                     {"execution_table", task.execution_table},
                     {"candidate_summary", task.candidate_summary},
                     {"existing_labels", task.existing_labels}};
}

void to_json(nlohmann::json& j, const Correction& c) {
  j = nlohmann::json{{"seq", c.seq},
                     {"example_id", c.example_id},
                     {"annotator_id", c.annotator_id},
                     {"corrected_summary", c.corrected_summary},
                     {"timestamp", c.timestamp}};
}

ReviewStore::ReviewStore(const std::filesystem::path& path) {
  const auto name = path.string();
  if (sqlite3_open_v2(name.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw Error("cannot open review store " + name + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  const char* schema =
      "CREATE TABLE IF NOT EXISTS labels ("
      " example_id TEXT NOT NULL, annotator_id TEXT NOT NULL,"
      " faithfulness INTEGER NOT NULL, fluency INTEGER NOT NULL,"
      " corrected_summary TEXT, timestamp TEXT NOT NULL,"
      " PRIMARY KEY (example_id, annotator_id));"
      "CREATE TABLE IF NOT EXISTS corrections ("
      " seq INTEGER PRIMARY KEY AUTOINCREMENT, example_id TEXT NOT NULL,"
      " annotator_id TEXT NOT NULL, corrected_summary TEXT NOT NULL, timestamp TEXT NOT NULL);";
  char* err = nullptr;
  if (sqlite3_exec(db_, schema, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    sqlite3_close(db_);
    throw Error("review store schema: " + msg);
  }
}

ReviewStore::~ReviewStore() { sqlite3_close(db_); }

void ReviewStore::put_label(const HumanLabel& label) {
  std::lock_guard lock(mutex_);
  Statement s(db_,
              "INSERT INTO labels VALUES (?1, ?2, ?3, ?4, ?5, ?6) "
              "ON CONFLICT (example_id, annotator_id) DO UPDATE SET faithfulness = excluded.faithfulness,"
              " fluency = excluded.fluency, corrected_summary = excluded.corrected_summary,"
              " timestamp = excluded.timestamp");
  s.bind(1, label.example_id);
  s.bind(2, label.annotator_id);
  s.bind(3, std::int64_t{label.faithfulness});
  s.bind(4, std::int64_t{label.fluency});
  if (label.corrected_summary) {
    s.bind(5, *label.corrected_summary);
  } else {
    s.bind_null(5);
  }
  s.bind(6, label.timestamp);
  s.step();
}

std::vector<HumanLabel> ReviewStore::labels() const {
  std::lock_guard lock(mutex_);
  Statement s(db_, (std::string(kLabelColumns) + "ORDER BY example_id, annotator_id").c_str());
  std::vector<HumanLabel> out;
  while (s.step()) out.push_back(read_label(s));
  return out;
}

std::vector<HumanLabel> ReviewStore::labels_for(std::string_view example_id) const {
  std::lock_guard lock(mutex_);
  Statement s(db_, (std::string(kLabelColumns) + "WHERE example_id = ?1 ORDER BY annotator_id").c_str());
  s.bind(1, example_id);
  std::vector<HumanLabel> out;
  while (s.step()) out.push_back(read_label(s));
  return out;
}

std::int64_t ReviewStore::add_correction(const Correction& c) {
  std::lock_guard lock(mutex_);
  Statement s(db_,
              "INSERT INTO corrections (example_id, annotator_id, corrected_summary, timestamp) "
              "VALUES (?1, ?2, ?3, ?4)");
  s.bind(1, c.example_id);
  s.bind(2, c.annotator_id);
  s.bind(3, c.corrected_summary);
  s.bind(4, c.timestamp);
  s.step();
  return sqlite3_last_insert_rowid(db_);
}

std::vector<Correction> ReviewStore::corrections() const {
  std::lock_guard lock(mutex_);
  Statement s(db_,
              "SELECT seq, example_id, annotator_id, corrected_summary, timestamp FROM corrections ORDER BY seq");
  std::vector<Correction> out;
  while (s.step()) {
    out.push_back({s.integer(0), s.text(1), s.text(2), s.text(3), s.text(4)});
  }
  return out;
}

Aspect parse_aspect(std::string_view text) {
  if (text == "faithfulness") return Aspect::faithfulness;
  if (text == "fluency") return Aspect::fluency;
  throw Error("unknown aspect \"" + std::string(text) + "\" (expected faithfulness or fluency)");
}

ReviewService::ReviewService(std::vector<Example> dataset, std::unique_ptr<ReviewStore> store,
                             ReviewConfig config)
    : dataset_(std::move(dataset)), store_(std::move(store)), config_(std::move(config)) {
  if (!store_) throw Error("review service needs a store");
  for (const auto split : {Split::train, Split::validation, Split::test}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset_.size(); ++i) {
      if (dataset_[i].split == split) members.push_back(i);
    }
    const auto perm = seeded_permutation(members.size(), config_.seed + split_index(split));
    auto& pool = pools_[split_index(split)];
    for (std::size_t j = 0; j < std::min(config_.pool_size, perm.size()); ++j) {
      pool.push_back(dataset_[members[perm[j]]].id);
    }
  }
}

const std::vector<std::string>& ReviewService::pool(Split split) const { return pools_[split_index(split)]; }

const Example& ReviewService::example(std::string_view id) const {
  const auto it = std::find_if(dataset_.begin(), dataset_.end(), [&](const Example& e) { return e.id == id; });
  if (it == dataset_.end()) throw ReviewError(404, "unknown example " + std::string(id));
  return *it;
}

std::optional<ReviewTask> ReviewService::next_task(std::string_view annotator_id, Split split) const {
  std::map<std::string, std::size_t> counts;
  std::map<std::string, bool> mine;
  for (const auto& l : store_->labels()) {
    ++counts[l.example_id];
    if (l.annotator_id == annotator_id) mine[l.example_id] = true;
  }
  for (const auto& id : pool(split)) {
    if (mine.contains(id)) continue;
    const auto& ex = example(id);
    ReviewTask task;
    task.example_id = ex.id;
    task.split = ex.split;
    task.query = ex.query;
    task.input_tables = ex.input_tables;
    task.execution_table = ex.execution_table;
    task.candidate_summary = ex.summary;
    task.existing_labels = counts[id];
    return task;
  }
  return std::nullopt;
}

void ReviewService::submit_label(HumanLabel label) {
  if (const auto v = validate_label(label); !v.empty()) {
    std::string msg = "invalid label";
    for (std::size_t i = 0; i < v.size(); ++i) msg += (i == 0 ? ": " : "; ") + v[i];
    throw ReviewError(422, msg);
  }
  example(label.example_id);
  if (label.timestamp.empty()) label.timestamp = utc_timestamp();
  store_->put_label(label);
}

std::int64_t ReviewService::submit_correction(std::string_view example_id, std::string corrected_summary,
                                              std::string_view annotator_id) {
  const auto& ex = example(example_id);
  if (ex.split == Split::train) {
    throw ReviewError(422, "example " + ex.id +
                               " is in the train split; corrections apply to validation and test only");
  }
  if (annotator_id.empty()) throw ReviewError(422, "annotator_id empty");
  if (corrected_summary.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ReviewError(422, "corrected_summary empty");
  }
  return store_->add_correction(
      {0, ex.id, std::string(annotator_id), std::move(corrected_summary), utc_timestamp()});
}

AgreementReport ReviewService::agreement_report(Split split, Aspect aspect) const {
  const auto& ids = pool(split);
  std::map<std::string, std::vector<int>> by_item;
  for (const auto& l : store_->labels()) {
    if (std::find(ids.begin(), ids.end(), l.example_id) == ids.end()) continue;
    by_item[l.example_id].push_back(aspect == Aspect::faithfulness ? l.faithfulness : l.fluency);
  }
  std::size_t raters = 0;
  for (const auto& [id, r] : by_item) raters = std::max(raters, r.size());
  if (raters < 2) {
    throw ReviewError(409, "agreement needs at least two raters per item; found " + std::to_string(raters));
  }
  std::vector<std::vector<int>> matrix;
  for (auto& [id, r] : by_item) {
    if (r.size() == raters) matrix.push_back(std::move(r));
  }
  return fleiss_kappa(matrix);
}

std::vector<Example> ReviewService::export_split(Split split) const {
  std::map<std::string, std::string> latest;
  for (auto& c : store_->corrections()) latest[c.example_id] = std::move(c.corrected_summary);
  std::vector<Example> out;
  for (const auto& ex : dataset_) {
    if (ex.split != split) continue;
    out.push_back(ex);
    if (auto it = latest.find(ex.id); it != latest.end()) out.back().summary = it->second;
  }
  return out;
}

bool ReviewService::auth_enabled() const noexcept { return !config_.annotators.empty(); }

bool ReviewService::authorized(std::string_view token) const {
  if (!auth_enabled()) return true;
  return std::find(config_.annotators.begin(), config_.annotators.end(), token) != config_.annotators.end();
}

std::vector<HumanLabel> ReviewService::labels_for(std::string_view example_id) const {
  example(example_id);
  return store_->labels_for(example_id);
}

ReviewServer::ReviewServer(ReviewService& service, ServerOptions options)
    : service_(service), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

ReviewServer::~ReviewServer() { stop(); }

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::string bearer(const httplib::Request& req) {
  const auto header = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  return header.starts_with(prefix) ? header.substr(prefix.size()) : std::string{};
}

std::string required_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name) || req.get_param_value(name).empty()) {
    throw ReviewError(400, std::string("missing query parameter ") + name);
  }
  return req.get_param_value(name);
}

Split split_param(const httplib::Request& req) {
  try {
    return parse_split(required_param(req, "split"));
  } catch (const ReviewError&) {
    throw;
  } catch (const Error& e) {
    throw ReviewError(400, e.what());
  }
}

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw ReviewError(400, std::string("malformed JSON body: ") + e.what());
  }
}

}  // namespace

void ReviewServer::install_routes() {
  auto& svc = service_;
  // Wraps a handler with authentication and error mapping.
  auto guarded = [&svc](auto handler) {
    return [&svc, handler](const httplib::Request& req, httplib::Response& res) {
      try {
        const auto token = bearer(req);
        if (!svc.authorized(token)) throw ReviewError(401, "missing or unknown bearer token");
        handler(req, res, token);
      } catch (const ReviewError& e) {
        send_json(res, e.status(), {{"error", e.what()}});
      } catch (const nlohmann::json::exception& e) {
        send_json(res, 400, {{"error", std::string("bad request: ") + e.what()}});
      } catch (const Error& e) {
        send_json(res, 400, {{"error", e.what()}});
      }
    };
  };
  auto acting_as = [&svc](const std::string& token, const std::string& annotator) {
    if (svc.auth_enabled() && token != annotator) {
      throw ReviewError(403, "bearer token does not match annotator " + annotator);
    }
  };

  server_->Get("/tasks/next", guarded([&svc, acting_as](const httplib::Request& req, httplib::Response& res,
                                                         const std::string& token) {
                 const auto annotator = required_param(req, "annotator");
                 acting_as(token, annotator);
                 const auto task = svc.next_task(annotator, split_param(req));
                 if (!task) {
                   res.status = 204;
                   return;
                 }
                 send_json(res, 200, *task);
               }));

  server_->Get(R"(/examples/([^/]+))",
               guarded([&svc](const httplib::Request& req, httplib::Response& res, const std::string&) {
                 send_json(res, 200, svc.example(req.matches[1].str()));
               }));

  server_->Get("/labels", guarded([&svc](const httplib::Request& req, httplib::Response& res,
                                         const std::string&) {
                 send_json(res, 200, svc.labels_for(required_param(req, "example_id")));
               }));

  server_->Post("/labels", guarded([&svc, acting_as](const httplib::Request& req, httplib::Response& res,
                                                      const std::string& token) {
                  const auto body = parse_body(req);
                  HumanLabel label;
                  try {
                    label = body.get<HumanLabel>();
                  } catch (const nlohmann::json::exception& e) {
                    throw ReviewError(422, std::string("label does not match schema: ") + e.what());
                  }
                  acting_as(token, label.annotator_id);
                  svc.submit_label(label);
                  send_json(res, 200,
                            {{"status", "stored"},
                             {"example_id", label.example_id},
                             {"annotator_id", label.annotator_id}});
                }));

  server_->Post("/corrections", guarded([&svc, acting_as](const httplib::Request& req,
                                                           httplib::Response& res, const std::string& token) {
                  const auto body = parse_body(req);
                  std::string example_id;
                  std::string annotator_id;
                  std::string text;
                  try {
                    body.at("example_id").get_to(example_id);
                    body.at("annotator_id").get_to(annotator_id);
                    body.at("corrected_summary").get_to(text);
                  } catch (const nlohmann::json::exception& e) {
                    throw ReviewError(422, std::string("correction does not match schema: ") + e.what());
                  }
                  acting_as(token, annotator_id);
                  const auto seq = svc.submit_correction(example_id, std::move(text), annotator_id);
                  send_json(res, 200, {{"status", "stored"}, {"example_id", example_id}, {"seq", seq}});
                }));

  server_->Get("/agreement", guarded([&svc](const httplib::Request& req, httplib::Response& res,
                                            const std::string&) {
                 Aspect aspect;
                 try {
                   aspect = parse_aspect(required_param(req, "aspect"));
                 } catch (const ReviewError&) {
                   throw;
                 } catch (const Error& e) {
                   throw ReviewError(400, e.what());
                 }
                 send_json(res, 200, svc.agreement_report(split_param(req), aspect));
               }));

  server_->Get("/export", guarded([&svc](const httplib::Request& req, httplib::Response& res,
                                         const std::string&) {
                 const auto rows = svc.export_split(split_param(req));
                 res.status = 200;
                 res.set_content(dataset_to_jsonl(rows), "application/x-ndjson");
               }));

  if (options_.static_dir) {
    if (!server_->set_mount_point("/", options_.static_dir->string())) {
      throw Error("static directory not found: " + options_.static_dir->string());
    }
  }
}

int ReviewServer::bind() {
  int port = options_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(options_.host);
  } else if (!server_->bind_to_port(options_.host, port)) {
    port = -1;
  }
  if (port < 0) throw Error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
  options_.port = port;
  spdlog::info("review service bound to {}:{}", options_.host, port);
  return port;
}

void ReviewServer::listen() { server_->listen_after_bind(); }

void ReviewServer::stop() {
  if (server_) server_->stop();
}

}  // namespace qfmts
