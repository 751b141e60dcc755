#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qfmts/error.hpp"
#include "qfmts/quality.hpp"
#include "qfmts/table.hpp"

struct sqlite3;

namespace httplib {
class Server;
}

namespace qfmts {

/// An error carrying the HTTP status the review endpoints answer with.
class ReviewError : public Error {
 public:
  ReviewError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct ReviewTask {
  std::string example_id;
  Split split = Split::test;
  std::string query;
  std::vector<Table> input_tables;
  Table execution_table;
  std::string candidate_summary;
  std::size_t existing_labels = 0;
};

void to_json(nlohmann::json& j, const ReviewTask& task);

struct Correction {
  std::int64_t seq = 0;
  std::string example_id;
  std::string annotator_id;
  std::string corrected_summary;
  std::string timestamp;
};

void to_json(nlohmann::json& j, const Correction& correction);

/// SQLite file holding labels (one row per example and annotator) and an
/// append-only corrections log. All access is serialized.
class ReviewStore {
 public:
  /// Creates the schema when missing. ":memory:" gives a private store.
  explicit ReviewStore(const std::filesystem::path& path);
  ~ReviewStore();
  ReviewStore(const ReviewStore&) = delete;
  ReviewStore& operator=(const ReviewStore&) = delete;

  /// Insert or overwrite by (example_id, annotator_id).
  void put_label(const HumanLabel& label);
  std::vector<HumanLabel> labels() const;
  std::vector<HumanLabel> labels_for(std::string_view example_id) const;
  /// Returns the sequence number of the stored correction.
  std::int64_t add_correction(const Correction& correction);
  std::vector<Correction> corrections() const;

 private:
  sqlite3* db_ = nullptr;
  mutable std::mutex mutex_;
};

struct ReviewConfig {
  std::uint64_t seed = 0;
  std::size_t pool_size = 100;
  /// Accepted bearer tokens; each token is an annotator id. Empty disables
  /// the check.
  std::vector<std::string> annotators;
};

enum class Aspect { faithfulness, fluency };
Aspect parse_aspect(std::string_view text);

class ReviewService {
 public:
  ReviewService(std::vector<Example> dataset, std::unique_ptr<ReviewStore> store, ReviewConfig config = {});

  /// Seeded sample of at most pool_size example ids of `split`.
  const std::vector<std::string>& pool(Split split) const;
  /// First pool example this annotator has not labeled, in pool order.
  std::optional<ReviewTask> next_task(std::string_view annotator_id, Split split) const;
  /// 404 for an unknown id.
  const Example& example(std::string_view id) const;
  /// 422 with the violations for an invalid label, 404 for an unknown
  /// example. A missing timestamp is filled in.
  void submit_label(HumanLabel label);
  /// 422 for a train-split example or an empty text, 404 for an unknown id.
  std::int64_t submit_correction(std::string_view example_id, std::string corrected_summary,
                                 std::string_view annotator_id);
  /// Fleiss' kappa over the pool items of `split` that carry the largest
  /// observed number of labels. 409 when fewer than two raters.
  AgreementReport agreement_report(Split split, Aspect aspect) const;
  /// Examples of `split` in dataset order, each summary replaced by its
  /// latest correction.
  std::vector<Example> export_split(Split split) const;

  bool auth_enabled() const noexcept;
  bool authorized(std::string_view bearer_token) const;
  std::vector<HumanLabel> labels_for(std::string_view example_id) const;

 private:
  std::vector<Example> dataset_;
  std::unique_ptr<ReviewStore> store_;
  ReviewConfig config_;
  std::vector<std::string> pools_[3];
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  /// When set, files under it are served at "/".
  std::optional<std::filesystem::path> static_dir;
};

/// HTTP+JSON front end:
///   GET  /tasks/next?annotator=&split=   ReviewTask, or 204 when exhausted
///   GET  /examples/{id}                  Example
///   GET  /labels?example_id=             HumanLabel list
///   POST /labels                         HumanLabel
///   POST /corrections                    {example_id, annotator_id, corrected_summary}
///   GET  /agreement?split=&aspect=       AgreementReport
///   GET  /export?split=                  dataset JSONL with corrections applied
/// Errors answer {"error": message} with 400, 401, 403, 404, 409 or 422.
class ReviewServer {
 public:
  ReviewServer(ReviewService& service, ServerOptions options);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds the socket; port 0 picks a free port. Returns the bound port.
  int bind();
  /// Serves until stop(); call bind() first.
  void listen();
  void stop();

 private:
  void install_routes();

  ReviewService& service_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace qfmts
