#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qfmts/llm_gateway.hpp"
#include "qfmts/prompt.hpp"
#include "qfmts/table.hpp"

namespace qfmts {

/// Which Spider file an example came from.
enum class Origin { train, dev };

struct SourceExample {
  Example example;
  std::optional<Origin> origin;
};

/// A human-written annotation demonstration: query, linearized execution
/// table and summary.
struct AnnotationDemo {
  std::string query;
  std::string table;
  std::string summary;
};

void to_json(nlohmann::json& j, const AnnotationDemo& demo);
void from_json(const nlohmann::json& j, AnnotationDemo& demo);

/// The five built-in demonstrations (data/demos/annotation_demos.json).
std::vector<AnnotationDemo> default_annotation_demos();

struct BuildConfig {
  std::uint64_t seed = 0;
  double validation_fraction = 0.10;
  double single_table_target_fraction = 0.328;
  std::vector<AnnotationDemo> annotation_demos = default_annotation_demos();
  std::string annotator_model = "gpt-3.5-turbo-0613";
  int max_in_flight = 4;

  /// Throws qfmts::Error when a fraction is outside (0, 1), or when
  /// `for_annotation` and there are no demonstrations.
  void validate(bool for_annotation) const;
};

/// Permutation of 0..n-1 from a seeded mt19937_64 Fisher-Yates shuffle.
/// Identical on every platform for a given seed.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// Keeps every multi-table example and a seeded random subset of the
/// single-table ones: the largest K with K / (K + multi) <= target. Input
/// already at or below the target is returned unchanged. Relative order
/// is preserved.
std::vector<SourceExample> downsample_single_table(std::vector<SourceExample> examples,
                                                   const BuildConfig& config);
std::vector<Example> downsample_single_table(std::vector<Example> examples, const BuildConfig& config);

struct SplitResult {
  std::vector<Example> train;
  std::vector<Example> validation;
  std::vector<Example> test;
};

/// Dev-origin examples become test. Train-origin examples are shuffled with
/// the seed; round(validation_fraction * n) go to validation and the rest
/// to train. Each part keeps input order. Throws qfmts::Error when an
/// example has no origin.
SplitResult split(std::vector<SourceExample> examples, const BuildConfig& config);

/// Guideline, the configured demonstrations, then "Query:" and "Table:"
/// with the linearized execution table.
PromptBundle build_annotation_prompt(std::string_view query, const Table& execution_table,
                                     const BuildConfig& config);

/// Returns a copy of `example` whose summary is the trimmed completion.
/// Throws qfmts::Error("annotation failed for id=<id>: ...") on failure.
Example annotate(const Example& example, Gateway& gateway, const BuildConfig& config,
                 const GenerationParams& params);

struct AnnotationOutcome {
  Example example;
  std::optional<std::string> error;
};

/// Annotates with up to config.max_in_flight requests in flight. Output
/// order follows input order; failed examples keep their old summary.
std::vector<AnnotationOutcome> annotate_all(std::span<const Example> examples, Gateway& gateway,
                                            const BuildConfig& config,
                                            const GenerationParams& params);

/// Table indices referenced by a Spider "sql" object (table units anywhere
/// in the tree, including subqueries and set operations), mapped to names
/// in first-seen order without duplicates.
std::vector<std::string> tables_from_spider_sql(const nlohmann::json& sql,
                                                std::span<const std::string> table_names);

/// Fallback when no parsed "sql" object is present: identifiers following
/// FROM or JOIN that name a table of the database.
std::vector<std::string> tables_from_sql_text(std::string_view sql,
                                              std::span<const std::string> table_names);

struct SpiderLoadReport {
  std::size_t records = 0;
  std::size_t skipped = 0;
  std::vector<std::string> skip_reasons;
};

/// Reads a Spider distribution: tables.json, train_spider.json (plus
/// train_others.json when present), dev.json and
/// database/<db_id>/<db_id>.sqlite. Each record is executed to obtain its
/// execution table; records that fail to execute are skipped and reported.
std::vector<SourceExample> load_spider(const std::filesystem::path& spider_dir,
                                       SpiderLoadReport* report = nullptr);

/// load_spider, per-origin single-table down-sampling, then split. The
/// result lists train, validation and test in that order with empty
/// summaries.
std::vector<Example> build_dataset(const std::filesystem::path& spider_dir, const BuildConfig& config,
                                   SpiderLoadReport* report = nullptr);

}  // namespace qfmts
