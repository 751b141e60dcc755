#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "qfmts/dataset_builder.hpp"
#include "qfmts/linearizer.hpp"
#include "test_support.hpp"

using namespace qfmts;

namespace {

SourceExample source(std::string id, std::size_t n_tables, std::optional<Origin> origin) {
  SourceExample s;
  s.example.id = std::move(id);
  s.example.query = "q " + s.example.id;
  for (std::size_t i = 0; i < n_tables; ++i) s.example.input_tables.push_back(Table{"t", {"c"}, {}});
  s.example.execution_table = Table{"result", {"c"}, {}};
  s.origin = origin;
  return s;
}

std::vector<SourceExample> mixed(std::size_t single, std::size_t multi, Origin origin = Origin::train) {
  std::vector<SourceExample> out;
  for (std::size_t i = 0; i < single + multi; ++i) {
    out.push_back(source("e" + std::to_string(i), i % (single + multi) < single ? 1 : 2, origin));
  }
  return out;
}

double single_fraction(const std::vector<SourceExample>& xs) {
  const auto n = std::count_if(xs.begin(), xs.end(),
                               [](const SourceExample& s) { return s.example.input_tables.size() == 1; });
  return static_cast<double>(n) / static_cast<double>(xs.size());
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("seeded permutation is a deterministic permutation") {
  for (std::size_t n : {0u, 1u, 2u, 17u, 1000u}) {
    auto p = seeded_permutation(n, 42);
    CHECK(p == seeded_permutation(n, 42));
    std::sort(p.begin(), p.end());
    std::vector<std::size_t> iota(n);
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(p == iota);
  }
  CHECK(seeded_permutation(50, 1) != seeded_permutation(50, 2));
}

// Expected values from tests/oracles/permutation_oracle.py.
TEST_CASE("seeded permutation matches the reference generator") {
  CHECK(seeded_permutation(10, 0) == std::vector<std::size_t>{7, 2, 0, 8, 3, 9, 6, 1, 5, 4});
  CHECK(seeded_permutation(10, 7) == std::vector<std::size_t>{0, 7, 4, 9, 3, 1, 2, 8, 6, 5});
  CHECK(seeded_permutation(25, 123456789) == std::vector<std::size_t>{23, 24, 3, 13, 20, 0, 2, 21, 11, 1, 7, 4, 15,
                                                                      6, 16, 22, 12, 8, 19, 9, 17, 14, 18, 5, 10});
}

TEST_CASE("down-sampling hits the single-table target") {
  BuildConfig cfg;
  const auto out = downsample_single_table(mixed(70, 30), cfg);
  const double f = single_fraction(out);
  CHECK(f <= 0.328);
  CHECK(f >= 0.318);
  CHECK(out.size() == 44);
  // Relative order kept.
  for (std::size_t i = 1; i < out.size(); ++i) {
    CHECK(std::stoi(out[i - 1].example.id.substr(1)) < std::stoi(out[i].example.id.substr(1)));
  }
  CHECK(downsample_single_table(mixed(70, 30), cfg).size() == out.size());
}

TEST_CASE("down-sampling leaves data already below the target alone") {
  BuildConfig cfg;
  const auto in = mixed(10, 90);
  const auto out = downsample_single_table(in, cfg);
  REQUIRE(out.size() == in.size());
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(out[i].example.id == in[i].example.id);
}

TEST_CASE("down-sampling property: every multi-table example survives") {
  BuildConfig cfg;
  for (std::size_t single : {0u, 1u, 5u, 50u, 200u}) {
    for (std::size_t multi : {1u, 3u, 40u}) {
      cfg.seed = single * 31 + multi;
      const auto out = downsample_single_table(mixed(single, multi), cfg);
      const auto kept_multi = std::count_if(
          out.begin(), out.end(), [](const SourceExample& s) { return s.example.input_tables.size() > 1; });
      CHECK(static_cast<std::size_t>(kept_multi) == multi);
      CHECK(single_fraction(out) <= std::max(0.328, static_cast<double>(single) / (single + multi)) + 1e-12);
    }
  }
}

TEST_CASE("split sizes and provenance") {
  std::vector<SourceExample> xs;
  for (int i = 0; i < 100; ++i) xs.push_back(source("tr" + std::to_string(i), 2, Origin::train));
  for (int i = 0; i < 10; ++i) xs.push_back(source("dv" + std::to_string(i), 2, Origin::dev));
  BuildConfig cfg;
  cfg.seed = 3;
  const auto parts = split(xs, cfg);
  CHECK(parts.train.size() == 90);
  CHECK(parts.validation.size() == 10);
  CHECK(parts.test.size() == 10);
  for (const auto& e : parts.test) CHECK(e.id.starts_with("dv"));
  for (const auto& e : parts.train) CHECK(e.split == Split::train);
  for (const auto& e : parts.validation) {
    CHECK(e.split == Split::validation);
    CHECK(e.id.starts_with("tr"));
  }
  const auto again = split(xs, cfg);
  CHECK(again.validation == parts.validation);
  cfg.seed = 4;
  CHECK(split(xs, cfg).validation != parts.validation);

  std::set<std::string> ids;
  for (const auto* part : {&parts.train, &parts.validation, &parts.test}) {
    for (const auto& e : *part) ids.insert(e.id);
  }
  CHECK(ids.size() == 110);
}

TEST_CASE("split rejects untagged examples") {
  std::vector<SourceExample> xs{source("x", 1, std::nullopt)};
  CHECK_THROWS_WITH_AS(split(xs, BuildConfig{}), "example x has no origin tag", Error);
}

TEST_CASE("config validation") {
  BuildConfig cfg;
  CHECK_NOTHROW(cfg.validate(true));
  cfg.validation_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(false), Error);
  cfg = BuildConfig{};
  cfg.annotation_demos.clear();
  CHECK_NOTHROW(cfg.validate(false));
  CHECK_THROWS_AS(cfg.validate(true), Error);
}

TEST_CASE("annotation prompt") {
  BuildConfig cfg;
  REQUIRE(cfg.annotation_demos.size() == 5);
  const auto table = testing::semester_table();
  const auto p = build_annotation_prompt(testing::kSemesterQuery, table, cfg);
  CHECK(p.template_name == "annotation");
  CHECK(p.demonstration_count == 5);
  CHECK(count(p.text, "\nSummary: ") == 5);
  CHECK(count(p.text, "Query: ") == 6);
  CHECK(p.text.ends_with("Query: " + std::string(testing::kSemesterQuery) + "\nTable: " +
                         linearize_table(table).text));
  CHECK(testing::matches_golden("annotation_prompt.txt", p.text));

  const Table no_columns{"result", {}, {}};
  CHECK_THROWS_AS(build_annotation_prompt("q", no_columns, cfg), Error);
  cfg.annotation_demos.clear();
  CHECK_THROWS_AS(build_annotation_prompt("q", table, cfg), Error);
}

TEST_CASE("annotate sets the trimmed completion") {
  auto mock = std::make_unique<MockBackend>();
  mock->set_responder([](const PromptBundle& p) -> std::optional<std::string> {
    if (testing::prompt_query(p.text) == "empty") return "   ";
    if (testing::prompt_query(p.text) == "missing") return std::nullopt;
    return "  There is one semester.\n";
  });
  GatewayOptions o;
  o.retry.backoff = {std::chrono::milliseconds(1)};
  Gateway gw(std::move(mock), o);
  BuildConfig cfg;
  Example ex;
  ex.id = "train_00003";
  ex.query = "How many semesters are there?";
  ex.execution_table = Table{"result", {"count(*)"}, {{"4"}}};
  CHECK(annotate(ex, gw, cfg, {}).summary == "There is one semester.");

  ex.query = "empty";
  CHECK_THROWS_WITH_AS(annotate(ex, gw, cfg, {}), doctest::Contains("annotation failed for id=train_00003"),
                       Error);
  ex.query = "missing";
  std::vector<Example> batch{ex};
  const auto outcomes = annotate_all(batch, gw, cfg, {});
  REQUIRE(outcomes.size() == 1);
  REQUIRE(outcomes[0].error);
  CHECK(outcomes[0].error->starts_with("annotation failed for id=train_00003: "));
}

TEST_CASE("table references from parsed spider sql") {
  const std::vector<std::string> names{"people", "poker_player", "unused"};
  const auto sql = nlohmann::json::parse(R"({
    "select": [false, [[0, [0, [0, 3, false], null, null]]]],
    "from": {"table_units": [["table_unit", 1]], "conds": []},
    "where": [[false, 8, [0, [0, [0, 2, false], null], null],
               {"from": {"table_units": [["table_unit", 0]], "conds": []}, "where": [],
                "intersect": null, "union": null, "except": null}, null]],
    "intersect": null,
    "union": {"from": {"table_units": [["table_unit", 1], ["table_unit", 0]], "conds": []}},
    "except": null
  })");
  CHECK(tables_from_spider_sql(sql, names) == std::vector<std::string>{"poker_player", "people"});
  const auto bad = nlohmann::json::parse(R"({"from": {"table_units": [["table_unit", 9]]}})");
  CHECK_THROWS_AS(tables_from_spider_sql(bad, names), Error);
}

TEST_CASE("table references from sql text") {
  const std::vector<std::string> names{"Course", "Teacher", "Course_Arrange"};
  CHECK(tables_from_sql_text("SELECT T3.Name FROM course_arrange AS T1 JOIN course AS T2 ON x JOIN teacher AS T3",
                             names) == std::vector<std::string>{"Course_Arrange", "Course", "Teacher"});
  CHECK(tables_from_sql_text("select name from teacher order by age", names) ==
        std::vector<std::string>{"Teacher"});
  CHECK(tables_from_sql_text("select 1", names).empty());
}

TEST_CASE("loading the fixture spider layout") {
  SpiderLoadReport report;
  const auto xs = load_spider(testing::spider_mini_dir(), &report);
  CHECK(report.records == 11);
  CHECK(report.skipped == 1);
  REQUIRE(report.skip_reasons.size() == 1);
  CHECK(report.skip_reasons[0].starts_with("train_00007: "));
  REQUIRE(xs.size() == 10);
  CHECK(xs.front().example.id == "train_00000");
  CHECK(xs.back().example.id == "dev_00002");
  CHECK(std::count_if(xs.begin(), xs.end(), [](const SourceExample& s) { return s.origin == Origin::dev; }) ==
        3);
  for (const auto& s : xs) {
    CAPTURE(s.example.id);
    CHECK(validate_example(s.example).empty());
    CHECK(s.example.summary.empty());
    for (const auto& t : s.example.input_tables) CHECK(t.row_count() > 0);
  }
  const auto semester = std::find_if(xs.begin(), xs.end(), [](const SourceExample& s) {
    return s.example.query == testing::kSemesterQuery;
  });
  REQUIRE(semester != xs.end());
  CHECK(semester->example.execution_table.rows == std::vector<std::vector<std::string>>{{"summer 2010", "2"}});
  CHECK(semester->example.input_tables.size() == 2);
  CHECK_THROWS_AS(load_spider(testing::fixture_path("no-such-dir")), Error);
}

TEST_CASE("build_dataset down-samples per origin and splits") {
  BuildConfig cfg;
  cfg.seed = 7;
  const auto ds = build_dataset(testing::spider_mini_dir(), cfg);
  CHECK(ds.size() == 9);
  CHECK(std::none_of(ds.begin(), ds.end(), [](const Example& e) { return e.id == "dev_00000"; }));
  CHECK(std::is_sorted(ds.begin(), ds.end(),
                       [](const Example& a, const Example& b) { return a.split < b.split; }));
  CHECK(build_dataset(testing::spider_mini_dir(), cfg) == ds);
}
