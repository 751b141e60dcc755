#include <algorithm>
#include <random>

#include "doctest.h"
#include "qfmts/error.hpp"
#include "qfmts/quality.hpp"
#include "test_support.hpp"

using namespace qfmts;

TEST_CASE("fleiss kappa on hand-computed matrices") {
  // Per-item agreement 1, 1/3, 1, 1/3; both categories at 0.5.
  const auto binary = fleiss_kappa({{0, 0, 0}, {0, 0, 1}, {1, 1, 1}, {0, 1, 1}});
  CHECK(binary.mean_observed_agreement == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(binary.expected_agreement == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(binary.kappa - 1.0 / 3.0) < 1e-9);
  CHECK(binary.n_items == 4);
  CHECK(binary.n_raters == 3);

  // Observed 0.6, expected 0.4^2 + 0.3^2 + 0.3^2 = 0.34.
  const auto graded = fleiss_kappa({{1, 1}, {2, 2}, {1, 2}, {3, 3}, {1, 3}});
  CHECK(std::abs(graded.kappa - 13.0 / 33.0) < 1e-9);
}

TEST_CASE("fleiss kappa edge cases") {
  CHECK(fleiss_kappa({{1, 1, 1}, {1, 1, 1}}).kappa == 1.0);
  CHECK(fleiss_kappa({{0, 1}, {1, 0}}).kappa < 0.0);
  CHECK_THROWS_AS(fleiss_kappa({}), Error);
  CHECK_THROWS_AS(fleiss_kappa({{1}, {0}}), Error);
  CHECK_THROWS_WITH_AS(fleiss_kappa({{1, 0}, {1, 1, 0}}), "fleiss_kappa: item 2 has 3 ratings, expected 2",
                       Error);
}

TEST_CASE("fleiss kappa is invariant under item and rater permutations") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<int>> m(20, std::vector<int>(4));
    for (auto& row : m) {
      for (auto& v : row) v = 1 + static_cast<int>(rng() % 5);
    }
    const double k = fleiss_kappa(m).kappa;
    auto shuffled = m;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (auto& row : shuffled) std::shuffle(row.begin(), row.end(), rng);
    CHECK(fleiss_kappa(shuffled).kappa == doctest::Approx(k).epsilon(1e-12));
    CHECK(k <= 1.0);
  }
}

TEST_CASE("independent random raters agree at chance") {
  std::mt19937_64 rng(2024);
  std::vector<std::vector<int>> m(1000, std::vector<int>(3));
  for (auto& row : m) {
    for (auto& v : row) v = static_cast<int>(rng() % 2);
  }
  CHECK(std::abs(fleiss_kappa(m).kappa) < 0.1);
}

TEST_CASE("completeness") {
  const auto table = testing::semester_table();
  const auto reference = build_reference_sequence(testing::kSemesterQuery, table);
  CHECK(reference == std::string(testing::kSemesterQuery) + ", summer 2010, 2");
  CHECK(completeness(reference, testing::kSemesterQuery, table) == 1.0);
  CHECK(completeness("", testing::kSemesterQuery, table) == 0.0);
  const Table empty{"result", {"a"}, {}};
  CHECK(build_reference_sequence("q", empty) == "q");
  const double partial = completeness("the semester summer 2010", testing::kSemesterQuery, table);
  CHECK(partial > 0.0);
  CHECK(partial < 1.0);
}

TEST_CASE("label validation") {
  HumanLabel ok{"e", "a1", 1, 5, std::nullopt, "2026-01-01T00:00:00Z"};
  CHECK(validate_label(ok).empty());
  HumanLabel bad{"", "", 2, 0, std::nullopt, ""};
  const auto v = validate_label(bad);
  CHECK(v.size() == 4);
  CHECK(std::find(v.begin(), v.end(), "faithfulness must be 0 or 1, got 2") != v.end());
  CHECK(std::find(v.begin(), v.end(), "fluency must be in 1..5, got 0") != v.end());
}

TEST_CASE("labels round-trip and aggregate") {
  testing::TempDir dir;
  std::vector<HumanLabel> labels{{"b", "a1", 1, 4, std::nullopt, "t"},
                                 {"a", "a1", 0, 2, "fixed", "t"},
                                 {"a", "a2", 1, 4, std::nullopt, "t"}};
  std::string text;
  for (const auto& l : labels) text += nlohmann::json(l).dump() + "\n";
  testing::write_file(dir / "labels.jsonl", text);
  const auto back = read_labels(dir / "labels.jsonl");
  CHECK(back == labels);

  const auto agg = aggregate_labels(labels);
  REQUIRE(agg.per_example.size() == 2);
  CHECK(agg.per_example[0].example_id == "a");
  CHECK(agg.per_example[0].n_labels == 2);
  CHECK(agg.per_example[0].faithfulness == 0.5);
  CHECK(agg.per_example[0].fluency == 3.0);
  CHECK(agg.faithfulness == 0.75);
  CHECK(agg.fluency == 3.5);
}

TEST_CASE("agreement report json") {
  const auto r = fleiss_kappa({{0, 0}, {1, 1}, {0, 1}});
  const AgreementReport back = nlohmann::json(r).get<AgreementReport>();
  CHECK(back.kappa == r.kappa);
  CHECK(back.n_items == 3);
}
