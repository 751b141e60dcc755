#include "doctest.h"
#include "qfmts/report.hpp"
#include "test_support.hpp"

using namespace qfmts;

namespace {

std::vector<Example> tiny_dataset() {
  Example a;
  a.id = "a";
  a.query = testing::kSemesterQuery;
  a.input_tables = {Table{"Semesters", {"id"}, {{"1"}}}};
  a.execution_table = testing::semester_table();
  a.summary = "The semester with the most registrations is summer 2010, whose id is 2.";
  a.split = Split::test;

  Example b;
  b.id = "b";
  b.query = "Show names of teachers and the number of courses they teach.";
  b.input_tables = {Table{"Teacher", {"Name"}, {{"Anne Walker"}}}, Table{"Course", {"Course"}, {{"Math"}}}};
  b.execution_table = Table{"result", {"Name", "count(*)"}, {{"Anne Walker", "2"}}};
  b.summary = "Anne Walker teaches 2 courses.";
  b.split = Split::test;
  return {a, b};
}

Prediction pred(std::string id, std::string summary) {
  return Prediction{std::move(id), Strategy::direct, {}, std::move(summary), std::nullopt};
}

}  // namespace

TEST_CASE("gold predictions score as identity") {
  const auto ds = tiny_dataset();
  std::vector<Prediction> preds{pred("a", ds[0].summary), pred("b", ds[1].summary)};
  const auto r = evaluate_run(preds, ds, {});
  CHECK(r.corpus.n == 2);
  CHECK(r.corpus.bleu == doctest::Approx(100.0));
  CHECK(r.corpus.rouge_l == 1.0);
  CHECK(r.corpus.str_em == 1.0);
  CHECK(r.corpus.parent > 0.9);
  CHECK(r.single_table.n == 1);
  CHECK(r.multi_table.n == 1);
  CHECK(r.examples[0].n_input_tables == 1);
  CHECK(r.examples[1].n_input_tables == 2);
  CHECK_FALSE(r.corpus.bertscore);
}

TEST_CASE("failed predictions are scored as empty text and counted") {
  const auto ds = tiny_dataset();
  std::vector<Prediction> preds{pred("a", ds[0].summary), pred("b", "left over text")};
  preds[1].error = "backend unavailable";
  const auto r = evaluate_run(preds, ds, {});
  CHECK(r.corpus.failed == 1);
  CHECK(r.multi_table.failed == 1);
  CHECK(r.examples[1].failed);
  CHECK(r.examples[1].rouge_l == 0.0);
  CHECK(r.examples[1].str_em == 0.0);
  CHECK(r.examples[1].completeness == 0.0);
  CHECK(r.corpus.rouge_l == doctest::Approx(0.5));
}

TEST_CASE("corpus means recombine from the subsets") {
  const auto ds = tiny_dataset();
  std::vector<Prediction> preds{pred("a", "summer 2010 with id 2"), pred("b", "Anne Walker teaches Math.")};
  const auto r = evaluate_run(preds, ds, {});
  const double n1 = static_cast<double>(r.single_table.n);
  const double n2 = static_cast<double>(r.multi_table.n);
  auto recombined = [&](double s, double m) { return (n1 * s + n2 * m) / (n1 + n2); };
  CHECK(std::abs(r.corpus.rouge_l - recombined(r.single_table.rouge_l, r.multi_table.rouge_l)) < 1e-9);
  CHECK(std::abs(r.corpus.str_em - recombined(r.single_table.str_em, r.multi_table.str_em)) < 1e-9);
  CHECK(std::abs(r.corpus.parent - recombined(r.single_table.parent, r.multi_table.parent)) < 1e-9);
  CHECK(std::abs(r.corpus.completeness - recombined(r.single_table.completeness, r.multi_table.completeness)) <
        1e-9);
}

TEST_CASE("unknown and duplicated ids are listed") {
  const auto ds = tiny_dataset();
  std::vector<Prediction> unknown{pred("a", "x"), pred("zz", "x"), pred("yy", "x")};
  CHECK_THROWS_WITH_AS(evaluate_run(unknown, ds, {}), "predictions reference unknown ids: zz, yy", Error);
  std::vector<Prediction> dup{pred("a", "x"), pred("a", "y")};
  CHECK_THROWS_WITH_AS(evaluate_run(dup, ds, {}), "duplicate prediction ids: a", Error);
}

TEST_CASE("bertscore values are carried through") {
  const auto ds = tiny_dataset();
  std::vector<Prediction> preds{pred("a", "x"), pred("b", "y")};
  EvaluateOptions o;
  o.bertscore = std::map<std::string, double>{{"a", 0.8}};
  CHECK_THROWS_WITH_AS(evaluate_run(preds, ds, o), "BERTScore missing for ids: b", Error);
  (*o.bertscore)["b"] = 0.6;
  const auto r = evaluate_run(preds, ds, o);
  REQUIRE(r.corpus.bertscore);
  CHECK(*r.corpus.bertscore == doctest::Approx(0.7));
  CHECK(render_report(r).find("BERTScore") != std::string::npos);
}

TEST_CASE("scoring is independent of parallelism") {
  const auto run1 = testing::run_mock_pipeline(1);
  const auto run8 = testing::run_mock_pipeline(8);
  CHECK(run1.direct_report == run8.direct_report);
  CHECK(run1.reason_report == run8.reason_report);
  CHECK(report_to_json_text(run1.direct_report) == report_to_json_text(run8.direct_report));
}

TEST_CASE("empty report renders the header only") {
  const auto r = evaluate_run({}, tiny_dataset(), {});
  CHECK(render_report(r) == "Subset  N  SacreBLEU  ROUGE-L  STR-EM  PARENT  Completeness\n");
}

TEST_CASE("rendered table") {
  const auto ds = tiny_dataset();
  std::vector<Prediction> preds{pred("a", ds[0].summary), pred("b", ds[1].summary)};
  const auto text = render_report(evaluate_run(preds, ds, {}));
  CHECK(text.starts_with("Subset"));
  CHECK(text.find("\nall           2     100.00   100.00  100.00") != std::string::npos);
  CHECK(text.find("\nsingle-table  1") != std::string::npos);
  CHECK(text.find("\nmulti-table   1") != std::string::npos);
}

TEST_CASE("report json round-trip") {
  const auto ds = tiny_dataset();
  std::vector<Prediction> preds{pred("a", "summer 2010"), pred("b", "Anne Walker")};
  EvaluateOptions o;
  o.bertscore = std::map<std::string, double>{{"a", 0.5}, {"b", 0.25}};
  const auto r = evaluate_run(preds, ds, o);
  const auto j = nlohmann::json::parse(report_to_json_text(r));
  CHECK(j.contains("corpus"));
  CHECK(j.at("breakdown").contains("single_table"));
  CHECK(j.at("examples").size() == 2);
  CHECK(j.get<ScoreReport>() == r);
}
