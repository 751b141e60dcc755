#include "test_support.hpp"

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <random>

#include "json.hpp"
#include "qfmts/dataset_builder.hpp"

namespace qfmts::testing {

std::filesystem::path fixture_path(const std::string& relative) {
  return std::filesystem::path(QFMTS_FIXTURE_DIR) / relative;
}

std::filesystem::path spider_mini_dir() { return QFMTS_SPIDER_MINI; }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

bool matches_golden(const std::string& name, const std::string& actual) {
  const auto path = fixture_path("golden/" + name);
  if (std::getenv("QFMTS_UPDATE_GOLDEN")) {
    write_file(path, actual);
    return true;
  }
  if (!std::filesystem::exists(path)) return false;
  return read_file(path) == actual;
}

Table parse_linearized(const std::string& text) {
  const std::string prefix = "<table_name>: ";
  if (text.rfind(prefix, 0) != 0) throw Error("missing table name prefix");
  auto col = text.find(" col: ");
  if (col == std::string::npos) throw Error("missing col marker");
  Table t;
  t.name = text.substr(prefix.size(), col - prefix.size());
  std::string rest = text.substr(col + 6);

  auto split_cells = [](const std::string& s) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto bar = s.find(" | ", start);
      cells.push_back(s.substr(start, bar - start));
      if (bar == std::string::npos) break;
      start = bar + 3;
    }
    return cells;
  };

  std::vector<std::string> segments;
  std::size_t row = 1;
  while (true) {
    const auto marker = " row " + std::to_string(row) + ": ";
    const auto pos = rest.find(marker);
    segments.push_back(rest.substr(0, pos));
    if (pos == std::string::npos) break;
    rest = rest.substr(pos + marker.size());
    ++row;
  }
  t.headers = split_cells(segments[0]);
  for (std::size_t i = 1; i < segments.size(); ++i) t.rows.push_back(split_cells(segments[i]));
  return t;
}

Table semester_table() { return Table{"result", {"semester_name", "semester_id"}, {{"summer 2010", "2"}}}; }

TempDir::TempDir() {
  std::random_device rd;
  for (int attempt = 0; attempt < 16; ++attempt) {
    auto candidate = std::filesystem::temp_directory_path() / ("qfmts-test-" + std::to_string(rd()));
    if (std::filesystem::create_directory(candidate)) {
      path_ = std::move(candidate);
      return;
    }
  }
  throw Error("cannot create temporary directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string prompt_query(const std::string& prompt_text) {
  const auto pos = prompt_text.rfind("Query: ");
  if (pos == std::string::npos) return {};
  const auto start = pos + 7;
  return prompt_text.substr(start, prompt_text.find('\n', start) - start);
}

namespace {

std::vector<std::string> facts_of(const nlohmann::json& entry) {
  return entry.at("facts").get<std::vector<std::string>>();
}

std::string join_facts(const std::vector<std::string>& facts) {
  std::string out;
  for (std::size_t i = 0; i < facts.size(); ++i) out += (i ? ", " : "") + facts[i];
  return out;
}

}  // namespace

MockPipeline run_mock_pipeline(int parallelism) {
  const auto responses = nlohmann::json::parse(read_file(fixture_path("e2e/mock_responses.json")));

  auto mock = std::make_unique<MockBackend>();
  mock->set_responder([responses](const PromptBundle& prompt) -> std::optional<std::string> {
    const auto query = prompt_query(prompt.text);
    if (!responses.contains(query)) return std::nullopt;
    const auto& entry = responses.at(query);
    if (prompt.template_name == "annotation") return entry.at("reference").get<std::string>();
    if (prompt.template_name == "reason_phase1") return "Facts: " + join_facts(facts_of(entry));
    if (prompt.template_name == "reason_phase2") return "Summary: " + entry.at("reason").get<std::string>();
    if (prompt.template_name == "direct") {
      if (entry.at("direct").is_null()) return std::nullopt;
      return "Facts: " + join_facts(facts_of(entry)) + "\nSummary: " + entry.at("direct").get<std::string>();
    }
    return std::nullopt;
  });
  GatewayOptions options;
  options.max_in_flight = parallelism;
  Gateway gateway(std::move(mock), options);

  BuildConfig config;
  config.seed = 7;
  config.max_in_flight = parallelism;
  auto parts = split(load_spider(spider_mini_dir()), config);

  MockPipeline run;
  for (auto* part : {&parts.train, &parts.validation, &parts.test}) {
    for (auto& ex : *part) run.dataset.push_back(std::move(ex));
  }
  const GenerationParams params;
  auto outcomes = annotate_all(run.dataset, gateway, config, params);
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].error) throw Error(*outcomes[i].error);
    run.dataset[i] = std::move(outcomes[i].example);
  }

  const auto demos = default_demonstrations();
  run.direct = summarize_examples(run.dataset, Strategy::direct, gateway, params, demos, parallelism);
  run.reason =
      summarize_examples(run.dataset, Strategy::reason_then_summarize, gateway, params, demos, parallelism);

  EvaluateOptions eval;
  eval.parallelism = parallelism;
  run.direct_report = evaluate_run(run.direct, run.dataset, eval);
  run.reason_report = evaluate_run(run.reason, run.dataset, eval);
  return run;
}

}  // namespace qfmts::testing
