// qfmts: dataset construction, summarization, scoring and review service.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qfmts/controller.hpp"
#include "qfmts/dataset_builder.hpp"
#include "qfmts/quality.hpp"
#include "qfmts/report.hpp"
#include "qfmts/review_service.hpp"

namespace {

// Accepts a JSON object (nested objects address subcommands) or TOML.
class JsonOrTomlConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool defaults, bool write_description,
                        std::string prefix) const override {
    return toml_.to_config(app, defaults, write_description, std::move(prefix));
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    const std::string text{std::istreambuf_iterator<char>(input), std::istreambuf_iterator<char>()};
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos || text[first] != '{') {
      std::istringstream in(text);
      return toml_.from_config(in);
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConfigError(std::string("malformed JSON config: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  }

  static void flatten(const nlohmann::json& obj, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (it->is_object()) {
        auto next = parents;
        next.push_back(it.key());
        flatten(*it, next, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it->is_array()) {
        for (const auto& v : *it) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(*it));
      }
      items.push_back(std::move(item));
    }
  }

  CLI::ConfigTOML toml_;
};

struct GatewayFlags {
  std::string endpoint = "env";
  int max_in_flight = 4;
  std::string audit_log;
  qfmts::GenerationParams params;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--endpoint", endpoint, "mock:<responses.jsonl>, env, or a base URL")
        ->capture_default_str();
    cmd->add_option("--max-in-flight", max_in_flight, "Concurrent requests")->capture_default_str();
    cmd->add_option("--audit-log", audit_log, "Append one JSON line per request to this file");
    cmd->add_option("--model", params.model_name)->capture_default_str();
    cmd->add_option("--temperature", params.temperature)->capture_default_str();
    cmd->add_option("--top-p", params.top_p)->capture_default_str();
    cmd->add_option("--max-tokens", params.max_output_tokens)->capture_default_str();
  }

  qfmts::Gateway make_gateway() const {
    qfmts::GatewayOptions options;
    options.max_in_flight = max_in_flight;
    if (!audit_log.empty()) options.audit_log = audit_log;
    return qfmts::Gateway(qfmts::make_backend(endpoint), options);
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw qfmts::Error("cannot write " + path);
  out << text;
}

// JSON Lines of {"id": ..., "bertscore": ...}.
std::map<std::string, double> read_score_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw qfmts::Error("cannot open " + path);
  std::map<std::string, double> scores;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line);
    scores[j.at("id").get<std::string>()] = j.at("bertscore").get<double>();
  }
  return scores;
}

void configure_logging(const std::string& level) {
  auto logger = spdlog::stderr_color_mt("qfmts");
  spdlog::set_default_logger(logger);
  const auto lvl = spdlog::level::from_str(level);
  if (lvl == spdlog::level::off && level != "off") throw qfmts::Error("unknown log level " + level);
  spdlog::set_level(lvl);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-focused multi-table summarization workbench"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonOrTomlConfig>());
  app.set_config("--config", "", "TOML or JSON file supplying option values");

  std::uint64_t seed = 0;
  std::string log_level = "info";
  app.add_option("--seed", seed, "Seed for sampling, splitting and review pools")->capture_default_str();
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  // build-dataset
  auto* build = app.add_subcommand("build-dataset", "Rebuild the dataset from a Spider distribution");
  std::string spider_dir;
  std::string build_out;
  std::string stats_out;
  double validation_fraction = 0.10;
  double single_target = 0.328;
  build->add_option("--spider-dir", spider_dir)->required()->check(CLI::ExistingDirectory);
  build->add_option("--out", build_out)->required();
  build->add_option("--stats-out", stats_out, "Write dataset statistics as JSON");
  build->add_option("--validation-fraction", validation_fraction)->capture_default_str();
  build->add_option("--single-table-target", single_target)->capture_default_str();

  // annotate
  auto* annotate = app.add_subcommand("annotate", "Fill summaries with the LLM annotator");
  std::string annotate_in;
  std::string annotate_out;
  std::string annotation_demos;
  GatewayFlags annotate_gw;
  annotate->add_option("--in", annotate_in)->required()->check(CLI::ExistingFile);
  annotate->add_option("--out", annotate_out)->required();
  annotate->add_option("--demos", annotation_demos, "JSON list of {query, table, summary}");
  annotate_gw.add_to(annotate);

  // summarize
  auto* summarize = app.add_subcommand("summarize", "Generate summaries with a prompting strategy");
  std::string strategy = "direct";
  std::string sum_dataset;
  std::string sum_split = "test";
  std::string sum_out;
  std::string sum_demos;
  GatewayFlags summarize_gw;
  summarize->add_option("--strategy", strategy)->check(CLI::IsMember({"direct", "reason"}))->capture_default_str();
  summarize->add_option("--dataset", sum_dataset)->required()->check(CLI::ExistingFile);
  summarize->add_option("--split", sum_split)->capture_default_str();
  summarize->add_option("--out", sum_out)->required();
  summarize->add_option("--demos", sum_demos, "JSON list of {query, linearized_tables, facts, summary}");
  summarize_gw.add_to(summarize);

  // score
  auto* score = app.add_subcommand("score", "Score predictions against the dataset");
  std::string pred_path;
  std::string score_dataset;
  std::string score_out;
  std::string score_text;
  std::string bertscore_path;
  double parent_lambda = qfmts::metrics::kDefaultParentLambda;
  int score_threads = 4;
  score->add_option("--pred", pred_path)->required()->check(CLI::ExistingFile);
  score->add_option("--dataset", score_dataset)->required()->check(CLI::ExistingFile);
  score->add_option("--out", score_out, "ScoreReport JSON");
  score->add_option("--text-out", score_text, "Rendered table (default: stdout)");
  score->add_option("--bertscore", bertscore_path, "JSONL sidecar of {id, bertscore}");
  score->add_option("--parent-lambda", parent_lambda)->capture_default_str();
  score->add_option("--threads", score_threads)->capture_default_str();

  // verify
  auto* verify = app.add_subcommand("verify", "Completeness of the summaries of an annotated corpus");
  std::string verify_dataset;
  std::string verify_split;
  std::string verify_out;
  verify->add_option("--dataset", verify_dataset)->required()->check(CLI::ExistingFile);
  verify->add_option("--split", verify_split, "Restrict to one split");
  verify->add_option("--out", verify_out, "Per-example completeness as JSON");

  // serve
  auto* serve = app.add_subcommand("serve", "Start the review service");
  std::string serve_dataset;
  std::string store_path;
  std::string static_dir;
  qfmts::ServerOptions server_options;
  qfmts::ReviewConfig review_config;
  serve->add_option("--dataset", serve_dataset)->required()->check(CLI::ExistingFile);
  serve->add_option("--store", store_path, "SQLite store (default: <dataset>.review.sqlite)");
  serve->add_option("--host", server_options.host)->capture_default_str();
  serve->add_option("--port", server_options.port)->capture_default_str();
  serve->add_option("--static-dir", static_dir, "Serve a built review UI from this directory");
  serve->add_option("--pool-size", review_config.pool_size)->capture_default_str();
  serve->add_option("--annotator", review_config.annotators, "Accepted annotator bearer token (repeatable)");

  // stats
  auto* stats = app.add_subcommand("stats", "Dataset statistics");
  std::string stats_dataset;
  stats->add_option("--dataset", stats_dataset)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    configure_logging(log_level);

    if (*build) {
      qfmts::BuildConfig config;
      config.seed = seed;
      config.validation_fraction = validation_fraction;
      config.single_table_target_fraction = single_target;
      qfmts::SpiderLoadReport load_report;
      const auto dataset = qfmts::build_dataset(spider_dir, config, &load_report);
      qfmts::write_dataset(build_out, dataset);
      const auto s = qfmts::compute_stats(dataset);
      spdlog::info("wrote {} examples ({} train, {} validation, {} test)", s.total, s.train, s.validation,
                   s.test);
      if (!stats_out.empty()) write_text(stats_out, nlohmann::json(s).dump(2) + "\n");
      return 0;
    }

    if (*annotate) {
      qfmts::BuildConfig config;
      config.seed = seed;
      config.max_in_flight = annotate_gw.max_in_flight;
      config.annotator_model = annotate_gw.params.model_name;
      if (!annotation_demos.empty()) {
        std::ifstream in(annotation_demos);
        if (!in) throw qfmts::Error("cannot open " + annotation_demos);
        config.annotation_demos = nlohmann::json::parse(in).get<std::vector<qfmts::AnnotationDemo>>();
      }
      const auto dataset = qfmts::read_dataset(annotate_in);
      auto gateway = annotate_gw.make_gateway();
      const auto outcomes = qfmts::annotate_all(dataset, gateway, config, annotate_gw.params);
      std::vector<qfmts::Example> annotated;
      std::size_t failures = 0;
      for (const auto& o : outcomes) {
        annotated.push_back(o.example);
        if (o.error) ++failures;
      }
      qfmts::write_dataset(annotate_out, annotated);
      spdlog::info("annotated {} of {} examples", annotated.size() - failures, annotated.size());
      return failures == 0 ? 0 : 1;
    }

    if (*summarize) {
      const auto split = qfmts::parse_split(sum_split);
      std::vector<qfmts::Example> selected;
      for (auto& ex : qfmts::read_dataset(sum_dataset)) {
        if (ex.split == split) selected.push_back(std::move(ex));
      }
      const auto demos = sum_demos.empty() ? qfmts::default_demonstrations()
                                           : qfmts::load_demonstrations(sum_demos);
      auto gateway = summarize_gw.make_gateway();
      const auto predictions =
          qfmts::summarize_examples(selected, qfmts::parse_strategy(strategy), gateway, summarize_gw.params,
                                    demos, summarize_gw.max_in_flight);
      qfmts::write_predictions(sum_out, predictions);
      std::size_t failures = 0;
      for (const auto& p : predictions) failures += p.failed() ? 1 : 0;
      spdlog::info("wrote {} predictions, {} failed", predictions.size(), failures);
      return 0;
    }

    if (*score) {
      qfmts::EvaluateOptions options;
      options.parent_lambda = parent_lambda;
      options.parallelism = score_threads;
      if (!bertscore_path.empty()) options.bertscore = read_score_map(bertscore_path);
      const auto report = qfmts::evaluate_run(qfmts::read_predictions(pred_path),
                                              qfmts::read_dataset(score_dataset), options);
      if (!score_out.empty()) write_text(score_out, qfmts::report_to_json_text(report));
      write_text(score_text, qfmts::render_report(report));
      return 0;
    }

    if (*verify) {
      const auto dataset = qfmts::read_dataset(verify_dataset);
      std::optional<qfmts::Split> only;
      if (!verify_split.empty()) only = qfmts::parse_split(verify_split);
      nlohmann::json per_example = nlohmann::json::object();
      double total = 0.0;
      std::size_t n = 0;
      std::size_t missing = 0;
      for (const auto& ex : dataset) {
        if (only && ex.split != *only) continue;
        if (ex.summary.empty()) ++missing;
        const double c = qfmts::completeness(ex.summary, ex.query, ex.execution_table);
        per_example[ex.id] = c;
        total += c;
        ++n;
      }
      if (n == 0) throw qfmts::Error("no examples to verify");
      const double mean = total / static_cast<double>(n);
      std::cout << "examples: " << n << "\nmissing summaries: " << missing << "\nmean completeness: " << mean
                << "\n";
      if (!verify_out.empty()) {
        write_text(verify_out,
                   nlohmann::json{{"n", n}, {"missing", missing}, {"mean_completeness", mean},
                                  {"examples", per_example}}
                           .dump(2) +
                       "\n");
      }
      return 0;
    }

    if (*serve) {
      if (store_path.empty()) store_path = serve_dataset + ".review.sqlite";
      if (!static_dir.empty()) server_options.static_dir = static_dir;
      review_config.seed = seed;
      qfmts::ReviewService service(qfmts::read_dataset(serve_dataset),
                                   std::make_unique<qfmts::ReviewStore>(store_path), review_config);
      qfmts::ReviewServer server(service, server_options);
      const int port = server.bind();
      std::cout << "listening on http://" << server_options.host << ":" << port << std::endl;
      server.listen();
      return 0;
    }

    if (*stats) {
      const auto s = qfmts::compute_stats(qfmts::read_dataset(stats_dataset));
      std::cout << nlohmann::json(s).dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
