#include "qfmts/dataset_builder.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <regex>
#include <thread>

#include "qfmts/linearizer.hpp"
#include "qfmts/sql_executor.hpp"

namespace qfmts {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  return s.substr(first, s.find_last_not_of(ws) - first + 1);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Uniform integer in [0, bound] by rejection; std::uniform_int_distribution
// is implementation-defined and would make shuffles platform dependent.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == 0) return 0;
  const std::uint64_t range = bound + 1;
  if (range == 0) return rng();
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % range;
}

std::size_t single_table_quota(std::size_t singles, std::size_t multis, double target) {
  auto fraction = [&](std::size_t k) {
    return k + multis == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(k + multis);
  };
  if (fraction(singles) <= target) return singles;
  auto k = static_cast<std::size_t>(std::floor(target * static_cast<double>(multis) / (1.0 - target)));
  k = std::min(k, singles);
  while (k > 0 && fraction(k) > target) --k;
  while (k < singles && fraction(k + 1) <= target) ++k;
  return k;
}

template <typename T, typename IsSingle>
std::vector<T> downsample(std::vector<T> items, const BuildConfig& config, IsSingle is_single) {
  std::vector<std::size_t> singles;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (is_single(items[i])) singles.push_back(i);
  }
  const auto keep = single_table_quota(singles.size(), items.size() - singles.size(),
                                       config.single_table_target_fraction);
  if (keep == singles.size()) return items;

  std::vector<bool> drop(items.size(), false);
  const auto perm = seeded_permutation(singles.size(), config.seed);
  for (std::size_t j = keep; j < perm.size(); ++j) drop[singles[perm[j]]] = true;

  std::vector<T> out;
  out.reserve(items.size() - (singles.size() - keep));
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!drop[i]) out.push_back(std::move(items[i]));
  }
  return out;
}

std::string join_demo_blocks(std::span<const AnnotationDemo> demos) {
  std::string out;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += "Query: " + demos[i].query + "\nTable: " + demos[i].table + "\nSummary: " + demos[i].summary;
  }
  return out;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void collect_table_units(const nlohmann::json& node, std::vector<std::int64_t>& out) {
  if (node.is_array()) {
    if (node.size() == 2 && node[0].is_string() && node[0].get<std::string>() == "table_unit" &&
        node[1].is_number_integer()) {
      const auto idx = node[1].get<std::int64_t>();
      if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
      return;
    }
    for (const auto& child : node) collect_table_units(child, out);
  } else if (node.is_object()) {
    // "from" first so that the outer query's tables come first.
    if (auto it = node.find("from"); it != node.end()) collect_table_units(*it, out);
    for (auto it = node.begin(); it != node.end(); ++it) {
      if (it.key() != "from") collect_table_units(it.value(), out);
    }
  }
}

struct SpiderSchema {
  std::vector<std::string> table_names;
};

}  // namespace

void to_json(nlohmann::json& j, const AnnotationDemo& demo) {
  j = nlohmann::json{{"query", demo.query}, {"table", demo.table}, {"summary", demo.summary}};
}

void from_json(const nlohmann::json& j, AnnotationDemo& demo) {
  j.at("query").get_to(demo.query);
  j.at("table").get_to(demo.table);
  j.at("summary").get_to(demo.summary);
}

std::vector<AnnotationDemo> default_annotation_demos() {
  return nlohmann::json::parse(builtin_resource("data/demos/annotation_demos.json"))
      .get<std::vector<AnnotationDemo>>();
}

void BuildConfig::validate(bool for_annotation) const {
  auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!open_unit(validation_fraction)) throw Error("validation_fraction must lie in (0, 1)");
  if (!open_unit(single_table_target_fraction)) {
    throw Error("single_table_target_fraction must lie in (0, 1)");
  }
  if (for_annotation && annotation_demos.empty()) throw Error("annotation needs at least one demonstration");
  if (max_in_flight < 1) throw Error("max_in_flight must be >= 1");
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(bounded(rng, i - 1));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

std::vector<SourceExample> downsample_single_table(std::vector<SourceExample> examples,
                                                   const BuildConfig& config) {
  config.validate(false);
  return downsample(std::move(examples), config,
                    [](const SourceExample& s) { return s.example.input_tables.size() == 1; });
}

std::vector<Example> downsample_single_table(std::vector<Example> examples, const BuildConfig& config) {
  config.validate(false);
  return downsample(std::move(examples), config,
                    [](const Example& e) { return e.input_tables.size() == 1; });
}

SplitResult split(std::vector<SourceExample> examples, const BuildConfig& config) {
  config.validate(false);
  std::vector<std::size_t> train_origin;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!examples[i].origin) throw Error("example " + examples[i].example.id + " has no origin tag");
    if (*examples[i].origin == Origin::train) train_origin.push_back(i);
  }
  const auto n_validation = static_cast<std::size_t>(
      std::llround(config.validation_fraction * static_cast<double>(train_origin.size())));
  std::vector<bool> to_validation(examples.size(), false);
  const auto perm = seeded_permutation(train_origin.size(), config.seed);
  for (std::size_t j = 0; j < n_validation; ++j) to_validation[train_origin[perm[j]]] = true;

  SplitResult out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto& ex = examples[i].example;
    if (*examples[i].origin == Origin::dev) {
      ex.split = Split::test;
      out.test.push_back(std::move(ex));
    } else if (to_validation[i]) {
      ex.split = Split::validation;
      out.validation.push_back(std::move(ex));
    } else {
      ex.split = Split::train;
      out.train.push_back(std::move(ex));
    }
  }
  return out;
}

PromptBundle build_annotation_prompt(std::string_view query, const Table& execution_table,
                                     const BuildConfig& config) {
  if (config.annotation_demos.empty()) throw Error("annotation needs at least one demonstration");
  if (execution_table.column_count() == 0) throw Error("execution table has no columns");
  PromptBundle bundle;
  bundle.template_name = "annotation";
  bundle.demonstration_count = config.annotation_demos.size();
  bundle.text = render_template(builtin_template("annotation"),
                                {{"demonstrations", join_demo_blocks(config.annotation_demos)},
                                 {"query", std::string(query)},
                                 {"table", linearize_table(execution_table).text}});
  return bundle;
}

Example annotate(const Example& example, Gateway& gateway, const BuildConfig& config,
                 const GenerationParams& params) {
  try {
    const auto prompt = build_annotation_prompt(example.query, example.execution_table, config);
    auto response = gateway.complete(prompt, params);
    Example out = example;
    out.summary = std::string(trim(response.text));
    if (out.summary.empty()) throw Error("empty completion");
    return out;
  } catch (const Error& e) {
    throw Error("annotation failed for id=" + example.id + ": " + e.what());
  }
}

std::vector<AnnotationOutcome> annotate_all(std::span<const Example> examples, Gateway& gateway,
                                            const BuildConfig& config,
                                            const GenerationParams& params) {
  config.validate(true);
  std::vector<AnnotationOutcome> outcomes(examples.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < examples.size(); i = next++) {
      try {
        outcomes[i].example = annotate(examples[i], gateway, config, params);
      } catch (const Error& e) {
        outcomes[i].example = examples[i];
        outcomes[i].error = e.what();
        spdlog::warn("{}", e.what());
      }
    }
  };
  const auto n = static_cast<std::size_t>(config.max_in_flight);
  std::vector<std::jthread> threads;
  for (std::size_t t = 1; t < std::min(n, examples.size()); ++t) threads.emplace_back(worker);
  worker();
  return outcomes;
}

std::vector<std::string> tables_from_spider_sql(const nlohmann::json& sql,
                                                std::span<const std::string> table_names) {
  std::vector<std::int64_t> indices;
  collect_table_units(sql, indices);
  std::vector<std::string> out;
  for (const auto idx : indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= table_names.size()) {
      throw Error("table index " + std::to_string(idx) + " out of range");
    }
    out.push_back(table_names[static_cast<std::size_t>(idx)]);
  }
  return out;
}

std::vector<std::string> tables_from_sql_text(std::string_view sql,
                                              std::span<const std::string> table_names) {
  static const std::regex kFromJoin(R"((?:from|join)\s+[`"\[]?([A-Za-z_][A-Za-z0-9_]*))",
                                    std::regex::icase);
  std::map<std::string, std::string> by_lower;
  for (const auto& name : table_names) by_lower.emplace(lower(name), name);
  std::vector<std::string> out;
  const std::string text(sql);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kFromJoin); it != std::sregex_iterator();
       ++it) {
    const auto found = by_lower.find(lower((*it)[1].str()));
    if (found == by_lower.end()) continue;
    if (std::find(out.begin(), out.end(), found->second) == out.end()) out.push_back(found->second);
  }
  return out;
}

std::vector<SourceExample> load_spider(const std::filesystem::path& spider_dir, SpiderLoadReport* report) {
  std::map<std::string, SpiderSchema> schemas;
  for (const auto& db : read_json(spider_dir / "tables.json")) {
    schemas[db.at("db_id").get<std::string>()].table_names =
        db.at("table_names_original").get<std::vector<std::string>>();
  }

  struct Source {
    const char* file;
    Origin origin;
    const char* prefix;
    bool optional;
  };
  const Source sources[] = {{"train_spider.json", Origin::train, "train", false},
                            {"train_others.json", Origin::train, "train", true},
                            {"dev.json", Origin::dev, "dev", false}};

  SpiderLoadReport local;
  auto& rep = report ? *report : local;
  std::map<std::string, DatabaseHandle> handles;
  std::map<Origin, std::size_t> counters;
  std::vector<SourceExample> out;

  for (const auto& src : sources) {
    const auto path = spider_dir / src.file;
    if (!std::filesystem::exists(path)) {
      if (src.optional) continue;
      throw Error("missing Spider file " + path.string());
    }
    for (const auto& rec : read_json(path)) {
      ++rep.records;
      char id_buf[32];
      std::snprintf(id_buf, sizeof id_buf, "%s_%05zu", src.prefix, counters[src.origin]++);
      const std::string id = id_buf;
      try {
        const auto db_id = rec.at("db_id").get<std::string>();
        auto handle_it = handles.find(db_id);
        if (handle_it == handles.end()) {
          handle_it = handles
                          .emplace(db_id, load_database(spider_dir / "database" / db_id /
                                                        (db_id + ".sqlite")))
                          .first;
        }
        const auto& handle = handle_it->second;
        const auto sql = rec.at("query").get<std::string>();

        std::vector<std::string> names;
        if (auto s = schemas.find(db_id); s != schemas.end() && rec.contains("sql")) {
          names = tables_from_spider_sql(rec.at("sql"), s->second.table_names);
        }
        if (names.empty()) names = tables_from_sql_text(sql, handle.table_names());
        if (names.empty()) throw Error("no input tables found");

        SourceExample se;
        se.origin = src.origin;
        se.example.id = id;
        se.example.query = rec.at("question").get<std::string>();
        se.example.sql = sql;
        se.example.database_id = db_id;
        se.example.input_tables = extract_input_tables(handle, names);
        se.example.execution_table = execute_sql(handle, sql);
        if (const auto v = validate_example(se.example); !v.empty()) throw ValidationError(v);
        out.push_back(std::move(se));
      } catch (const std::exception& e) {
        ++rep.skipped;
        rep.skip_reasons.push_back(id + ": " + e.what());
        spdlog::debug("skipping {}: {}", id, e.what());
      }
    }
  }
  spdlog::info("loaded {} Spider records, skipped {}", rep.records, rep.skipped);
  return out;
}

std::vector<Example> build_dataset(const std::filesystem::path& spider_dir, const BuildConfig& config,
                                   SpiderLoadReport* report) {
  config.validate(false);
  auto loaded = load_spider(spider_dir, report);
  std::vector<SourceExample> train_origin;
  std::vector<SourceExample> dev_origin;
  for (auto& s : loaded) {
    (*s.origin == Origin::train ? train_origin : dev_origin).push_back(std::move(s));
  }
  auto kept = downsample_single_table(std::move(train_origin), config);
  auto kept_dev = downsample_single_table(std::move(dev_origin), config);
  kept.insert(kept.end(), std::make_move_iterator(kept_dev.begin()),
              std::make_move_iterator(kept_dev.end()));

  auto parts = split(std::move(kept), config);
  std::vector<Example> out = std::move(parts.train);
  for (auto* part : {&parts.validation, &parts.test}) {
    out.insert(out.end(), std::make_move_iterator(part->begin()), std::make_move_iterator(part->end()));
  }
  return out;
}

}  // namespace qfmts
