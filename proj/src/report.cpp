#include "qfmts/report.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <thread>
#include <unordered_map>

#include "qfmts/quality.hpp"

namespace qfmts {

namespace {

MetricSummary summarize(const std::vector<std::size_t>& members, const std::vector<ExampleScore>& scores,
                        const std::vector<std::string>& predictions,
                        const std::vector<std::string>& references) {
  MetricSummary s;
  s.n = members.size();
  if (members.empty()) return s;
  std::vector<std::string> preds;
  std::vector<std::string> refs;
  double bert = 0.0;
  bool has_bert = true;
  for (const auto i : members) {
    const auto& e = scores[i];
    if (e.failed) ++s.failed;
    s.rouge_l += e.rouge_l;
    s.str_em += e.str_em;
    s.parent += e.parent;
    s.completeness += e.completeness;
    if (e.bertscore) {
      bert += *e.bertscore;
    } else {
      has_bert = false;
    }
    preds.push_back(predictions[i]);
    refs.push_back(references[i]);
  }
  const auto n = static_cast<double>(s.n);
  s.rouge_l /= n;
  s.str_em /= n;
  s.parent /= n;
  s.completeness /= n;
  if (has_bert) s.bertscore = bert / n;
  s.bleu = metrics::corpus_bleu(preds, refs);
  return s;
}

std::string cell(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool left) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return left ? s + fill : fill + s;
}

}  // namespace

ScoreReport evaluate_run(std::span<const Prediction> predictions, std::span<const Example> dataset,
                         const EvaluateOptions& options) {
  std::unordered_map<std::string, const Example*> by_id;
  for (const auto& ex : dataset) by_id.emplace(ex.id, &ex);

  std::vector<std::string> unknown;
  std::vector<std::string> duplicated;
  std::unordered_map<std::string, int> seen;
  std::vector<const Example*> matched(predictions.size(), nullptr);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& id = predictions[i].id;
    if (++seen[id] == 2) duplicated.push_back(id);
    if (auto it = by_id.find(id); it != by_id.end()) {
      matched[i] = it->second;
    } else {
      unknown.push_back(id);
    }
  }
  auto join = [](const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) out += (out.empty() ? "" : ", ") + id;
    return out;
  };
  if (!unknown.empty()) throw Error("predictions reference unknown ids: " + join(unknown));
  if (!duplicated.empty()) throw Error("duplicate prediction ids: " + join(duplicated));
  if (options.bertscore) {
    std::vector<std::string> missing;
    for (const auto& p : predictions) {
      if (!options.bertscore->contains(p.id)) missing.push_back(p.id);
    }
    if (!missing.empty()) throw Error("BERTScore missing for ids: " + join(missing));
  }

  ScoreReport report;
  report.examples.resize(predictions.size());
  std::vector<std::string> texts(predictions.size());
  std::vector<std::string> references(predictions.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < predictions.size(); i = next++) {
      const auto& pred = predictions[i];
      const auto& ex = *matched[i];
      auto& score = report.examples[i];
      score.id = pred.id;
      score.n_input_tables = ex.input_tables.size();
      score.failed = pred.failed();
      const std::string text = score.failed ? std::string{} : pred.summary;
      score.rouge_l = metrics::rouge_l(text, ex.summary).f1;
      const auto em = metrics::str_em_detailed(text, ex.execution_table);
      score.str_em = em.score;
      score.empty_table = em.empty_table;
      score.parent = metrics::parent(text, ex.summary, ex.execution_table, options.parent_lambda).f_score;
      score.completeness = completeness(text, ex.query, ex.execution_table);
      if (options.bertscore) score.bertscore = options.bertscore->at(pred.id);
      texts[i] = text;
      references[i] = ex.summary;
    }
  };
  {
    const auto n = static_cast<std::size_t>(std::max(1, options.parallelism));
    std::vector<std::jthread> threads;
    for (std::size_t t = 1; t < std::min(n, predictions.size()); ++t) threads.emplace_back(worker);
    worker();
  }

  std::vector<std::size_t> all;
  std::vector<std::size_t> single;
  std::vector<std::size_t> multi;
  for (std::size_t i = 0; i < report.examples.size(); ++i) {
    all.push_back(i);
    (report.examples[i].n_input_tables == 1 ? single : multi).push_back(i);
  }
  report.corpus = summarize(all, report.examples, texts, references);
  report.single_table = summarize(single, report.examples, texts, references);
  report.multi_table = summarize(multi, report.examples, texts, references);
  return report;
}

std::string render_report(const ScoreReport& report) {
  const bool bert = report.corpus.bertscore.has_value();
  std::vector<std::string> header{"Subset", "N", "SacreBLEU", "ROUGE-L"};
  if (bert) header.push_back("BERTScore");
  for (const char* h : {"STR-EM", "PARENT", "Completeness"}) header.emplace_back(h);

  std::vector<std::vector<std::string>> rows;
  auto add = [&](const char* name, const MetricSummary& s) {
    if (s.n == 0) return;
    std::vector<std::string> row{name, std::to_string(s.n), cell(s.bleu), cell(100.0 * s.rouge_l)};
    if (bert) row.push_back(s.bertscore ? cell(100.0 * *s.bertscore) : "-");
    row.push_back(cell(100.0 * s.str_em));
    row.push_back(cell(100.0 * s.parent));
    row.push_back(cell(100.0 * s.completeness));
    rows.push_back(std::move(row));
  };
  add("all", report.corpus);
  add("single-table", report.single_table);
  add("multi-table", report.multi_table);

  std::vector<std::size_t> widths(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    widths[c] = header[c].size();
    for (const auto& r : rows) widths[c] = std::max(widths[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c > 0) out += "  ";
      out += pad(fields[c], widths[c], c == 0);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(header);
  for (const auto& r : rows) out += line(r);
  return out;
}

void to_json(nlohmann::json& j, const ExampleScore& s) {
  j = nlohmann::json{{"id", s.id},
                     {"n_input_tables", s.n_input_tables},
                     {"failed", s.failed},
                     {"rouge_l", s.rouge_l},
                     {"str_em", s.str_em},
                     {"empty_table", s.empty_table},
                     {"parent", s.parent},
                     {"completeness", s.completeness}};
  if (s.bertscore) j["bertscore"] = *s.bertscore;
}

void from_json(const nlohmann::json& j, ExampleScore& s) {
  j.at("id").get_to(s.id);
  j.at("n_input_tables").get_to(s.n_input_tables);
  j.at("failed").get_to(s.failed);
  j.at("rouge_l").get_to(s.rouge_l);
  j.at("str_em").get_to(s.str_em);
  j.at("empty_table").get_to(s.empty_table);
  j.at("parent").get_to(s.parent);
  j.at("completeness").get_to(s.completeness);
  s.bertscore = j.contains("bertscore") ? std::optional(j.at("bertscore").get<double>()) : std::nullopt;
}

void to_json(nlohmann::json& j, const MetricSummary& s) {
  j = nlohmann::json{{"n", s.n},
                     {"failed", s.failed},
                     {"bleu", s.bleu},
                     {"rouge_l", s.rouge_l},
                     {"str_em", s.str_em},
                     {"parent", s.parent},
                     {"completeness", s.completeness}};
  if (s.bertscore) j["bertscore"] = *s.bertscore;
}

void from_json(const nlohmann::json& j, MetricSummary& s) {
  j.at("n").get_to(s.n);
  j.at("failed").get_to(s.failed);
  j.at("bleu").get_to(s.bleu);
  j.at("rouge_l").get_to(s.rouge_l);
  j.at("str_em").get_to(s.str_em);
  j.at("parent").get_to(s.parent);
  j.at("completeness").get_to(s.completeness);
  s.bertscore = j.contains("bertscore") ? std::optional(j.at("bertscore").get<double>()) : std::nullopt;
}

void to_json(nlohmann::json& j, const ScoreReport& r) {
  j = nlohmann::json{{"corpus", r.corpus},
                     {"breakdown", {{"single_table", r.single_table}, {"multi_table", r.multi_table}}},
                     {"examples", r.examples}};
}

void from_json(const nlohmann::json& j, ScoreReport& r) {
  j.at("corpus").get_to(r.corpus);
  j.at("breakdown").at("single_table").get_to(r.single_table);
  j.at("breakdown").at("multi_table").get_to(r.multi_table);
  j.at("examples").get_to(r.examples);
}

std::string report_to_json_text(const ScoreReport& report) { return nlohmann::json(report).dump(2) + "\n"; }

}  // namespace qfmts
