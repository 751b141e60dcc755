#include "qfmts/metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "qfmts/error.hpp"

namespace qfmts::metrics {

namespace {

constexpr int kMaxOrder = 4;

using NgramCounts = std::unordered_map<std::string, int>;

// N-grams are keyed by their tokens joined with a unit separator, which the
// tokenizer never emits inside a token.
std::string ngram_key(std::span<const std::string> tokens, std::size_t start, int n) {
  std::string key;
  for (int k = 0; k < n; ++k) {
    if (k > 0) key += '\x1f';
    key += tokens[start + k];
  }
  return key;
}

NgramCounts count_ngrams(std::span<const std::string> tokens, int n) {
  NgramCounts counts;
  if (tokens.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[ngram_key(tokens, i, n)];
  return counts;
}

std::vector<std::string> split_key(const std::string& key) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = key.find('\x1f', start);
    parts.push_back(key.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

double harmonic(double a, double b) { return a + b > 0.0 ? 2.0 * a * b / (a + b) : 0.0; }

// Geometric mean where a zero term is replaced by kGeometricEpsilon, unless
// every term is zero, in which case the mean is zero.
double smoothed_geometric_mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  if (std::all_of(values.begin(), values.end(), [](double v) { return v <= 0.0; })) return 0.0;
  double log_sum = 0.0;
  for (double v : values) log_sum += std::log(v > 0.0 ? v : kGeometricEpsilon);
  return std::exp(log_sum / static_cast<double>(values.size()));
}

bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else if (c < 0x80) {
      current += static_cast<char>(std::tolower(c));
    } else {
      current += ch;
    }
  }
  flush();
  return tokens;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), curr(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      curr[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

RougeScore rouge_l_tokens(std::span<const std::string> prediction,
                          std::span<const std::string> reference) {
  RougeScore score;
  if (prediction.empty() || reference.empty()) return score;
  const auto lcs = static_cast<double>(lcs_length(prediction, reference));
  score.precision = lcs / static_cast<double>(prediction.size());
  score.recall = lcs / static_cast<double>(reference.size());
  score.f1 = harmonic(score.precision, score.recall);
  return score;
}

RougeScore rouge_l(std::string_view prediction, std::string_view reference) {
  const auto p = tokenize(prediction);
  const auto r = tokenize(reference);
  return rouge_l_tokens(p, r);
}

double corpus_bleu(std::span<const std::string> predictions,
                   std::span<const std::string> references) {
  if (predictions.size() != references.size()) {
    throw Error("corpus_bleu: " + std::to_string(predictions.size()) + " predictions vs " +
                std::to_string(references.size()) + " references");
  }
  std::array<double, kMaxOrder> correct{}, total{};
  double sys_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto hyp = tokenize(predictions[i]);
    const auto ref = tokenize(references[i]);
    sys_len += static_cast<double>(hyp.size());
    ref_len += static_cast<double>(ref.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      const auto hyp_counts = count_ngrams(hyp, n);
      const auto ref_counts = count_ngrams(ref, n);
      for (const auto& [gram, count] : hyp_counts) {
        total[n - 1] += count;
        if (auto it = ref_counts.find(gram); it != ref_counts.end()) {
          correct[n - 1] += std::min(count, it->second);
        }
      }
    }
  }

  std::array<double, kMaxOrder> precisions{};
  double smooth = 1.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    if (total[n] == 0.0) break;
    if (correct[n] == 0.0) {
      smooth *= 2.0;
      precisions[n] = 100.0 / (smooth * total[n]);
    } else {
      precisions[n] = 100.0 * correct[n] / total[n];
    }
  }

  double brevity = 1.0;
  if (sys_len < ref_len) brevity = sys_len > 0.0 ? std::exp(1.0 - ref_len / sys_len) : 0.0;

  // An order with no hypothesis n-grams at all keeps precision 0 and
  // drives the score to zero, as in the reference scorer.
  constexpr double kLogZero = -9999999999.0;
  double log_sum = 0.0;
  for (double p : precisions) log_sum += p > 0.0 ? std::log(p) : kLogZero;
  return brevity * std::exp(log_sum / kMaxOrder);
}

StrEmResult str_em_detailed(std::string_view prediction, const Table& execution_table) {
  std::set<Tokens> values;
  for (const auto& row : execution_table.rows) {
    for (const auto& cell : row) {
      auto tokens = tokenize(cell);
      if (!tokens.empty()) values.insert(std::move(tokens));
    }
  }
  if (values.empty()) return {1.0, true};
  const auto pred = tokenize(prediction);
  std::size_t hits = 0;
  for (const auto& value : values) {
    if (std::search(pred.begin(), pred.end(), value.begin(), value.end()) != pred.end()) ++hits;
  }
  return {static_cast<double>(hits) / static_cast<double>(values.size()), false};
}

double str_em(std::string_view prediction, const Table& execution_table) {
  return str_em_detailed(prediction, execution_table).score;
}

ParentScore parent(std::string_view prediction, std::string_view reference,
                   const Table& execution_table, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw Error("parent: lambda must lie in [0, 1]");
  const auto pred = tokenize(prediction);
  const auto ref = tokenize(reference);

  std::unordered_set<std::string> table_tokens;
  std::vector<Tokens> cells;
  for (const auto& header : execution_table.headers) {
    for (auto& t : tokenize(header)) table_tokens.insert(std::move(t));
  }
  for (const auto& row : execution_table.rows) {
    for (const auto& cell : row) {
      auto tokens = tokenize(cell);
      if (tokens.empty()) continue;
      table_tokens.insert(tokens.begin(), tokens.end());
      cells.push_back(std::move(tokens));
    }
  }

  std::unordered_map<std::string, double> weight_cache;
  auto entailment = [&](const std::string& key, int n) {
    auto [it, inserted] = weight_cache.try_emplace(key, 0.0);
    if (inserted) {
      const auto parts = split_key(key);
      const auto found = std::count_if(parts.begin(), parts.end(),
                                       [&](const std::string& t) { return table_tokens.contains(t); });
      it->second = static_cast<double>(found) / static_cast<double>(n);
    }
    return it->second;
  };

  std::vector<double> precision_orders, recall_orders;
  for (int n = 1; n <= kMaxOrder; ++n) {
    const auto pred_counts = count_ngrams(pred, n);
    const auto ref_counts = count_ngrams(ref, n);

    double num = 0.0, den = 0.0;
    for (const auto& [gram, count] : pred_counts) {
      const auto it = ref_counts.find(gram);
      const double in_ref = it == ref_counts.end() ? 0.0 : std::min(it->second, count);
      const double r = in_ref / count;
      num += count * (r + (1.0 - r) * entailment(gram, n));
      den += count;
    }
    if (den > 0.0) precision_orders.push_back(num / den);

    num = 0.0;
    den = 0.0;
    for (const auto& [gram, count] : ref_counts) {
      const double w = entailment(gram, n);
      const auto it = pred_counts.find(gram);
      const double in_pred = it == pred_counts.end() ? 0.0 : std::min(it->second, count);
      num += in_pred * w;
      den += count * w;
    }
    if (den > 0.0) recall_orders.push_back(num / den);
  }

  ParentScore score;
  score.lambda = lambda;
  score.entailed_precision = smoothed_geometric_mean(precision_orders);

  const bool has_table = !cells.empty();
  if (has_table) {
    double sum = 0.0;
    for (const auto& cell : cells) {
      sum += static_cast<double>(lcs_length(cell, pred)) / static_cast<double>(cell.size());
    }
    score.table_recall = sum / static_cast<double>(cells.size());
  }
  const bool has_reference = !recall_orders.empty();
  score.reference_recall = has_reference ? smoothed_geometric_mean(recall_orders) : score.table_recall;

  if (has_table) {
    score.entailed_recall =
        std::pow(score.reference_recall, lambda) * std::pow(score.table_recall, 1.0 - lambda);
  } else if (has_reference) {
    score.entailed_recall = score.reference_recall;
  }
  score.f_score = harmonic(score.entailed_precision, score.entailed_recall);
  return score;
}

}  // namespace qfmts::metrics
