#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qfmts/table.hpp"

namespace qfmts::metrics {

using Tokens = std::vector<std::string>;

/// Shared normalizer for every lexical metric: ASCII-lowercases, emits each
/// ASCII punctuation character as its own token and splits on whitespace.
/// Bytes >= 0x80 are treated as word characters.
Tokens tokenize(std::string_view text);

/// Longest common subsequence length over tokens.
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Sentence-level ROUGE-L. Precision is taken against the prediction length,
/// recall against the reference length.
RougeScore rouge_l(std::string_view prediction, std::string_view reference);
RougeScore rouge_l_tokens(std::span<const std::string> prediction,
                          std::span<const std::string> reference);

/// Corpus BLEU-4 on the shared tokenization, scaled to [0, 100]. Follows
/// the sacreBLEU computation with "exp" smoothing: the k-th order with zero
/// matches gets precision 1 / (2^k * total).
/// Throws qfmts::Error on a length mismatch.
double corpus_bleu(std::span<const std::string> predictions,
                   std::span<const std::string> references);

struct StrEmResult {
  double score = 0.0;
  /// The table had no non-empty cell values; score is defined as 1.0.
  bool empty_table = false;
};

/// Fraction of distinct normalized cell values of the table that occur as a
/// contiguous token run in the normalized prediction.
StrEmResult str_em_detailed(std::string_view prediction, const Table& execution_table);
double str_em(std::string_view prediction, const Table& execution_table);

inline constexpr double kDefaultParentLambda = 0.5;
/// Substituted for a zero term before taking a geometric mean.
inline constexpr double kGeometricEpsilon = 1e-12;

struct ParentScore {
  double entailed_precision = 0.0;
  double entailed_recall = 0.0;
  double reference_recall = 0.0;
  double table_recall = 0.0;
  double f_score = 0.0;
  double lambda = kDefaultParentLambda;
};

/// PARENT with the word-overlap entailment model, n-gram orders 1..4.
///
/// w(g) is the fraction of g's tokens found among the table's tokens
/// (headers and cells). Entailed precision credits a predicted n-gram by
/// r(g) + (1 - r(g)) w(g); reference recall weights each reference n-gram
/// by w(g); table recall is the mean over cells of LCS(cell, prediction) /
/// |cell|. The recall is E_ref^lambda * E_tab^(1 - lambda).
///
/// Orders with an empty denominator are skipped. When every reference order
/// is skipped the reference recall falls back to the table recall; when the
/// table has no cell tokens the recall is the reference recall alone.
ParentScore parent(std::string_view prediction, std::string_view reference,
                   const Table& execution_table, double lambda = kDefaultParentLambda);

}  // namespace qfmts::metrics
