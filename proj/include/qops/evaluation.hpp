#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qops/seq2seq.hpp"
#include "qops/vocab.hpp"

namespace qops {

// Position-wise accuracy up to min length with the gold length as denominator:
// missing predictions count as wrong, extra predictions are ignored here and
// surface as length errors in EvalReport.
double token_accuracy(const std::vector<int>& pred, const std::vector<int>& gold);

int exact_match(const std::vector<int>& pred, const std::vector<int>& gold);

struct EvalReport {
  double token_accuracy = 0.0;
  double exact_match = 0.0;
  std::size_t examples = 0;
  std::size_t length_errors = 0;                       // examples where |pred| != |gold|
  std::vector<std::vector<std::size_t>> confusion;     // gold x pred over content operators
  std::vector<double> precision;                       // per content operator, NaN when no preds
  std::vector<double> recall;                          // per content operator, NaN when no golds
};

// Pairs of (pred ids, gold ids) over a shared operator vocab. Confusion counts
// aligned positions only; ids below the reserved block are rejected.
EvalReport evaluate(const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs,
                    const Vocab& op_vocab);

std::string eval_report_json(const EvalReport& report, const Vocab& op_vocab);

// CSV: header "op" then the POS symbols, one row per decode step with the
// predicted operator symbol and weights at 6 decimal places.
void export_attention(const AttentionTrace& trace, const std::vector<std::string>& pos_symbols,
                      const std::vector<std::string>& op_symbols, const std::string& path);

struct ImportedAttention {
  std::vector<std::string> pos_symbols;
  std::vector<std::string> op_symbols;
  AttentionTrace trace;
};

ImportedAttention import_attention(const std::string& path);

}  // namespace qops
