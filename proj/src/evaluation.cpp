#include "qops/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "qops/corpus.hpp"

namespace qops {

double token_accuracy(const std::vector<int>& pred, const std::vector<int>& gold) {
  if (gold.empty()) throw std::invalid_argument("token_accuracy: empty gold sequence");
  std::size_t n = std::min(pred.size(), gold.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (pred[i] == gold[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

int exact_match(const std::vector<int>& pred, const std::vector<int>& gold) {
  return pred == gold ? 1 : 0;
}

EvalReport evaluate(const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs,
                    const Vocab& op_vocab) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: no prediction pairs");
  std::size_t n_ops = op_vocab.size() - kNumReserved;
  EvalReport report;
  report.examples = pairs.size();
  report.confusion.assign(n_ops, std::vector<std::size_t>(n_ops, 0));

  auto content_index = [&](int id, const char* side) {
    if (id < static_cast<int>(kNumReserved) || id >= static_cast<int>(op_vocab.size()))
      throw std::out_of_range(std::string("evaluate: ") + side + " id " + std::to_string(id) +
                              " outside the operator block");
    return static_cast<std::size_t>(id) - kNumReserved;
  };

  double acc_sum = 0.0;
  std::size_t em_sum = 0;
  for (const auto& [pred, gold] : pairs) {
    acc_sum += token_accuracy(pred, gold);
    em_sum += static_cast<std::size_t>(exact_match(pred, gold));
    if (pred.size() != gold.size()) ++report.length_errors;
    std::size_t aligned = std::min(pred.size(), gold.size());
    for (std::size_t i = 0; i < aligned; ++i)
      ++report.confusion[content_index(gold[i], "gold")][content_index(pred[i], "pred")];
  }
  report.token_accuracy = acc_sum / static_cast<double>(pairs.size());
  report.exact_match = static_cast<double>(em_sum) / static_cast<double>(pairs.size());

  report.precision.assign(n_ops, std::numeric_limits<double>::quiet_NaN());
  report.recall.assign(n_ops, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < n_ops; ++k) {
    std::size_t col = 0, row = 0;
    for (std::size_t g = 0; g < n_ops; ++g) col += report.confusion[g][k];
    for (std::size_t p = 0; p < n_ops; ++p) row += report.confusion[k][p];
    if (col) report.precision[k] = static_cast<double>(report.confusion[k][k]) / col;
    if (row) report.recall[k] = static_cast<double>(report.confusion[k][k]) / row;
  }
  return report;
}

std::string eval_report_json(const EvalReport& report, const Vocab& op_vocab) {
  std::size_t n_ops = op_vocab.size() - kNumReserved;
  if (report.confusion.size() != n_ops)
    throw std::logic_error("eval_report_json: confusion size does not match vocab");
  nlohmann::json j;
  j["token_accuracy"] = report.token_accuracy;
  j["exact_match"] = report.exact_match;
  j["examples"] = report.examples;
  j["length_errors"] = report.length_errors;
  nlohmann::json names = nlohmann::json::array();
  for (std::size_t k = 0; k < n_ops; ++k) names.push_back(op_vocab.symbol_of(k + kNumReserved));
  j["operators"] = names;
  j["confusion"] = report.confusion;
  nlohmann::json prec = nlohmann::json::object(), rec = nlohmann::json::object();
  for (std::size_t k = 0; k < n_ops; ++k) {
    const std::string& name = op_vocab.symbol_of(k + kNumReserved);
    if (!std::isnan(report.precision[k])) prec[name] = report.precision[k];
    if (!std::isnan(report.recall[k])) rec[name] = report.recall[k];
  }
  j["precision"] = prec;
  j["recall"] = rec;
  return j.dump();
}

void export_attention(const AttentionTrace& trace, const std::vector<std::string>& pos_symbols,
                      const std::vector<std::string>& op_symbols, const std::string& path) {
  if (op_symbols.size() != trace.rows.size())
    throw std::logic_error("export_attention: one operator symbol per trace row required");
  for (const auto& row : trace.rows)
    if (row.size() != pos_symbols.size())
      throw std::logic_error("export_attention: trace width does not match POS symbols");

  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_attention: cannot open '" + path + "'");
  out << "op";
  for (const auto& s : pos_symbols) out << ',' << s;
  out << '\n';
  char buf[32];
  for (std::size_t t = 0; t < trace.rows.size(); ++t) {
    out << op_symbols[t];
    for (double v : trace.rows[t]) {
      std::snprintf(buf, sizeof buf, "%.6f", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("export_attention: write to '" + path + "' failed");
}

ImportedAttention import_attention(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("import_attention: cannot open '" + path + "'");
  auto rows = read_csv(in);
  if (rows.empty() || rows.front().empty() || rows.front().front() != "op")
    throw std::runtime_error("import_attention: '" + path + "' lacks the attention header");
  ImportedAttention out;
  out.pos_symbols.assign(rows.front().begin() + 1, rows.front().end());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != rows.front().size())
      throw std::runtime_error("import_attention: ragged row " + std::to_string(r + 1));
    out.op_symbols.push_back(row.front());
    std::vector<double> weights;
    weights.reserve(row.size() - 1);
    for (std::size_t c = 1; c < row.size(); ++c) {
      try {
        std::size_t used = 0;
        weights.push_back(std::stod(row[c], &used));
        if (used != row[c].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw std::runtime_error("import_attention: bad weight '" + row[c] + "' at row " +
                                 std::to_string(r + 1));
      }
    }
    out.trace.rows.push_back(std::move(weights));
  }
  return out;
}

}  // namespace qops
