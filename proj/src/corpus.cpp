#include "qops/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "qops/rng.hpp"

namespace qops {

using nlohmann::json;

Vocab build_vocab(const std::vector<Example>& corpus, VocabSide side, bool strict,
                  const OperatorSet& operators) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  if (side == VocabSide::kOps && strict) {
    for (const auto& ex : corpus) {
      for (const auto& op : ex.ops) {
        if (!operators.contains(op)) {
          throw std::invalid_argument("example '" + ex.id + "': operator '" + op +
                                      "' is outside the operator inventory");
        }
      }
    }
    return operators.vocab();
  }
  Vocab v;
  for (const auto& ex : corpus) {
    const auto& seq = side == VocabSide::kPos ? ex.pos : ex.ops;
    for (const auto& s : seq) v.add(s);
  }
  return v;
}

std::vector<Example> parse_jsonl(std::istream& in, const std::string& origin) {
  std::vector<Example> corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    Example ex;
    ex.id = obj.value("id", std::string("line") + std::to_string(lineno));
    if (!obj.contains("pos") || !obj.contains("ops")) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                               ": missing pos or ops field");
    }
    ex.pos = obj.at("pos").get<std::vector<std::string>>();
    ex.ops = obj.at("ops").get<std::vector<std::string>>();
    if (obj.contains("question")) ex.question = obj.at("question").get<std::string>();
    if (ex.pos.empty() || ex.ops.empty()) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                               ": pos and ops must be non-empty");
    }
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

std::vector<Example> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  return parse_jsonl(in, path);
}

void save_jsonl(const std::vector<Example>& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const auto& ex : corpus) {
    json obj;
    obj["id"] = ex.id;
    obj["pos"] = ex.pos;
    obj["ops"] = ex.ops;
    if (ex.question) obj["question"] = *ex.question;
    out << obj.dump() << "\n";
  }
}

LexiconTagger::LexiconTagger(std::string default_tag) : default_tag_(std::move(default_tag)) {}

namespace {

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

LexiconTagger LexiconTagger::load(const std::string& path, std::string default_tag) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon file: " + path);
  LexiconTagger tagger(std::move(default_tag));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected word<TAB>TAG");
    }
    tagger.add(line.substr(0, tab), line.substr(tab + 1));
  }
  return tagger;
}

void LexiconTagger::add(const std::string& word, const std::string& tag) {
  tags_[lowercase(word)] = tag;
}

const std::string& LexiconTagger::tag_of(const std::string& word) const {
  auto it = tags_.find(lowercase(word));
  return it == tags_.end() ? default_tag_ : it->second;
}

bool LexiconTagger::contains(const std::string& word) const {
  return tags_.count(lowercase(word)) > 0;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(lowercase(cur));
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c) || c == '\'' || c == '-') {
      cur.push_back(static_cast<char>(c));
    } else {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

std::vector<std::string> tag_pos(const std::vector<std::string>& tokens,
                                 const LexiconTagger& tagger, TagStats* stats) {
  if (tokens.empty()) throw std::invalid_argument("tag_pos: empty token list");
  std::vector<std::string> tags;
  tags.reserve(tokens.size());
  for (const auto& tok : tokens) {
    if (stats) {
      ++stats->tokens;
      if (!tagger.contains(tok)) ++stats->unknown;
    }
    tags.push_back(tagger.tag_of(tok));
  }
  return tags;
}

std::vector<std::string> parse_operator_list(const std::string& raw, const std::string& row_id,
                                             bool strict, const OperatorSet& operators) {
  std::string s = raw;
  // trim outer whitespace
  auto b = s.find_first_not_of(" \t\r\n");
  auto e = s.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) {
    throw std::runtime_error("row '" + row_id + "': empty operators column");
  }
  s = s.substr(b, e - b + 1);
  if (s.size() < 2 || s.front() != '[' || s.back() != ']') {
    throw std::runtime_error("row '" + row_id + "': operators column is not a bracketed list: " +
                             raw);
  }
  s = s.substr(1, s.size() - 2);
  std::vector<std::string> ops;
  std::string item;
  bool in_quote = false;
  char quote = '\0';
  auto flush = [&] {
    auto ib = item.find_first_not_of(" \t");
    auto ie = item.find_last_not_of(" \t");
    if (ib == std::string::npos) {
      throw std::runtime_error("row '" + row_id + "': empty operator entry");
    }
    ops.push_back(lowercase(item.substr(ib, ie - ib + 1)));
    item.clear();
  };
  bool saw_any = false;
  for (char c : s) {
    if (in_quote) {
      if (c == quote) {
        in_quote = false;
      } else {
        item.push_back(c);
      }
    } else if (c == '\'' || c == '"') {
      in_quote = true;
      quote = c;
      saw_any = true;
    } else if (c == ',') {
      flush();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      item.push_back(c);
      saw_any = true;
    }
  }
  if (in_quote) {
    throw std::runtime_error("row '" + row_id + "': unterminated quote in operators column");
  }
  if (saw_any) flush();
  if (ops.empty()) {
    throw std::runtime_error("row '" + row_id + "': operators list is empty");
  }
  if (strict) {
    for (const auto& op : ops) {
      if (!operators.contains(op)) {
        throw std::runtime_error("row '" + row_id + "': operator '" + op +
                                 "' is outside the operator inventory");
      }
    }
  }
  return ops;
}

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool row_has_data = false;
  char c;
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_data = true;
        break;
      case ',':
        fields.push_back(std::move(field));
        field.clear();
        row_has_data = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_data || !field.empty() || !fields.empty()) {
          fields.push_back(std::move(field));
          field.clear();
          rows.push_back(std::move(fields));
          fields.clear();
          row_has_data = false;
        }
        break;
      default:
        field.push_back(c);
        row_has_data = true;
        break;
    }
  }
  if (in_quotes) throw std::runtime_error("csv: unterminated quoted field");
  if (row_has_data || !field.empty() || !fields.empty()) {
    fields.push_back(std::move(field));
    rows.push_back(std::move(fields));
  }
  return rows;
}

std::vector<Example> convert_break_csv(const std::string& csv_path, const LexiconTagger& tagger,
                                       ConvertStats* stats, bool strict,
                                       const OperatorSet& operators) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open csv file: " + csv_path);
  auto rows = read_csv(in);
  if (rows.empty()) throw std::runtime_error(csv_path + ": empty csv");

  const auto& header = rows.front();
  auto col = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw std::runtime_error(csv_path + ": missing column '" + name + "'");
  };
  const std::size_t id_col = col("question_id");
  const std::size_t text_col = col("question_text");
  const std::size_t decomp_col = col("decomposition");
  const std::size_t ops_col = col("operators");
  (void)decomp_col;

  std::vector<Example> corpus;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    try {
      if (row.size() < header.size()) {
        throw std::runtime_error("line " + std::to_string(r + 1) + ": expected " +
                                 std::to_string(header.size()) + " fields, got " +
                                 std::to_string(row.size()));
      }
      Example ex;
      ex.id = row[id_col];
      ex.question = row[text_col];
      ex.ops = parse_operator_list(row[ops_col], ex.id, strict, operators);
      auto tokens = tokenize(row[text_col]);
      if (tokens.empty()) {
        throw std::runtime_error("row '" + ex.id + "': question has no tokens");
      }
      TagStats tag_stats;
      ex.pos = tag_pos(tokens, tagger, &tag_stats);
      if (stats) {
        stats->tokens += tag_stats.tokens;
        stats->unknown_tags += tag_stats.unknown;
        for (const auto& op : ex.ops) ++stats->operator_histogram[op];
      }
      corpus.push_back(std::move(ex));
      if (stats) ++stats->rows;
    } catch (const std::exception& e) {
      if (stats) {
        ++stats->skipped;
        stats->skip_messages.push_back("line " + std::to_string(r + 1) + ": " + e.what());
      }
    }
  }
  return corpus;
}

std::vector<Batch> batchify(const std::vector<Example>& corpus, const Vocab& pos_vocab,
                            const Vocab& op_vocab, std::size_t batch_size, std::uint64_t seed,
                            UnkStats* stats) {
  if (batch_size < 1) throw std::invalid_argument("batchify: batch_size must be >= 1");
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, order.size());
    Batch batch;
    std::size_t max_pos = 0, max_tgt = 0;
    for (std::size_t i = start; i < end; ++i) {
      const Example& ex = corpus[order[i]];
      max_pos = std::max(max_pos, ex.pos.size());
      max_tgt = std::max(max_tgt, ex.ops.size() + 2);  // SOS ... EOS
    }
    for (std::size_t i = start; i < end; ++i) {
      const Example& ex = corpus[order[i]];
      std::vector<int> pos_ids(max_pos, kPadId);
      for (std::size_t t = 0; t < ex.pos.size(); ++t) {
        int id = pos_vocab.id_of(ex.pos[t]);
        if (stats) {
          ++stats->pos_tokens;
          if (id == kUnkId && ex.pos[t] != kUnkSymbol) ++stats->pos_unk;
        }
        pos_ids[t] = id;
      }
      std::vector<int> target(max_tgt, kPadId);
      target[0] = kSosId;
      for (std::size_t t = 0; t < ex.ops.size(); ++t) {
        int id = op_vocab.id_of(ex.ops[t]);
        if (stats) {
          ++stats->op_tokens;
          if (id == kUnkId && ex.ops[t] != kUnkSymbol) ++stats->op_unk;
        }
        target[t + 1] = id;
      }
      target[ex.ops.size() + 1] = kEosId;
      std::vector<std::uint8_t> mask(max_tgt - 1, 0);
      for (std::size_t t = 0; t + 1 < max_tgt; ++t) mask[t] = target[t + 1] != kPadId;
      batch.pos.push_back(std::move(pos_ids));
      batch.pos_len.push_back(ex.pos.size());
      batch.target.push_back(std::move(target));
      batch.mask.push_back(std::move(mask));
      batch.example_index.push_back(order[i]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace qops
