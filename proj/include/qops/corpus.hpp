#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qops/vocab.hpp"

namespace qops {

// One aligned (POS-tag sequence, operator sequence) pair.
struct Example {
  std::string id;
  std::vector<std::string> pos;
  std::vector<std::string> ops;
  std::optional<std::string> question;
};

enum class VocabSide { kPos, kOps };

// Observed symbols in first-occurrence order after the reserved block. In
// strict mode the ops side is the fixed operator-inventory vocabulary and any
// example using a symbol outside it is a validation error naming the row.
Vocab build_vocab(const std::vector<Example>& corpus, VocabSide side, bool strict = true,
                  const OperatorSet& operators = OperatorSet::qdmr());

// JSONL corpus: one object per line with fields id, pos, ops, optional
// question. Round-trips symbol sequences exactly.
std::vector<Example> load_jsonl(const std::string& path);
std::vector<Example> parse_jsonl(std::istream& in, const std::string& origin);
void save_jsonl(const std::vector<Example>& corpus, const std::string& path);

// Word -> POS-tag map with a default tag for unknown words; lookups are
// lowercased. File format: "word<TAB>TAG" lines.
class LexiconTagger {
 public:
  explicit LexiconTagger(std::string default_tag = "NOUN");
  static LexiconTagger load(const std::string& path, std::string default_tag = "NOUN");

  void add(const std::string& word, const std::string& tag);
  const std::string& tag_of(const std::string& word) const;
  bool contains(const std::string& word) const;
  std::size_t size() const { return tags_.size(); }
  const std::string& default_tag() const { return default_tag_; }

 private:
  std::map<std::string, std::string> tags_;
  std::string default_tag_;
};

// Lowercased whitespace + punctuation split; punctuation marks become
// single-character tokens.
std::vector<std::string> tokenize(const std::string& text);

struct TagStats {
  std::size_t tokens = 0;
  std::size_t unknown = 0;  // words tagged with the default
};

std::vector<std::string> tag_pos(const std::vector<std::string>& tokens,
                                 const LexiconTagger& tagger, TagStats* stats = nullptr);

// --- BREAK CSV conversion ------------------------------------------------

struct BreakRow {
  std::string question_id;
  std::string question_text;
  std::string decomposition;
  std::vector<std::string> operators;
};

// Parses the bracketed, quoted operator-list convention, e.g.
// "['select', 'filter']". Lowercases and strips quotes and whitespace.
std::vector<std::string> parse_operator_list(const std::string& raw, const std::string& row_id,
                                             bool strict = true,
                                             const OperatorSet& operators = OperatorSet::qdmr());

struct ConvertStats {
  std::size_t rows = 0;
  std::size_t skipped = 0;
  std::size_t tokens = 0;
  std::size_t unknown_tags = 0;
  std::map<std::string, std::size_t> operator_histogram;
  std::vector<std::string> skip_messages;
};

// Reads a BREAK-style CSV (header row; columns question_id, question_text,
// decomposition, operators; extra columns ignored), tags each question with
// the lexicon and emits one Example per well-formed row. Malformed rows are
// skipped and counted.
std::vector<Example> convert_break_csv(const std::string& csv_path, const LexiconTagger& tagger,
                                       ConvertStats* stats = nullptr, bool strict = true,
                                       const OperatorSet& operators = OperatorSet::qdmr());

// RFC-4180-style reader used by the converter; exposed for tests. Handles
// quoted fields with embedded commas, doubled quotes and newlines.
std::vector<std::vector<std::string>> read_csv(std::istream& in);

// --- Batching -------------------------------------------------------------

struct Batch {
  // Padded POS ids, one row per example, padded with kPadId to the batch max.
  std::vector<std::vector<int>> pos;
  std::vector<std::size_t> pos_len;
  // Target frames: SOS, ops..., EOS, PAD... All rows share one length.
  std::vector<std::vector<int>> target;
  // mask[k][t] marks decoder step t (predicting target[k][t+1]) as real.
  std::vector<std::vector<std::uint8_t>> mask;
  std::vector<std::size_t> example_index;  // position in the source corpus

  std::size_t size() const { return pos.size(); }
};

struct UnkStats {
  std::size_t pos_tokens = 0;
  std::size_t pos_unk = 0;
  std::size_t op_tokens = 0;
  std::size_t op_unk = 0;
};

// Deterministic shuffle under seed, then fixed-size batches (last one may be
// short). Unknown symbols map to kUnkId and are counted.
std::vector<Batch> batchify(const std::vector<Example>& corpus, const Vocab& pos_vocab,
                            const Vocab& op_vocab, std::size_t batch_size, std::uint64_t seed,
                            UnkStats* stats = nullptr);

}  // namespace qops
