#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "qops/corpus.hpp"
#include "qops/vocab.hpp"

using namespace qops;

namespace {

Example make_example(std::string id, std::vector<std::string> pos, std::vector<std::string> ops) {
  Example ex;
  ex.id = std::move(id);
  ex.pos = std::move(pos);
  ex.ops = std::move(ops);
  return ex;
}

std::string data_path(const std::string& name) { return std::string(QOPS_DATA_DIR) + "/" + name; }

// Unique temp file per test-run path; removed by the caller when it matters.
std::string temp_path(const std::string& name) {
  return std::string("/tmp/qops_test_") + name;
}

}  // namespace

TEST_CASE("vocab reserves control symbols at fixed ids") {
  Vocab v;
  CHECK(v.size() == 4);
  CHECK(v.symbol_of(kPadId) == "<pad>");
  CHECK(v.symbol_of(kSosId) == "<sos>");
  CHECK(v.symbol_of(kEosId) == "<eos>");
  CHECK(v.symbol_of(kUnkId) == "<unk>");
  int id = v.add("NOUN");
  CHECK(id == 4);
  CHECK(v.add("NOUN") == 4);  // duplicates collapse
  CHECK(v.id_of("NOUN") == 4);
  CHECK(v.id_of("VERB") == kUnkId);
  CHECK(v.contains("NOUN"));
  CHECK_FALSE(v.contains("VERB"));
}

TEST_CASE("vocab round-trips every symbol") {
  Vocab v;
  v.add("a");
  v.add("b");
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(v.id_of(v.symbol_of(static_cast<int>(i))) == static_cast<int>(i));
  Vocab copy = Vocab::from_symbols(v.symbols());
  CHECK(copy.symbols() == v.symbols());
  CHECK_THROWS_AS(v.symbol_of(99), std::out_of_range);
}

TEST_CASE("operator inventory has the fixed 13 entries") {
  const OperatorSet& ops = OperatorSet::qdmr();
  CHECK(ops.size() == 13);
  CHECK(ops.contains("select"));
  CHECK(ops.contains("arithmetic"));
  CHECK_FALSE(ops.contains("SELECT"));
  Vocab v = ops.vocab();
  CHECK(v.size() == 17);
  CHECK(v.id_of("select") == 4);
  CHECK(v.id_of("arithmetic") == 16);
  CHECK_THROWS_AS(OperatorSet({"select", "select"}), std::invalid_argument);
}

TEST_CASE("build_vocab collects observed symbols after the reserved block") {
  std::vector<Example> corpus{make_example("a", {"DET", "NOUN"}, {"select", "filter"}),
                              make_example("b", {"NOUN", "VERB"}, {"select"})};
  Vocab pos = build_vocab(corpus, VocabSide::kPos);
  CHECK(pos.symbols() ==
        std::vector<std::string>{"<pad>", "<sos>", "<eos>", "<unk>", "DET", "NOUN", "VERB"});

  // Strict ops vocab is the fixed inventory, independent of corpus order.
  Vocab ops_a = build_vocab(corpus, VocabSide::kOps);
  std::swap(corpus[0], corpus[1]);
  Vocab ops_b = build_vocab(corpus, VocabSide::kOps);
  CHECK(ops_a.symbols() == ops_b.symbols());
  CHECK(ops_a.size() == 17);

  CHECK_THROWS_AS(build_vocab({}, VocabSide::kPos), std::invalid_argument);

  std::vector<Example> bad{make_example("r7", {"DET"}, {"frobnicate"})};
  try {
    build_vocab(bad, VocabSide::kOps);
    FAIL("expected validation error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("r7") != std::string::npos);
  }

  // Non-strict keeps unknown ops as observed symbols.
  Vocab loose = build_vocab(bad, VocabSide::kOps, false);
  CHECK(loose.contains("frobnicate"));
}

TEST_CASE("operator list parsing follows the bracketed convention") {
  CHECK(parse_operator_list("['select', 'filter']", "row") ==
        std::vector<std::string>{"select", "filter"});
  CHECK(parse_operator_list("['SELECT']", "row") == std::vector<std::string>{"select"});
  CHECK(parse_operator_list("[\"select\"]", "row") == std::vector<std::string>{"select"});
  CHECK(parse_operator_list("[ 'project' , 'union' ]", "row") ==
        std::vector<std::string>{"project", "union"});
  CHECK_THROWS_AS(parse_operator_list("[]", "row"), std::runtime_error);
  CHECK_THROWS_AS(parse_operator_list("select, filter", "row"), std::runtime_error);
  CHECK_THROWS_AS(parse_operator_list("", "row"), std::runtime_error);
  // Unknown operator in strict mode names the row.
  try {
    parse_operator_list("['frobnicate']", "row42");
    FAIL("expected validation error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("row42") != std::string::npos);
  }
  CHECK(parse_operator_list("['frobnicate']", "row42", false) ==
        std::vector<std::string>{"frobnicate"});
}

TEST_CASE("lexicon tagger is total with a default tag") {
  LexiconTagger tagger;
  tagger.add("return", "VERB");
  tagger.add("papers", "NOUN");
  CHECK(tag_pos({"return", "papers"}, tagger) == std::vector<std::string>{"VERB", "NOUN"});

  TagStats stats;
  auto tags = tag_pos({"return", "gizmo"}, tagger, &stats);
  CHECK(tags == std::vector<std::string>{"VERB", "NOUN"});
  CHECK(stats.tokens == 2);
  CHECK(stats.unknown == 1);

  CHECK_THROWS_AS(tag_pos({}, tagger), std::invalid_argument);
}

TEST_CASE("tokenize lowercases and splits punctuation") {
  CHECK(tokenize("What flights, if any?") ==
        std::vector<std::string>{"what", "flights", ",", "if", "any", "?"});
  CHECK(tokenize("don't stop") == std::vector<std::string>{"don't", "stop"});
  CHECK(tokenize("") == std::vector<std::string>{});
}

TEST_CASE("csv reader handles quoting") {
  std::istringstream in(
      "a,b,c\n"
      "1,\"x, y\",3\n"
      "4,\"he said \"\"hi\"\"\",6\n"
      "7,\"line\nbreak\",9\n");
  auto rows = read_csv(in);
  REQUIRE(rows.size() == 4);
  CHECK(rows[1][1] == "x, y");
  CHECK(rows[2][1] == "he said \"hi\"");
  CHECK(rows[3][1] == "line\nbreak");

  std::istringstream bad("a,\"unterminated\n");
  CHECK_THROWS_AS(read_csv(bad), std::runtime_error);
}

TEST_CASE("jsonl corpus round-trips exactly") {
  std::vector<Example> corpus{make_example("a", {"DET", "NOUN"}, {"select"}),
                              make_example("b", {"VERB"}, {"select", "filter"})};
  corpus[0].question = "what tests pass ?";
  std::string path = temp_path("corpus.jsonl");
  save_jsonl(corpus, path);
  auto back = load_jsonl(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "a");
  CHECK(back[0].pos == corpus[0].pos);
  CHECK(back[0].ops == corpus[0].ops);
  CHECK(back[0].question == corpus[0].question);
  CHECK_FALSE(back[1].question.has_value());
  std::remove(path.c_str());

  std::istringstream bad("{\"id\": \"x\", \"pos\": []}");
  CHECK_THROWS_AS(parse_jsonl(bad, "mem"), std::runtime_error);
}

TEST_CASE("batchify shapes and framing") {
  std::vector<Example> corpus;
  for (int i = 0; i < 20; ++i)
    corpus.push_back(make_example("e" + std::to_string(i), {"DET", "NOUN"}, {"select"}));
  Vocab pos_vocab = build_vocab(corpus, VocabSide::kPos);
  Vocab op_vocab = build_vocab(corpus, VocabSide::kOps);

  auto batches = batchify(corpus, pos_vocab, op_vocab, 10, 13);
  CHECK(batches.size() == 2);
  CHECK(batches[0].size() == 10);
  CHECK(batches[1].size() == 10);

  auto uneven = batchify(std::vector<Example>(corpus.begin(), corpus.begin() + 11), pos_vocab,
                         op_vocab, 5, 13);
  REQUIRE(uneven.size() == 3);
  CHECK(uneven[0].size() == 5);
  CHECK(uneven[1].size() == 5);
  CHECK(uneven[2].size() == 1);

  CHECK_THROWS_AS(batchify(corpus, pos_vocab, op_vocab, 0, 13), std::invalid_argument);
}

TEST_CASE("batchify pads, frames targets and masks real steps") {
  std::vector<Example> corpus{make_example("a", {"DET", "NOUN", "VERB"}, {"select", "filter"}),
                              make_example("b", {"NOUN"}, {"select"})};
  Vocab pos_vocab = build_vocab(corpus, VocabSide::kPos);
  Vocab op_vocab = build_vocab(corpus, VocabSide::kOps);
  auto batches = batchify(corpus, pos_vocab, op_vocab, 2, 5);
  REQUIRE(batches.size() == 1);
  const Batch& b = batches[0];

  // Both pos rows share the max length, short ones padded with PAD.
  CHECK(b.pos[0].size() == b.pos[1].size());
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t t = b.pos_len[k]; t < b.pos[k].size(); ++t)
      CHECK(b.pos[k][t] == kPadId);
  }

  // Target frames: SOS ops... EOS PAD..., all rows one shared length.
  int select_id = op_vocab.id_of("select");
  int filter_id = op_vocab.id_of("filter");
  CHECK(b.target[0].size() == b.target[1].size());
  for (std::size_t k = 0; k < 2; ++k) {
    const Example& ex = corpus[b.example_index[k]];
    const auto& frame = b.target[k];
    CHECK(frame[0] == kSosId);
    CHECK(frame[ex.ops.size() + 1] == kEosId);
    if (ex.id == "a") {
      CHECK(frame[1] == select_id);
      CHECK(frame[2] == filter_id);
    }
    // Mask covers exactly the steps predicting ops plus EOS.
    std::size_t real = 0;
    for (std::size_t t = 0; t < b.mask[k].size(); ++t)
      if (b.mask[k][t]) {
        ++real;
        CHECK(frame[t + 1] != kPadId);
      }
    CHECK(real == ex.ops.size() + 1);
  }
}

TEST_CASE("batchify is deterministic under the seed and counts unknowns") {
  std::vector<Example> corpus;
  for (int i = 0; i < 12; ++i)
    corpus.push_back(make_example("e" + std::to_string(i), {"DET"}, {"select"}));
  Vocab pos_vocab = build_vocab(corpus, VocabSide::kPos);
  Vocab op_vocab = build_vocab(corpus, VocabSide::kOps);

  auto a = batchify(corpus, pos_vocab, op_vocab, 5, 99);
  auto b = batchify(corpus, pos_vocab, op_vocab, 5, 99);
  auto c = batchify(corpus, pos_vocab, op_vocab, 5, 100);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].example_index == b[i].example_index);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].example_index != c[i].example_index) any_diff = true;
  CHECK(any_diff);  // different seed reorders 12 examples with high probability

  corpus[0].pos = {"XYZQ"};
  UnkStats stats;
  batchify(corpus, pos_vocab, op_vocab, 5, 99, &stats);
  CHECK(stats.pos_unk == 1);
  CHECK(stats.pos_tokens == 12);
}

TEST_CASE("bundled sample csv converts cleanly") {
  LexiconTagger tagger = LexiconTagger::load(data_path("lexicon.tsv"));
  CHECK(tagger.size() > 50);
  ConvertStats stats;
  auto corpus = convert_break_csv(data_path("break_sample.csv"), tagger, &stats);
  CHECK(corpus.size() == 50);
  CHECK(stats.rows == 50);
  CHECK(stats.skipped == 0);

  const OperatorSet& inventory = OperatorSet::qdmr();
  std::size_t total_ops = 0;
  for (const Example& ex : corpus) {
    CHECK_FALSE(ex.pos.empty());
    CHECK_FALSE(ex.ops.empty());
    CHECK(ex.pos.size() == tokenize(*ex.question).size());
    for (const auto& op : ex.ops) CHECK(inventory.contains(op));
    total_ops += ex.ops.size();
  }
  // Histogram totals match the per-example operator counts.
  std::size_t hist_total = 0;
  for (const auto& [op, n] : stats.operator_histogram) {
    CHECK(inventory.contains(op));
    hist_total += n;
  }
  CHECK(hist_total == total_ops);
}

TEST_CASE("converter skips malformed rows and keeps going") {
  std::string csv = temp_path("broken.csv");
  {
    std::ofstream out(csv);
    out << "question_id,question_text,decomposition,operators\n";
    out << "r1,good question ?,return things,\"['select']\"\n";
    out << "r2,bad ops,return things,\"['frobnicate']\"\n";
    out << "r3,,return things,\"['select']\"\n";
  }
  LexiconTagger tagger;
  tagger.add("good", "ADJ");
  tagger.add("question", "NOUN");
  tagger.add("?", "PUNCT");
  ConvertStats stats;
  auto corpus = convert_break_csv(csv, tagger, &stats);
  std::remove(csv.c_str());
  REQUIRE(corpus.size() == 1);
  CHECK(corpus[0].id == "r1");
  CHECK(stats.skipped == 2);
  REQUIRE(stats.skip_messages.size() == 2);
  CHECK(stats.skip_messages[0].find("line 3") != std::string::npos);
}
