#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "qops/rng.hpp"
#include "qops/training.hpp"
#include "qops/tree_scorer.hpp"
#include "support.hpp"

using namespace qops;
using qops::testing::temp_path;

namespace {

// dim = 1 parameters with hand-set weights; e_leaf rows are all 0.5.
ScorerParams crafted_params() {
  ScorerParams p;
  p.e_leaf = Tensor::from_data({4, 1}, {0.5, 0.5, 0.5, 0.5}, true);
  p.w = Tensor::from_data({2, 1}, {1.0, 1.0}, true);
  p.b1 = Tensor::zeros({1, 1}, true);
  p.w_score = Tensor::from_data({1, 1}, {2.0}, true);
  p.w_val = Tensor::from_data({1, 1}, {-1.0}, true);
  return p;
}

void zero_all(const ScorerParams& params) {
  for (Tensor t : params.all()) std::fill(t.data().begin(), t.data().end(), 0.0);
}

std::vector<TreeInstance> two_instances() {
  TreeInstance a;
  a.id = "t0";
  a.leaves = {"find", "old", "towers", "there"};
  a.gold = make_node(make_node(make_leaf(0), make_leaf(1)), make_node(make_leaf(2), make_leaf(3)));
  TreeInstance b;
  b.id = "t1";
  b.leaves = {"list", "red", "rocks"};
  b.gold = make_node(make_leaf(0), make_node(make_leaf(1), make_leaf(2)));
  return {a, b};
}

}  // namespace

TEST_CASE("leaves and nodes compose over adjacent spans") {
  TreePtr leaf = make_leaf(2);
  CHECK(leaf->leaf());
  CHECK(leaf->lo == 2);
  CHECK(leaf->hi == 3);
  CHECK(leaf->num_leaves() == 1);

  TreePtr node = make_node(make_leaf(0), make_leaf(1));
  CHECK(!node->leaf());
  CHECK(node->lo == 0);
  CHECK(node->hi == 2);
  CHECK(node->num_leaves() == 2);

  CHECK_THROWS_AS(make_node(make_leaf(0), make_leaf(2)), std::logic_error);
  CHECK_THROWS_AS(make_node(nullptr, make_leaf(0)), std::logic_error);
}

TEST_CASE("combine matches its closed form") {
  ScorerParams p = crafted_params();
  Tape tape;
  Tensor half = Tensor::row_vector({0.5});
  Combined c = combine(tape, half, half, p);
  double t1 = std::tanh(1.0);
  CHECK(c.p.value() == doctest::Approx(t1).epsilon(1e-12));
  CHECK(c.s_d.value() == doctest::Approx(2.0 * t1).epsilon(1e-12));
  CHECK(c.val_d.value() == doctest::Approx(-t1).epsilon(1e-12));

  Tensor wide = Tensor::row_vector({0.5, 0.5});
  CHECK_THROWS_AS(combine(tape, half, wide, p), std::invalid_argument);
}

TEST_CASE("tree enumeration counts follow the Catalan recurrence") {
  // C(1) = 1, C(k) = sum_i C(i) C(k - i); recomputed here as the oracle.
  std::vector<std::size_t> catalan(7, 0);
  catalan[1] = 1;
  for (std::size_t k = 2; k <= 6; ++k)
    for (std::size_t i = 1; i < k; ++i) catalan[k] += catalan[i] * catalan[k - i];
  REQUIRE(catalan[4] == 5);

  for (std::size_t n = 1; n <= 6; ++n) {
    auto trees = enumerate_trees(n, 10);
    CHECK(trees.size() == catalan[n]);
    std::set<std::set<std::pair<std::size_t, std::size_t>>> shapes;
    for (const TreePtr& t : trees) {
      CHECK(t->lo == 0);
      CHECK(t->hi == n);
      shapes.insert(internal_spans(t));
    }
    CHECK(shapes.size() == trees.size());  // no duplicate shapes
  }

  SUBCASE("the order is deterministic, split point ascending") {
    auto trees = enumerate_trees(3, 10);
    REQUIRE(trees.size() == 2);
    std::set<std::pair<std::size_t, std::size_t>> first{{1, 3}, {0, 3}};
    std::set<std::pair<std::size_t, std::size_t>> second{{0, 2}, {0, 3}};
    CHECK(internal_spans(trees[0]) == first);
    CHECK(internal_spans(trees[1]) == second);
  }

  CHECK_THROWS_AS(enumerate_trees(0, 10), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_trees(11, 10), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_trees(5, 4), std::invalid_argument);
}

TEST_CASE("internal spans identify a shape") {
  TreePtr tree =
      make_node(make_node(make_leaf(0), make_leaf(1)), make_node(make_leaf(2), make_leaf(3)));
  std::set<std::pair<std::size_t, std::size_t>> want{{0, 2}, {2, 4}, {0, 4}};
  CHECK(internal_spans(tree) == want);
  CHECK(internal_spans(make_leaf(0)).empty());
}

TEST_CASE("gold valence counts the internal descendants") {
  CHECK(gold_valence(make_leaf(3)) == 0);
  for (std::size_t n = 2; n <= 5; ++n) {
    for (const TreePtr& t : enumerate_trees(n, 10)) {
      CHECK(gold_valence(t) == static_cast<int>(n) - 1);
      auto vals = gold_valence_map(t);
      // Each internal node carries left + right + 1.
      for (const auto& [span, v] : vals) {
        if (span.second - span.first == 1) {
          CHECK(v == 0);
        } else {
          CHECK(v >= 1);
        }
      }
      CHECK(vals.at({0, n}) == static_cast<int>(n) - 1);
    }
  }
}

TEST_CASE("delta counts candidate spans absent from gold") {
  TreePtr left = make_node(make_node(make_node(make_leaf(0), make_leaf(1)), make_leaf(2)),
                           make_leaf(3));
  TreePtr right = make_node(make_leaf(0),
                            make_node(make_leaf(1), make_node(make_leaf(2), make_leaf(3))));
  CHECK(delta(left, left, 0.1) == 0.0);
  CHECK(delta(left, right, 0.1) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(delta(right, left, 0.25) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(delta(left, right, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(delta(left, right, -1.0), std::invalid_argument);
}

TEST_CASE("bracketed trees parse and format back to themselves") {
  ParsedTree p = parse_tree("((a b) (c d))");
  CHECK(p.leaves == std::vector<std::string>{"a", "b", "c", "d"});
  std::set<std::pair<std::size_t, std::size_t>> want{{0, 2}, {2, 4}, {0, 4}};
  CHECK(internal_spans(p.tree) == want);
  CHECK(format_tree(p.tree, p.leaves) == "((a b) (c d))");

  ParsedTree leaf = parse_tree("x");
  CHECK(leaf.leaves == std::vector<std::string>{"x"});
  CHECK(leaf.tree->leaf());
  CHECK(format_tree(leaf.tree, leaf.leaves) == "x");

  ParsedTree deep = parse_tree("(a (b (c d)))");
  CHECK(format_tree(deep.tree, deep.leaves) == "(a (b (c d)))");

  CHECK_THROWS_AS(parse_tree(""), std::runtime_error);
  CHECK_THROWS_AS(parse_tree("(a)"), std::runtime_error);
  CHECK_THROWS_AS(parse_tree("(a b"), std::runtime_error);
  CHECK_THROWS_AS(parse_tree("a b"), std::runtime_error);
  CHECK_THROWS_AS(parse_tree("(a b))"), std::runtime_error);
  CHECK_THROWS_AS(parse_tree("(a b c)"), std::runtime_error);
}

TEST_CASE("a single leaf scores zero on the tape") {
  ScorerParams p = init_scorer(4, 3, 1);
  Tape tape;
  Tensor emb = embedding_lookup(tape, p.e_leaf, 2);
  TreeScore ts = tree_score(tape, make_leaf(0), {emb}, p);
  CHECK(ts.s.value() == 0.0);
  CHECK(ts.val.value() == 0.0);
  CHECK(ts.node_vals.empty());
  CHECK_NOTHROW(tape.backward(ts.s));
}

TEST_CASE("the margin objective is never positive") {
  Rng rng(7);
  for (int draw = 0; draw < 100; ++draw) {
    std::size_t n = 3 + static_cast<std::size_t>(rng.uniform() * 3.0);  // 3..5 leaves
    auto shapes = enumerate_trees(n, 10);
    const TreePtr& gold = shapes[static_cast<std::size_t>(rng.uniform() * shapes.size())];
    std::vector<int> leaf_ids;
    for (std::size_t i = 0; i < n; ++i)
      leaf_ids.push_back(static_cast<int>(rng.uniform() * 6.0));
    ScorerParams params = init_scorer(6, 3, 1000 + static_cast<std::uint64_t>(draw));

    Tape tape;
    MarginConfig cfg;
    cfg.lambda = 0.1;
    MarginResult res = margin_objective(tape, leaf_ids, gold, params, cfg);
    CHECK(res.j.value() <= 0.0);
    CHECK(res.score_violator != nullptr);
    CHECK(res.valence_violator != nullptr);
    if (res.gold_is_score_argmax && res.gold_is_valence_argmax) CHECK(res.j.value() == 0.0);
  }
}

TEST_CASE("zero parameters reduce the objective to the delta maxima") {
  // Every tree scores zero, so each max term is lambda times the largest
  // number of non-gold spans; recomputed here by brute force.
  TreePtr gold = make_node(make_node(make_node(make_leaf(0), make_leaf(1)), make_leaf(2)),
                           make_leaf(3));
  MarginConfig cfg;
  cfg.lambda = 0.25;
  auto gold_spans = internal_spans(gold);
  std::size_t worst = 0;
  for (const TreePtr& y : enumerate_trees(4, 10)) {
    std::size_t missing = 0;
    for (const auto& span : internal_spans(y))
      if (!gold_spans.count(span)) ++missing;
    worst = std::max(worst, missing);
  }
  REQUIRE(worst == 2);

  ScorerParams params = init_scorer(4, 3, 5);
  zero_all(params);
  Tape tape;
  MarginResult res = margin_objective(tape, {0, 1, 2, 3}, gold, params, cfg);
  CHECK(res.j.value() ==
        doctest::Approx(-2.0 * cfg.lambda * static_cast<double>(worst)).epsilon(1e-12));
  CHECK(!res.gold_is_score_argmax);
}

TEST_CASE("the margin objective validates its inputs") {
  ScorerParams params = init_scorer(4, 3, 2);
  MarginConfig cfg;
  Tape tape;
  TreePtr gold = make_node(make_leaf(0), make_leaf(1));
  CHECK_THROWS_AS(margin_objective(tape, {0, 1, 2}, gold, params, cfg), std::invalid_argument);
  CHECK_THROWS_AS(margin_objective(tape, {0, 1}, nullptr, params, cfg), std::logic_error);
  MarginConfig bad = cfg;
  bad.lambda = 0.0;
  CHECK_THROWS_AS(margin_objective(tape, {0, 1}, gold, params, bad), std::invalid_argument);
}

TEST_CASE("the margin gradient passes finite differences away from ties") {
  TreePtr gold = make_node(make_leaf(0), make_node(make_leaf(1), make_leaf(2)));
  ScorerParams params = init_scorer(5, 3, 23);
  // Scaled away from the tiny init so no gradient sits at roundoff level and
  // the augmented argmaxes stay put under the probe steps.
  for (Tensor t : params.all())
    for (double& v : t.data()) v *= 12.0;
  MarginConfig cfg;
  cfg.lambda = 0.1;
  auto f = [&](Tape& tape) {
    MarginResult res = margin_objective(tape, {0, 3, 4}, gold, params, cfg);
    return scale(tape, res.j, -1.0);
  };
  double err = grad_check(f, params.all(), 1e-4);
  CHECK(err <= 1e-4);
}

TEST_CASE("the valence auxiliary is the squared error to gold valences") {
  ScorerParams p = crafted_params();
  TreePtr gold = make_node(make_leaf(0), make_leaf(1));
  Tape tape;
  std::vector<Tensor> embs{embedding_lookup(tape, p.e_leaf, 0),
                           embedding_lookup(tape, p.e_leaf, 1)};
  Tensor aux = valence_aux_loss(tape, gold, embs, p);
  // Root valence 1; the crafted combine gives val_d = -tanh(1).
  double want = std::pow(-std::tanh(1.0) - 1.0, 2.0);
  CHECK(aux.value() == doctest::Approx(want).epsilon(1e-12));

  SUBCASE("a bare leaf contributes nothing") {
    Tensor zero = valence_aux_loss(tape, make_leaf(0), {embs[0]}, p);
    CHECK(zero.value() == 0.0);
  }
}

TEST_CASE("tree jsonl round-trips and validates the leaves field") {
  auto instances = two_instances();
  std::string path = temp_path("trees.jsonl");
  save_tree_jsonl(instances, path);
  auto back = load_tree_jsonl(path);
  REQUIRE(back.size() == instances.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == instances[i].id);
    CHECK(back[i].leaves == instances[i].leaves);
    CHECK(internal_spans(back[i].gold) == internal_spans(instances[i].gold));
  }

  SUBCASE("a leaves field that contradicts the tree is refused") {
    std::ofstream(path) << R"j({"id": "x", "leaves": ["a", "b", "c"], "tree": "(a b)"})j" << "\n";
    CHECK_THROWS_WITH_AS(load_tree_jsonl(path), doctest::Contains(":1"), std::runtime_error);
  }
  SUBCASE("busted json carries the line number") {
    std::ofstream(path) << R"({"id": "x", "leaves": ["a"], "tree": "a"})" << "\n{nope\n";
    CHECK_THROWS_WITH_AS(load_tree_jsonl(path), doctest::Contains(":2"), std::runtime_error);
  }
  SUBCASE("a missing field is refused") {
    std::ofstream(path) << R"j({"id": "x", "tree": "(a b)"})j" << "\n";
    CHECK_THROWS_AS(load_tree_jsonl(path), std::runtime_error);
  }
  std::remove(path.c_str());
}

TEST_CASE("tree training reaches a zero margin and stops early") {
  auto instances = two_instances();
  TreeTrainConfig cfg;
  cfg.epochs = 300;
  cfg.lr0 = 1e-2;
  cfg.seed = 13;
  cfg.dim = 4;
  cfg.margin.lambda = 0.1;
  TreeTrainReport report;
  TreeModel model = train_tree(cfg, instances, &report);
  REQUIRE(!report.epochs.empty());
  CHECK(report.epochs.back().mean_j == 0.0);
  CHECK(report.epochs.back().solved == instances.size());
  CHECK(report.epochs.size() < 300);  // early stop
  for (const auto& rec : report.epochs) CHECK(rec.mean_j <= 0.0);

  TreeEvalResult eval = eval_tree(model, instances);
  CHECK(eval.mean_j == 0.0);
  CHECK(eval.solved_fraction == 1.0);
  CHECK(eval.instances == instances.size());
  CHECK_THROWS_AS(eval_tree(model, {}), std::invalid_argument);
}

TEST_CASE("tree training is deterministic in the seed") {
  auto instances = two_instances();
  TreeTrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 5;
  cfg.dim = 3;
  TreeTrainReport r1, r2;
  TreeModel m1 = train_tree(cfg, instances, &r1);
  TreeModel m2 = train_tree(cfg, instances, &r2);
  REQUIRE(r1.epochs.size() == r2.epochs.size());
  for (std::size_t e = 0; e < r1.epochs.size(); ++e) {
    CHECK(r1.epochs[e].mean_j == r2.epochs[e].mean_j);
    CHECK(r1.epochs[e].solved == r2.epochs[e].solved);
  }
  auto p1 = m1.params.all(), p2 = m2.params.all();
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].data() == p2[i].data());

  CHECK_THROWS_AS(train_tree(cfg, {}), std::invalid_argument);
  TreeTrainConfig bad = cfg;
  bad.dim = 0;
  CHECK_THROWS_AS(train_tree(bad, instances), std::invalid_argument);
}

TEST_CASE("tree checkpoints round-trip the model") {
  auto instances = two_instances();
  TreeTrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 3;
  cfg.dim = 3;
  cfg.margin.lambda = 0.2;
  cfg.margin.valence_aux_weight = 0.1;
  TreeModel model = train_tree(cfg, instances);

  std::string path = temp_path("tree.qops");
  save_tree(path, model);
  TreeModel back = load_tree(path);
  CHECK(back.dim == model.dim);
  CHECK(back.margin.lambda == model.margin.lambda);
  CHECK(back.margin.max_leaves == model.margin.max_leaves);
  CHECK(back.margin.valence_aux_weight == model.margin.valence_aux_weight);
  CHECK(back.leaf_symbols == model.leaf_symbols);
  auto got = back.params.named();
  auto want = model.params.named();
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].first == want[i].first);
    CHECK(got[i].second.data() == want[i].second.data());
  }

  TreeEvalResult a = eval_tree(model, instances);
  TreeEvalResult b = eval_tree(back, instances);
  CHECK(a.mean_j == b.mean_j);
  CHECK(a.solved_fraction == b.solved_fraction);

  SUBCASE("a tree checkpoint is refused by the seq2seq loader") {
    CHECK_THROWS_WITH_AS(load_seq2seq(path), doctest::Contains("TREE"), std::runtime_error);
  }
  std::remove(path.c_str());
}
