#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qops/tensor.hpp"
#include "qops/vocab.hpp"

namespace qops {

// Binary tree shape over leaves [lo, hi); identity for the margin penalty is
// the span pair, so shapes can share subtree nodes freely.
struct TreeNode {
  std::size_t lo = 0;
  std::size_t hi = 0;
  std::shared_ptr<const TreeNode> left;
  std::shared_ptr<const TreeNode> right;

  bool leaf() const { return !left; }
  std::size_t num_leaves() const { return hi - lo; }
};

using TreePtr = std::shared_ptr<const TreeNode>;

TreePtr make_leaf(std::size_t i);
TreePtr make_node(TreePtr left, TreePtr right);

// All shapes over num_leaves leaves: Catalan(num_leaves - 1) trees in a
// deterministic order (split point ascending, left subtrees first).
std::vector<TreePtr> enumerate_trees(std::size_t num_leaves, std::size_t max_leaves = 10);

// Internal-node spans of a tree, the node identity set for delta.
std::set<std::pair<std::size_t, std::size_t>> internal_spans(const TreePtr& tree);

// Bracketed notation: leaf or "(tree tree)", whitespace-separated leaves,
// e.g. "((a b) (c d))".
struct ParsedTree {
  std::vector<std::string> leaves;
  TreePtr tree;
};

ParsedTree parse_tree(const std::string& text);
std::string format_tree(const TreePtr& tree, const std::vector<std::string>& leaves);

struct ScorerParams {
  Tensor e_leaf;   // leaf vocab x dim
  Tensor w;        // 2*dim x dim
  Tensor b1;       // 1 x dim
  Tensor w_score;  // dim x 1
  Tensor w_val;    // dim x 1

  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> all() const;
};

ScorerParams init_scorer(std::size_t leaf_vocab, std::size_t dim, std::uint64_t seed);

struct Combined {
  Tensor p;      // 1 x dim, coordinates in (-1, 1)
  Tensor s_d;    // 1 x 1
  Tensor val_d;  // 1 x 1
};

// p = tanh(concat(c1, c2) w + b1), s_d = p w_score, val_d = p w_val.
Combined combine(Tape& tape, const Tensor& c1, const Tensor& c2, const ScorerParams& params);

struct TreeScore {
  Tensor s;    // 1 x 1, sum of s_d over internal nodes
  Tensor val;  // 1 x 1, sum of val_d over internal nodes
  // (span, val_d) per internal node, bottom-up left-first order.
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, Tensor>> node_vals;
};

// Bottom-up evaluation; a single leaf has no decisions and scores (0, 0).
TreeScore tree_score(Tape& tape, const TreePtr& tree, const std::vector<Tensor>& leaf_embs,
                     const ScorerParams& params);

// Leaf 0; internal node = gold(left) + gold(right) + 1, so the root of an
// n-leaf tree carries n - 1.
int gold_valence(const TreePtr& tree);
std::map<std::pair<std::size_t, std::size_t>, int> gold_valence_map(const TreePtr& tree);

// lambda * #(internal spans of y absent from y_gold).
double delta(const TreePtr& y, const TreePtr& y_gold, double lambda);

struct MarginConfig {
  double lambda = 0.1;
  std::size_t max_leaves = 10;
  double valence_aux_weight = 0.0;  // squared-error pull toward gold valences

  void validate() const;
};

struct MarginResult {
  Tensor j;  // 1 x 1 on the tape, always <= 0
  TreePtr score_violator;
  TreePtr valence_violator;
  bool gold_is_score_argmax = false;
  bool gold_is_valence_argmax = false;
};

// J = s(gold) - max_y(s(y) + delta) + val(gold) - max_y(val(y) + delta) with
// both maxima over every shape, gold included; ties resolve to the first tree
// in enumeration order.
MarginResult margin_objective(Tape& tape, const std::vector<int>& leaf_ids, const TreePtr& gold,
                              const ScorerParams& params, const MarginConfig& config);

// Sum over gold internal nodes of (val_d - gold_valence)^2.
Tensor valence_aux_loss(Tape& tape, const TreePtr& gold, const std::vector<Tensor>& leaf_embs,
                        const ScorerParams& params);

struct TreeInstance {
  std::string id;
  std::vector<std::string> leaves;
  TreePtr gold;
};

// JSONL fields: id, leaves (symbol array), tree (bracketed). The leaves field
// must match the tree's own leaves.
std::vector<TreeInstance> load_tree_jsonl(const std::string& path);
void save_tree_jsonl(const std::vector<TreeInstance>& instances, const std::string& path);

struct TreeTrainConfig {
  std::size_t epochs = 200;
  double lr0 = 1e-2;
  std::uint64_t seed = 13;
  std::size_t dim = 4;
  MarginConfig margin;

  void validate() const;
};

struct TreeModel {
  std::size_t dim = 0;
  MarginConfig margin;
  std::vector<std::string> leaf_symbols;
  ScorerParams params;

  Vocab leaf_vocab() const { return Vocab::from_symbols(leaf_symbols); }
};

struct TreeEpochRecord {
  std::size_t epoch = 0;
  double mean_j = 0.0;      // mean J over instances, <= 0
  std::size_t solved = 0;   // instances where gold took both argmaxes
};

struct TreeTrainReport {
  std::vector<TreeEpochRecord> epochs;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

// Minimizes -J (plus the optional valence term) with Adam; one step per
// instance per epoch. Stops early once every instance reaches J = 0.
TreeModel train_tree(const TreeTrainConfig& config, const std::vector<TreeInstance>& instances,
                     TreeTrainReport* report = nullptr);

struct TreeEvalResult {
  double mean_j = 0.0;
  double solved_fraction = 0.0;
  std::size_t instances = 0;
};

TreeEvalResult eval_tree(const TreeModel& model, const std::vector<TreeInstance>& instances);

void save_tree(const std::string& path, const TreeModel& model);
TreeModel load_tree(const std::string& path);

}  // namespace qops
