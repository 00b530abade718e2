#include "qops/tree_scorer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "qops/checkpoint.hpp"
#include "qops/rng.hpp"
#include "qops/seq2seq.hpp"
#include "qops/training.hpp"

namespace qops {

TreePtr make_leaf(std::size_t i) {
  auto node = std::make_shared<TreeNode>();
  node->lo = i;
  node->hi = i + 1;
  return node;
}

TreePtr make_node(TreePtr left, TreePtr right) {
  if (!left || !right) throw std::logic_error("make_node: null child");
  if (left->hi != right->lo) throw std::logic_error("make_node: children spans not adjacent");
  auto node = std::make_shared<TreeNode>();
  node->lo = left->lo;
  node->hi = right->hi;
  node->left = std::move(left);
  node->right = std::move(right);
  return node;
}

namespace {

using SpanTrees = std::map<std::pair<std::size_t, std::size_t>, std::vector<TreePtr>>;

const std::vector<TreePtr>& enumerate_span(std::size_t lo, std::size_t hi, SpanTrees& memo) {
  auto key = std::make_pair(lo, hi);
  auto it = memo.find(key);
  if (it != memo.end()) return it->second;
  std::vector<TreePtr> out;
  if (hi - lo == 1) {
    out.push_back(make_leaf(lo));
  } else {
    for (std::size_t m = lo + 1; m < hi; ++m)
      for (const TreePtr& l : enumerate_span(lo, m, memo))
        for (const TreePtr& r : enumerate_span(m, hi, memo)) out.push_back(make_node(l, r));
  }
  return memo.emplace(key, std::move(out)).first->second;
}

}  // namespace

std::vector<TreePtr> enumerate_trees(std::size_t num_leaves, std::size_t max_leaves) {
  if (num_leaves == 0) throw std::invalid_argument("enumerate_trees: zero leaves");
  if (num_leaves > max_leaves)
    throw std::invalid_argument("enumerate_trees: " + std::to_string(num_leaves) +
                                " leaves exceed the max_leaves capacity of " +
                                std::to_string(max_leaves));
  SpanTrees memo;
  return enumerate_span(0, num_leaves, memo);
}

std::set<std::pair<std::size_t, std::size_t>> internal_spans(const TreePtr& tree) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  if (!tree) throw std::logic_error("internal_spans: null tree");
  if (tree->leaf()) return out;
  auto l = internal_spans(tree->left);
  auto r = internal_spans(tree->right);
  out.insert(l.begin(), l.end());
  out.insert(r.begin(), r.end());
  out.emplace(tree->lo, tree->hi);
  return out;
}

namespace {

std::vector<std::string> tree_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    if (ch == '(' || ch == ')') {
      if (!cur.empty()) {
        tokens.push_back(cur);
        cur.clear();
      }
      tokens.emplace_back(1, ch);
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) {
        tokens.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

TreePtr parse_node(const std::vector<std::string>& tokens, std::size_t& pos,
                   std::vector<std::string>& leaves) {
  if (pos >= tokens.size()) throw std::runtime_error("parse_tree: unexpected end of input");
  const std::string& tok = tokens[pos];
  if (tok == ")") throw std::runtime_error("parse_tree: unexpected ')'");
  if (tok == "(") {
    ++pos;
    TreePtr left = parse_node(tokens, pos, leaves);
    TreePtr right = parse_node(tokens, pos, leaves);
    if (pos >= tokens.size() || tokens[pos] != ")")
      throw std::runtime_error("parse_tree: expected ')' after two children");
    ++pos;
    return make_node(left, right);
  }
  ++pos;
  leaves.push_back(tok);
  return make_leaf(leaves.size() - 1);
}

}  // namespace

ParsedTree parse_tree(const std::string& text) {
  auto tokens = tree_tokens(text);
  if (tokens.empty()) throw std::runtime_error("parse_tree: empty input");
  ParsedTree out;
  std::size_t pos = 0;
  out.tree = parse_node(tokens, pos, out.leaves);
  if (pos != tokens.size())
    throw std::runtime_error("parse_tree: trailing tokens after the tree");
  return out;
}

std::string format_tree(const TreePtr& tree, const std::vector<std::string>& leaves) {
  if (!tree) throw std::logic_error("format_tree: null tree");
  if (tree->leaf()) {
    if (tree->lo >= leaves.size()) throw std::out_of_range("format_tree: leaf index out of range");
    return leaves[tree->lo];
  }
  return "(" + format_tree(tree->left, leaves) + " " + format_tree(tree->right, leaves) + ")";
}

std::vector<std::pair<std::string, Tensor>> ScorerParams::named() const {
  return {{"e_leaf", e_leaf}, {"w", w}, {"b1", b1}, {"w_score", w_score}, {"w_val", w_val}};
}

std::vector<Tensor> ScorerParams::all() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

ScorerParams init_scorer(std::size_t leaf_vocab, std::size_t dim, std::uint64_t seed) {
  if (leaf_vocab == 0 || dim == 0)
    throw std::invalid_argument("init_scorer: vocab and dim must be positive");
  Rng rng(seed);
  ScorerParams p;
  p.e_leaf = init_uniform({leaf_vocab, dim}, rng);
  p.w = init_uniform({2 * dim, dim}, rng);
  p.b1 = Tensor::zeros({1, dim}, true);
  p.w_score = init_uniform({dim, 1}, rng);
  p.w_val = init_uniform({dim, 1}, rng);
  return p;
}

Combined combine(Tape& tape, const Tensor& c1, const Tensor& c2, const ScorerParams& params) {
  if (c1.cols() != c2.cols())
    throw std::invalid_argument("combine: child widths differ");
  Combined out;
  out.p = tanh(tape, add(tape, matmul(tape, concat(tape, {c1, c2}), params.w), params.b1));
  out.s_d = matmul(tape, out.p, params.w_score);
  out.val_d = matmul(tape, out.p, params.w_val);
  return out;
}

namespace {

Tensor rep_of(Tape& tape, const TreePtr& node, const std::vector<Tensor>& leaf_embs,
              const ScorerParams& params, TreeScore& acc, std::vector<Tensor>& s_parts,
              std::vector<Tensor>& val_parts) {
  if (node->leaf()) {
    if (node->lo >= leaf_embs.size())
      throw std::out_of_range("tree_score: leaf index outside the embedding list");
    return leaf_embs[node->lo];
  }
  Tensor l = rep_of(tape, node->left, leaf_embs, params, acc, s_parts, val_parts);
  Tensor r = rep_of(tape, node->right, leaf_embs, params, acc, s_parts, val_parts);
  Combined c = combine(tape, l, r, params);
  s_parts.push_back(c.s_d);
  val_parts.push_back(c.val_d);
  acc.node_vals.emplace_back(std::make_pair(node->lo, node->hi), c.val_d);
  return c.p;
}

Tensor sum_parts(Tape& tape, std::vector<Tensor>& parts, const Tensor& fallback_src) {
  if (parts.empty()) return scale(tape, sum(tape, fallback_src), 0.0);  // on-tape zero
  if (parts.size() == 1) return parts.front();
  return sum(tape, concat(tape, parts));
}

}  // namespace

TreeScore tree_score(Tape& tape, const TreePtr& tree, const std::vector<Tensor>& leaf_embs,
                     const ScorerParams& params) {
  if (!tree) throw std::logic_error("tree_score: null tree");
  if (leaf_embs.empty()) throw std::invalid_argument("tree_score: no leaf embeddings");
  TreeScore out;
  std::vector<Tensor> s_parts, val_parts;
  rep_of(tape, tree, leaf_embs, params, out, s_parts, val_parts);
  out.s = sum_parts(tape, s_parts, leaf_embs.front());
  out.val = sum_parts(tape, val_parts, leaf_embs.front());
  return out;
}

int gold_valence(const TreePtr& tree) {
  if (!tree) throw std::logic_error("gold_valence: null tree");
  if (tree->leaf()) return 0;
  return gold_valence(tree->left) + gold_valence(tree->right) + 1;
}

std::map<std::pair<std::size_t, std::size_t>, int> gold_valence_map(const TreePtr& tree) {
  std::map<std::pair<std::size_t, std::size_t>, int> out;
  if (!tree) throw std::logic_error("gold_valence_map: null tree");
  out[{tree->lo, tree->hi}] = gold_valence(tree);
  if (!tree->leaf()) {
    auto l = gold_valence_map(tree->left);
    auto r = gold_valence_map(tree->right);
    out.insert(l.begin(), l.end());
    out.insert(r.begin(), r.end());
  }
  return out;
}

double delta(const TreePtr& y, const TreePtr& y_gold, double lambda) {
  if (lambda <= 0.0) throw std::invalid_argument("delta: lambda must be positive");
  auto gold_spans = internal_spans(y_gold);
  std::size_t missing = 0;
  for (const auto& span : internal_spans(y))
    if (!gold_spans.count(span)) ++missing;
  return lambda * static_cast<double>(missing);
}

void MarginConfig::validate() const {
  if (lambda <= 0.0) throw std::invalid_argument("lambda must be positive");
  if (max_leaves == 0) throw std::invalid_argument("max_leaves must be positive");
  if (valence_aux_weight < 0.0)
    throw std::invalid_argument("valence_aux_weight must be nonnegative");
}

MarginResult margin_objective(Tape& tape, const std::vector<int>& leaf_ids, const TreePtr& gold,
                              const ScorerParams& params, const MarginConfig& config) {
  config.validate();
  if (!gold) throw std::logic_error("margin_objective: null gold tree");
  if (leaf_ids.size() != gold->num_leaves())
    throw std::invalid_argument("margin_objective: leaf count does not match the gold tree");

  std::vector<Tensor> leaf_embs;
  leaf_embs.reserve(leaf_ids.size());
  for (int id : leaf_ids)
    leaf_embs.push_back(embedding_lookup(tape, params.e_leaf, static_cast<std::size_t>(id)));

  auto candidates = enumerate_trees(leaf_ids.size(), config.max_leaves);
  auto gold_spans = internal_spans(gold);

  std::vector<TreeScore> scores;
  std::vector<double> deltas;
  scores.reserve(candidates.size());
  deltas.reserve(candidates.size());
  std::size_t gold_index = candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scores.push_back(tree_score(tape, candidates[i], leaf_embs, params));
    deltas.push_back(delta(candidates[i], gold, config.lambda));
    if (internal_spans(candidates[i]) == gold_spans) gold_index = i;
  }
  if (gold_index == candidates.size())
    throw std::logic_error("margin_objective: gold tree missing from the enumeration");

  auto argmax_aug = [&](auto value_of) {
    std::size_t best = 0;
    double best_v = value_of(0) + deltas[0];
    for (std::size_t i = 1; i < scores.size(); ++i) {
      double v = value_of(i) + deltas[i];
      if (v > best_v) {
        best = i;
        best_v = v;
      }
    }
    return best;
  };
  std::size_t s_best = argmax_aug([&](std::size_t i) { return scores[i].s.value(); });
  std::size_t v_best = argmax_aug([&](std::size_t i) { return scores[i].val.value(); });

  MarginResult out;
  out.score_violator = candidates[s_best];
  out.valence_violator = candidates[v_best];
  out.gold_is_score_argmax = s_best == gold_index;
  out.gold_is_valence_argmax = v_best == gold_index;
  Tensor s_term =
      sub(tape, scores[gold_index].s, affine(tape, scores[s_best].s, 1.0, deltas[s_best]));
  Tensor v_term =
      sub(tape, scores[gold_index].val, affine(tape, scores[v_best].val, 1.0, deltas[v_best]));
  out.j = add(tape, s_term, v_term);
  return out;
}

Tensor valence_aux_loss(Tape& tape, const TreePtr& gold, const std::vector<Tensor>& leaf_embs,
                        const ScorerParams& params) {
  TreeScore ts = tree_score(tape, gold, leaf_embs, params);
  auto gold_vals = gold_valence_map(gold);
  std::vector<Tensor> errors;
  for (auto& [span, val_d] : ts.node_vals) {
    Tensor diff = affine(tape, val_d, 1.0, -static_cast<double>(gold_vals.at(span)));
    errors.push_back(mul(tape, diff, diff));
  }
  if (errors.empty()) return scale(tape, ts.s, 0.0);
  if (errors.size() == 1) return errors.front();
  return sum(tape, concat(tape, errors));
}

std::vector<TreeInstance> load_tree_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_tree_jsonl: cannot open '" + path + "'");
  std::vector<TreeInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    TreeInstance inst;
    std::string tree_text;
    try {
      inst.id = j.at("id").get<std::string>();
      inst.leaves = j.at("leaves").get<std::vector<std::string>>();
      tree_text = j.at("tree").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ParsedTree parsed = parse_tree(tree_text);
    if (parsed.leaves != inst.leaves)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": leaves field does not match the tree");
    inst.gold = parsed.tree;
    out.push_back(std::move(inst));
  }
  return out;
}

void save_tree_jsonl(const std::vector<TreeInstance>& instances, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_tree_jsonl: cannot open '" + path + "'");
  for (const TreeInstance& inst : instances) {
    nlohmann::json j;
    j["id"] = inst.id;
    j["leaves"] = inst.leaves;
    j["tree"] = format_tree(inst.gold, inst.leaves);
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_tree_jsonl: write to '" + path + "' failed");
}

void TreeTrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (lr0 <= 0.0) throw std::invalid_argument("lr0 must be positive");
  if (dim == 0) throw std::invalid_argument("dim must be positive");
  margin.validate();
}

namespace {

Vocab leaf_vocab_of(const std::vector<TreeInstance>& instances) {
  Vocab v;
  for (const TreeInstance& inst : instances)
    for (const auto& s : inst.leaves) v.add(s);
  return v;
}

}  // namespace

TreeModel train_tree(const TreeTrainConfig& config, const std::vector<TreeInstance>& instances,
                     TreeTrainReport* report) {
  config.validate();
  if (instances.empty()) throw std::invalid_argument("train_tree: empty instance list");
  auto t_start = std::chrono::steady_clock::now();

  TreeModel model;
  model.dim = config.dim;
  model.margin = config.margin;
  Vocab vocab = leaf_vocab_of(instances);
  model.leaf_symbols = vocab.symbols();
  model.params = init_scorer(vocab.size(), config.dim, config.seed);
  std::vector<Tensor> all_params = model.params.all();
  AdamState adam(all_params);

  if (report) {
    report->epochs.clear();
    report->seed = config.seed;
  }

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double j_sum = 0.0;
    std::size_t solved = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const TreeInstance& inst = instances[i];
      std::vector<int> leaf_ids;
      for (const auto& s : inst.leaves) leaf_ids.push_back(vocab.id_of(s));
      Tape tape;
      MarginResult res = margin_objective(tape, leaf_ids, inst.gold, model.params, config.margin);
      Tensor loss = scale(tape, res.j, -1.0);
      if (config.margin.valence_aux_weight > 0.0) {
        std::vector<Tensor> leaf_embs;
        for (int id : leaf_ids)
          leaf_embs.push_back(
              embedding_lookup(tape, model.params.e_leaf, static_cast<std::size_t>(id)));
        Tensor aux = valence_aux_loss(tape, inst.gold, leaf_embs, model.params);
        loss = add(tape, loss, scale(tape, aux, config.margin.valence_aux_weight));
      }
      double j_value = res.j.value();
      if (!std::isfinite(j_value))
        throw std::runtime_error("train_tree: non-finite objective at epoch " +
                                 std::to_string(epoch) + " instance " + std::to_string(i));
      j_sum += j_value;
      if (res.gold_is_score_argmax && res.gold_is_valence_argmax) ++solved;
      tape.backward(loss);
      adam_step(all_params, adam, config.lr0);
    }

    if (report) {
      TreeEpochRecord rec;
      rec.epoch = epoch;
      rec.mean_j = j_sum / static_cast<double>(instances.size());
      rec.solved = solved;
      report->epochs.push_back(rec);
    }
    if (solved == instances.size() && j_sum == 0.0) break;
  }

  if (report)
    report->wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return model;
}

TreeEvalResult eval_tree(const TreeModel& model, const std::vector<TreeInstance>& instances) {
  if (instances.empty()) throw std::invalid_argument("eval_tree: empty instance list");
  Vocab vocab = model.leaf_vocab();
  TreeEvalResult out;
  out.instances = instances.size();
  std::size_t solved = 0;
  double j_sum = 0.0;
  for (const TreeInstance& inst : instances) {
    std::vector<int> leaf_ids;
    for (const auto& s : inst.leaves) leaf_ids.push_back(vocab.id_of(s));
    Tape tape;
    MarginResult res = margin_objective(tape, leaf_ids, inst.gold, model.params, model.margin);
    j_sum += res.j.value();
    if (res.gold_is_score_argmax && res.gold_is_valence_argmax) ++solved;
  }
  out.mean_j = j_sum / static_cast<double>(instances.size());
  out.solved_fraction = static_cast<double>(solved) / static_cast<double>(instances.size());
  return out;
}

void save_tree(const std::string& path, const TreeModel& model) {
  Checkpoint ckpt;
  ckpt.section = "TREE";
  ckpt.config["dim"] = std::to_string(model.dim);
  {
    std::ostringstream ss;
    ss.precision(17);
    ss << model.margin.lambda;
    ckpt.config["lambda"] = ss.str();
    std::ostringstream ws;
    ws.precision(17);
    ws << model.margin.valence_aux_weight;
    ckpt.config["valence_aux_weight"] = ws.str();
  }
  ckpt.config["max_leaves"] = std::to_string(model.margin.max_leaves);
  ckpt.config["leaf_vocab"] = join_list(model.leaf_symbols);
  ckpt.tensors = model.params.named();
  save_checkpoint(path, ckpt);
}

TreeModel load_tree(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.section != "TREE")
    throw std::runtime_error("load_tree: '" + path + "' holds a '" + ckpt.section +
                             "' section, not TREE");
  TreeModel model;
  model.dim = config_get_size(ckpt, "dim");
  model.margin.lambda = config_get_double(ckpt, "lambda");
  model.margin.max_leaves = config_get_size(ckpt, "max_leaves");
  model.margin.valence_aux_weight = config_get_double(ckpt, "valence_aux_weight");
  model.leaf_symbols = split_list(config_get(ckpt, "leaf_vocab"));
  model.params = init_scorer(model.leaf_symbols.size(), model.dim, 0);
  auto expected = model.params.named();
  if (expected.size() != ckpt.tensors.size())
    throw std::runtime_error("load_tree: expected " + std::to_string(expected.size()) +
                             " tensors, file holds " + std::to_string(ckpt.tensors.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    auto& [want_name, want] = expected[i];
    auto& [got_name, got] = ckpt.tensors[i];
    if (want_name != got_name)
      throw std::runtime_error("load_tree: tensor " + std::to_string(i) + " is '" + got_name +
                               "', expected '" + want_name + "'");
    if (want.shape() != got.shape())
      throw std::runtime_error("load_tree: tensor '" + got_name +
                               "' shape does not match the config dims");
    want.data() = got.data();
  }
  return model;
}

}  // namespace qops
