#include "qops/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "qops/copynet.hpp"
#include "qops/corpus.hpp"
#include "qops/evaluation.hpp"
#include "qops/training.hpp"
#include "qops/tree_scorer.hpp"

namespace qops {
namespace {

void print_config(const nlohmann::json& j) { std::cout << "CONFIG: " << j.dump() << "\n"; }

std::uint64_t parse_u64(const std::string& raw, const std::string& what) {
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(raw, &used);
    if (used != raw.size()) throw std::invalid_argument("trailing characters");
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw std::invalid_argument(what + " is not an unsigned integer: '" + raw + "'");
  }
}

std::size_t parse_size(const std::string& raw, const std::string& what) {
  return static_cast<std::size_t>(parse_u64(raw, what));
}

double parse_double(const std::string& raw, const std::string& what) {
  try {
    std::size_t used = 0;
    double v = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(what + " is not a number: '" + raw + "'");
  }
}

// QOPS_SEED wins over config files and flags wherever a seed is consumed.
void apply_env_seed(std::uint64_t& seed) {
  const char* raw = std::getenv("QOPS_SEED");
  if (raw && *raw) seed = parse_u64(raw, "QOPS_SEED");
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string corpus, out, preset = "ex1", config_file, report, dev;
  std::string optimizer, g_state;
  std::size_t epochs = 0, batch_size = 0, lr_step = 0, grad_check_epochs = 0, eval_max_len = 0;
  std::size_t enc_emb = 0, enc_hid = 0, dec_emb = 0, dec_hid = 0, attn_dim = 0;
  double lr0 = 0, teacher_forcing = 0, lr_gamma = 0, clip_norm = 0;
  std::uint64_t seed = 0;

  CLI::Option *o_optimizer = nullptr, *o_epochs = nullptr, *o_lr0 = nullptr,
              *o_batch_size = nullptr, *o_teacher_forcing = nullptr, *o_lr_step = nullptr,
              *o_lr_gamma = nullptr, *o_seed = nullptr, *o_enc_emb = nullptr,
              *o_enc_hid = nullptr, *o_dec_emb = nullptr, *o_dec_hid = nullptr,
              *o_attn_dim = nullptr, *o_g_state = nullptr, *o_clip_norm = nullptr,
              *o_grad_check = nullptr, *o_eval_max_len = nullptr;
};

TrainConfig preset_config(const std::string& name) {
  if (name == "ex1") return TrainConfig::ex1();
  if (name == "ex2") return TrainConfig::ex2();
  throw std::invalid_argument("unknown preset '" + name + "', expected ex1 or ex2");
}

void apply_config_file(TrainConfig& config, const std::string& path) {
  for (const auto& [key, value] : read_config_file(path)) {
    if (key == "optimizer")
      config.optimizer = value;
    else if (key == "epochs")
      config.epochs = parse_size(value, key);
    else if (key == "lr0")
      config.lr0 = parse_double(value, key);
    else if (key == "batch_size")
      config.batch_size = parse_size(value, key);
    else if (key == "teacher_forcing_ratio")
      config.teacher_forcing_ratio = parse_double(value, key);
    else if (key == "lr_step")
      config.lr_step = parse_size(value, key);
    else if (key == "lr_gamma")
      config.lr_gamma = parse_double(value, key);
    else if (key == "seed")
      config.seed = parse_u64(value, key);
    else if (key == "enc_emb_dim")
      config.model.enc_emb_dim = parse_size(value, key);
    else if (key == "enc_hid_dim")
      config.model.enc_hid_dim = parse_size(value, key);
    else if (key == "dec_emb_dim")
      config.model.dec_emb_dim = parse_size(value, key);
    else if (key == "dec_hid_dim")
      config.model.dec_hid_dim = parse_size(value, key);
    else if (key == "attention_dim")
      config.model.attention_dim = parse_size(value, key);
    else if (key == "g_state_choice")
      config.model.g_state_choice = g_state_choice_from_string(value);
    else if (key == "clip_norm") {
      config.clip = true;
      config.clip_norm = parse_double(value, key);
    } else if (key == "grad_check_epochs")
      config.grad_check_epochs = parse_size(value, key);
    else if (key == "eval_max_len")
      config.eval_max_len = parse_size(value, key);
    else
      throw std::invalid_argument(path + ": unknown config key '" + key + "'");
  }
}

TrainConfig resolve_train_config(const TrainArgs& a) {
  TrainConfig config = preset_config(a.preset);
  if (!a.config_file.empty()) apply_config_file(config, a.config_file);
  if (a.o_optimizer->count()) config.optimizer = a.optimizer;
  if (a.o_epochs->count()) config.epochs = a.epochs;
  if (a.o_lr0->count()) config.lr0 = a.lr0;
  if (a.o_batch_size->count()) config.batch_size = a.batch_size;
  if (a.o_teacher_forcing->count()) config.teacher_forcing_ratio = a.teacher_forcing;
  if (a.o_lr_step->count()) config.lr_step = a.lr_step;
  if (a.o_lr_gamma->count()) config.lr_gamma = a.lr_gamma;
  if (a.o_seed->count()) config.seed = a.seed;
  if (a.o_enc_emb->count()) config.model.enc_emb_dim = a.enc_emb;
  if (a.o_enc_hid->count()) config.model.enc_hid_dim = a.enc_hid;
  if (a.o_dec_emb->count()) config.model.dec_emb_dim = a.dec_emb;
  if (a.o_dec_hid->count()) config.model.dec_hid_dim = a.dec_hid;
  if (a.o_attn_dim->count()) config.model.attention_dim = a.attn_dim;
  if (a.o_g_state->count()) config.model.g_state_choice = g_state_choice_from_string(a.g_state);
  if (a.o_clip_norm->count()) {
    config.clip = true;
    config.clip_norm = a.clip_norm;
  }
  if (a.o_grad_check->count()) config.grad_check_epochs = a.grad_check_epochs;
  if (a.o_eval_max_len->count()) config.eval_max_len = a.eval_max_len;
  apply_env_seed(config.seed);
  return config;
}

nlohmann::json train_config_json(const TrainConfig& c) {
  nlohmann::json j;
  j["optimizer"] = c.optimizer;
  j["epochs"] = c.epochs;
  j["lr0"] = c.lr0;
  j["batch_size"] = c.batch_size;
  j["teacher_forcing_ratio"] = c.teacher_forcing_ratio;
  j["lr_step"] = c.lr_step;
  j["lr_gamma"] = c.lr_gamma;
  j["seed"] = c.seed;
  j["enc_emb_dim"] = c.model.enc_emb_dim;
  j["enc_hid_dim"] = c.model.enc_hid_dim;
  j["dec_emb_dim"] = c.model.dec_emb_dim;
  j["dec_hid_dim"] = c.model.dec_hid_dim;
  j["attention_dim"] = c.model.attention_dim;
  j["g_state_choice"] = to_string(c.model.g_state_choice);
  j["clip"] = c.clip;
  if (c.clip) j["clip_norm"] = c.clip_norm;
  j["grad_check_epochs"] = c.grad_check_epochs;
  j["eval_max_len"] = c.eval_max_len;
  return j;
}

int do_train(const TrainArgs& a) {
  TrainConfig config = resolve_train_config(a);
  nlohmann::json j = train_config_json(config);
  j["command"] = "train";
  j["corpus"] = a.corpus;
  j["out"] = a.out;
  j["preset"] = a.preset;
  if (!a.config_file.empty()) j["config_file"] = a.config_file;
  if (!a.report.empty()) j["report"] = a.report;
  if (!a.dev.empty()) j["dev"] = a.dev;
  print_config(j);

  std::vector<Example> corpus = load_jsonl(a.corpus);
  std::vector<Example> dev;
  if (!a.dev.empty()) dev = load_jsonl(a.dev);
  TrainReport report;
  TrainedModel model = train(config, corpus, &report, a.dev.empty() ? nullptr : &dev);
  save_seq2seq(a.out, model);
  if (!a.report.empty()) write_report_csv(report, a.report);

  const EpochRecord& last = report.epochs.back();
  std::cout << "trained " << config.epochs << " epochs on " << corpus.size()
            << " examples in " << fmt17(report.wall_seconds) << " s\n";
  std::cout << "final loss " << fmt17(last.loss) << ", train accuracy " << fmt17(last.train_acc)
            << ", lr " << fmt17(last.lr) << "\n";
  std::cout << "checkpoint written to " << a.out << "\n";
  return 0;
}

// ---- convert -------------------------------------------------------------

struct ConvertArgs {
  std::string csv, lexicon, out, default_tag = "NOUN";
  bool lenient = false;
};

int do_convert(const ConvertArgs& a) {
  nlohmann::json j{{"command", "convert"}, {"csv", a.csv},           {"lexicon", a.lexicon},
                   {"out", a.out},         {"default_tag", a.default_tag},
                   {"strict", !a.lenient}};
  print_config(j);

  LexiconTagger tagger = LexiconTagger::load(a.lexicon, a.default_tag);
  ConvertStats stats;
  std::vector<Example> corpus = convert_break_csv(a.csv, tagger, &stats, !a.lenient);
  save_jsonl(corpus, a.out);

  for (const auto& msg : stats.skip_messages) std::cerr << "skipped: " << msg << "\n";
  std::cout << "rows " << stats.rows + stats.skipped << ", converted " << corpus.size()
            << ", skipped " << stats.skipped << "\n";
  double unk_rate =
      stats.tokens ? static_cast<double>(stats.unknown_tags) / static_cast<double>(stats.tokens)
                   : 0.0;
  std::cout << "tokens " << stats.tokens << ", unknown-tag rate " << fmt17(unk_rate) << "\n";
  std::size_t total = 0;
  std::ostringstream hist;
  for (const auto& [op, count] : stats.operator_histogram) {
    hist << ' ' << op << '=' << count;
    total += count;
  }
  std::cout << "operators (" << total << " total):" << hist.str() << "\n";
  std::cout << "corpus written to " << a.out << "\n";
  return 0;
}

// ---- eval / predict / attention -----------------------------------------

std::vector<int> pos_ids_of(const Example& ex, const Vocab& pos_vocab) {
  std::vector<int> ids;
  ids.reserve(ex.pos.size());
  for (const auto& s : ex.pos) ids.push_back(pos_vocab.id_of(s));
  return ids;
}

std::size_t auto_max_len(const std::vector<Example>& corpus, std::size_t requested) {
  if (requested) return requested;
  std::size_t longest = 0;
  for (const Example& ex : corpus) longest = std::max(longest, ex.ops.size());
  return longest + 2;
}

struct EvalArgs {
  std::string ckpt, corpus;
  std::size_t max_len = 0;
};

int do_eval(const EvalArgs& a) {
  nlohmann::json j{
      {"command", "eval"}, {"ckpt", a.ckpt}, {"corpus", a.corpus}, {"max_len", a.max_len}};
  print_config(j);

  TrainedModel model = load_seq2seq(a.ckpt);
  std::vector<Example> corpus = load_jsonl(a.corpus);
  if (corpus.empty()) throw std::invalid_argument("eval: corpus '" + a.corpus + "' is empty");
  Vocab pos_vocab = model.pos_vocab();
  Vocab op_vocab = model.op_vocab();
  std::size_t cap = auto_max_len(corpus, a.max_len);

  std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
  pairs.reserve(corpus.size());
  for (const Example& ex : corpus) {
    Prediction pred = predict(pos_ids_of(ex, pos_vocab), model.params, model.config, cap);
    std::vector<int> gold;
    for (const auto& s : ex.ops) gold.push_back(op_vocab.id_of(s));
    pairs.emplace_back(pred.op_ids, gold);
  }
  std::cout << eval_report_json(evaluate(pairs, op_vocab), op_vocab) << "\n";
  return 0;
}

struct PredictArgs {
  std::string ckpt;
  std::vector<std::string> tags;
  std::size_t max_len = 20;
};

int do_predict(const PredictArgs& a) {
  nlohmann::json j{
      {"command", "predict"}, {"ckpt", a.ckpt}, {"tags", a.tags}, {"max_len", a.max_len}};
  print_config(j);

  TrainedModel model = load_seq2seq(a.ckpt);
  Vocab pos_vocab = model.pos_vocab();
  Vocab op_vocab = model.op_vocab();
  std::vector<int> ids;
  for (const auto& t : a.tags) ids.push_back(pos_vocab.id_of(t));
  Prediction pred = predict(ids, model.params, model.config, a.max_len);
  std::string sep;
  for (int id : pred.op_ids) {
    std::cout << sep << op_vocab.symbol_of(id);
    sep = " ";
  }
  std::cout << "\n";
  return 0;
}

struct AttentionArgs {
  std::string ckpt, corpus, id, out;
  std::size_t max_len = 0;
};

int do_attention(const AttentionArgs& a) {
  nlohmann::json j{{"command", "attention"}, {"ckpt", a.ckpt},       {"corpus", a.corpus},
                   {"example_id", a.id},     {"out", a.out},         {"max_len", a.max_len}};
  print_config(j);

  TrainedModel model = load_seq2seq(a.ckpt);
  std::vector<Example> corpus = load_jsonl(a.corpus);
  const Example* found = nullptr;
  for (const Example& ex : corpus)
    if (ex.id == a.id) {
      found = &ex;
      break;
    }
  if (!found)
    throw std::invalid_argument("attention: no example with id '" + a.id + "' in " + a.corpus);

  Vocab pos_vocab = model.pos_vocab();
  Vocab op_vocab = model.op_vocab();
  std::size_t cap = auto_max_len(corpus, a.max_len);
  Prediction pred = predict(pos_ids_of(*found, pos_vocab), model.params, model.config, cap);
  std::vector<std::string> op_symbols;
  for (int id : pred.op_ids) op_symbols.push_back(op_vocab.symbol_of(id));
  export_attention(pred.trace, found->pos, op_symbols, a.out);
  std::cout << "attention matrix (" << pred.trace.steps() << " x " << found->pos.size()
            << ") written to " << a.out << "\n";
  return 0;
}

// ---- gradcheck -----------------------------------------------------------

struct GradcheckArgs {
  std::string preset = "ex1";
  double eps = 1e-4;
  double param_scale = 12.0;
  std::uint64_t seed = 13;
};

std::vector<Example> gradcheck_corpus() {
  Example a;
  a.id = "gc-0";
  a.pos = {"DET", "NOUN", "VERB"};
  a.ops = {"select", "filter"};
  Example b;
  b.id = "gc-1";
  b.pos = {"PRON", "VERB", "DET", "NOUN"};
  b.ops = {"select", "project", "aggregate"};
  return {a, b};
}

int do_gradcheck(const GradcheckArgs& a) {
  std::uint64_t seed = a.seed;
  apply_env_seed(seed);
  nlohmann::json j{{"command", "gradcheck"},
                   {"preset", a.preset},
                   {"eps", a.eps},
                   {"param_scale", a.param_scale},
                   {"seed", seed}};
  print_config(j);

  TrainConfig tc = preset_config(a.preset);
  std::vector<Example> corpus = gradcheck_corpus();
  Vocab pos_vocab = build_vocab(corpus, VocabSide::kPos);
  Vocab op_vocab = build_vocab(corpus, VocabSide::kOps);
  ModelConfig mc = tc.model;
  mc.pos_vocab_size = pos_vocab.size();
  mc.op_vocab_size = op_vocab.size();
  ModelParams params = init_params(mc, seed);
  // The training init is deliberately tiny; at that point some coordinates get
  // gradients near roundoff and the relative error is all noise. Check at a
  // scaled-up point instead.
  for (Tensor t : params.all())
    for (double& v : t.data()) v *= a.param_scale;

  auto f = [&](Tape& tape) {
    std::vector<Tensor> losses;
    for (const Example& ex : corpus) {
      std::vector<int> pos_ids = pos_ids_of(ex, pos_vocab);
      std::vector<int> frame{kSosId};
      for (const auto& s : ex.ops) frame.push_back(op_vocab.id_of(s));
      frame.push_back(kEosId);
      std::size_t steps = frame.size() - 1;
      auto dists = teacher_forced_rollout(tape, pos_ids, frame, steps, params, mc, 1.0, 0);
      std::vector<int> targets(frame.begin() + 1, frame.end());
      losses.push_back(nll_loss(tape, dists, targets, std::vector<std::uint8_t>(steps, 1)));
    }
    return scale(tape, sum(tape, concat(tape, losses)), 1.0 / static_cast<double>(losses.size()));
  };
  double err = grad_check(f, params.all(), a.eps);
  std::cout << "max relative error = " << fmt17(err) << "\n";
  return err > 1e-4 ? 1 : 0;
}

// ---- copynet -------------------------------------------------------------

std::vector<std::vector<int>> resolve_sops(const std::vector<CopyExample>& corpus,
                                           const std::string& sop, const std::string& lexicon,
                                           const Vocab& op_vocab) {
  if (sop == "gold") return gold_sops(corpus, op_vocab);
  if (lexicon.empty())
    throw std::invalid_argument("--lexicon is required when --sop names a checkpoint");
  TrainedModel predictor = load_seq2seq(sop);
  LexiconTagger tagger = LexiconTagger::load(lexicon);
  Vocab pos_vocab = predictor.pos_vocab();
  std::vector<std::vector<int>> out;
  out.reserve(corpus.size());
  for (const CopyExample& ex : corpus) {
    std::vector<int> pos_ids;
    for (const auto& tag : tag_pos(ex.question, tagger)) pos_ids.push_back(pos_vocab.id_of(tag));
    Prediction pred =
        predict(pos_ids, predictor.params, predictor.config, ex.question.size() + 2);
    if (pred.op_ids.empty())
      throw std::runtime_error("copynet: predictor produced no operators for example '" + ex.id +
                               "'");
    out.push_back(pred.op_ids);
  }
  return out;
}

struct CopyTrainArgs {
  std::string corpus, out, sop = "gold", lexicon, report;
  CopyTrainConfig config;
};

void write_copy_report_csv(const CopyTrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("copynet report: cannot open '" + path + "'");
  out << "epoch,loss,lr\n";
  for (const CopyEpochRecord& rec : report.epochs)
    out << rec.epoch << ',' << fmt17(rec.loss) << ',' << fmt17(rec.lr) << '\n';
}

int do_copynet_train(CopyTrainArgs a) {
  apply_env_seed(a.config.seed);
  nlohmann::json j{{"command", "copynet-train"},
                   {"corpus", a.corpus},
                   {"out", a.out},
                   {"sop", a.sop},
                   {"epochs", a.config.epochs},
                   {"lr0", a.config.lr0},
                   {"batch_size", a.config.batch_size},
                   {"lr_step", a.config.lr_step},
                   {"lr_gamma", a.config.lr_gamma},
                   {"seed", a.config.seed},
                   {"emb_dim", a.config.model.emb_dim},
                   {"enc_hid_dim", a.config.model.enc_hid_dim},
                   {"dec_hid_dim", a.config.model.dec_hid_dim},
                   {"attention_dim", a.config.model.attention_dim},
                   {"sop_dim", a.config.model.sop_dim},
                   {"action_hidden", a.config.model.action_hidden}};
  if (!a.lexicon.empty()) j["lexicon"] = a.lexicon;
  if (!a.report.empty()) j["report"] = a.report;
  print_config(j);

  std::vector<CopyExample> corpus = load_copy_jsonl(a.corpus);
  if (corpus.empty())
    throw std::invalid_argument("copynet-train: corpus '" + a.corpus + "' is empty");
  Vocab op_vocab = OperatorSet::qdmr().vocab();
  auto sops = resolve_sops(corpus, a.sop, a.lexicon, op_vocab);
  CopyTrainReport report;
  CopyNetModel model = train_copynet(a.config, corpus, sops, &report);
  save_copynet(a.out, model);
  if (!a.report.empty()) write_copy_report_csv(report, a.report);

  std::cout << "trained " << a.config.epochs << " epochs on " << corpus.size()
            << " examples in " << fmt17(report.wall_seconds) << " s\n";
  std::cout << "final loss " << fmt17(report.epochs.back().loss) << "\n";
  std::cout << "checkpoint written to " << a.out << "\n";
  return 0;
}

struct CopyEvalArgs {
  std::string ckpt, corpus, sop = "gold", lexicon;
  std::size_t max_len = 30;
};

int do_copynet_eval(const CopyEvalArgs& a) {
  nlohmann::json j{{"command", "copynet-eval"},
                   {"ckpt", a.ckpt},
                   {"corpus", a.corpus},
                   {"sop", a.sop},
                   {"max_len", a.max_len}};
  if (!a.lexicon.empty()) j["lexicon"] = a.lexicon;
  print_config(j);

  CopyNetModel model = load_copynet(a.ckpt);
  std::vector<CopyExample> corpus = load_copy_jsonl(a.corpus);
  if (corpus.empty())
    throw std::invalid_argument("copynet-eval: corpus '" + a.corpus + "' is empty");
  Vocab word_vocab = model.word_vocab();
  Vocab op_vocab = model.op_vocab();
  auto sops = resolve_sops(corpus, a.sop, a.lexicon, op_vocab);

  Tape tape;
  std::size_t oov = 0;
  std::vector<CopyRolloutStats> stats;
  Tensor loss = enhanced_loss(tape, corpus, sops, model.params, word_vocab, &oov, &stats);

  double acc_sum = 0.0;
  std::size_t exact = 0, cursor_violations = 0;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    CopyPrediction pred =
        copynet_decode(corpus[k].question, sops[k], model.params, word_vocab, a.max_len);
    const auto& gold = corpus[k].decomposition;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(pred.words.size(), gold.size()); ++i)
      if (pred.words[i] == gold[i]) ++hits;
    acc_sum += static_cast<double>(hits) / static_cast<double>(gold.size());
    if (pred.words == gold) ++exact;
    for (std::size_t i = 1; i < pred.cursor_trace.size(); ++i) {
      std::size_t step = pred.cursor_trace[i] - pred.cursor_trace[i - 1];
      if (pred.cursor_trace[i] < pred.cursor_trace[i - 1] || step > 1) ++cursor_violations;
    }
  }

  nlohmann::json out;
  out["mean_loss"] = loss.value();
  out["token_accuracy"] = acc_sum / static_cast<double>(corpus.size());
  out["exact_match"] = static_cast<double>(exact) / static_cast<double>(corpus.size());
  out["examples"] = corpus.size();
  out["oov_targets"] = oov;
  out["cursor_violations"] = cursor_violations;
  std::cout << out.dump() << "\n";
  return 0;
}

// ---- tree ----------------------------------------------------------------

struct TreeTrainArgs {
  std::string corpus, out, report;
  TreeTrainConfig config;
};

void write_tree_report_csv(const TreeTrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("tree report: cannot open '" + path + "'");
  out << "epoch,mean_j,solved\n";
  for (const TreeEpochRecord& rec : report.epochs)
    out << rec.epoch << ',' << fmt17(rec.mean_j) << ',' << rec.solved << '\n';
}

int do_tree_train(TreeTrainArgs a) {
  apply_env_seed(a.config.seed);
  nlohmann::json j{{"command", "tree-train"},
                   {"corpus", a.corpus},
                   {"out", a.out},
                   {"epochs", a.config.epochs},
                   {"lr0", a.config.lr0},
                   {"seed", a.config.seed},
                   {"dim", a.config.dim},
                   {"lambda", a.config.margin.lambda},
                   {"max_leaves", a.config.margin.max_leaves},
                   {"valence_aux_weight", a.config.margin.valence_aux_weight}};
  if (!a.report.empty()) j["report"] = a.report;
  print_config(j);

  std::vector<TreeInstance> instances = load_tree_jsonl(a.corpus);
  if (instances.empty())
    throw std::invalid_argument("tree-train: corpus '" + a.corpus + "' is empty");
  TreeTrainReport report;
  TreeModel model = train_tree(a.config, instances, &report);
  save_tree(a.out, model);
  if (!a.report.empty()) write_tree_report_csv(report, a.report);

  const TreeEpochRecord& last = report.epochs.back();
  std::cout << "trained " << report.epochs.size() << " epochs on " << instances.size()
            << " instances in " << fmt17(report.wall_seconds) << " s\n";
  std::cout << "final mean J " << fmt17(last.mean_j) << ", solved " << last.solved << "/"
            << instances.size() << "\n";
  std::cout << "checkpoint written to " << a.out << "\n";
  return 0;
}

struct TreeEvalArgs {
  std::string ckpt, corpus;
};

int do_tree_eval(const TreeEvalArgs& a) {
  nlohmann::json j{{"command", "tree-eval"}, {"ckpt", a.ckpt}, {"corpus", a.corpus}};
  print_config(j);

  TreeModel model = load_tree(a.ckpt);
  std::vector<TreeInstance> instances = load_tree_jsonl(a.corpus);
  if (instances.empty())
    throw std::invalid_argument("tree-eval: corpus '" + a.corpus + "' is empty");
  TreeEvalResult res = eval_tree(model, instances);
  nlohmann::json out;
  out["mean_j"] = res.mean_j;
  out["solved_fraction"] = res.solved_fraction;
  out["instances"] = res.instances;
  std::cout << out.dump() << "\n";
  return 0;
}

}  // namespace

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    if (line[start] == '#') continue;
    std::size_t eq = line.find('=', start);
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": expected key=value, got '" + line + "'");
    auto trim = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      std::size_t b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": empty key");
    out[key] = value;
  }
  return out;
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"QDMR semantic-operator prediction toolkit"};
  app.require_subcommand(1);

  ConvertArgs conv;
  CLI::App* c_convert = app.add_subcommand("convert", "BREAK-style CSV to JSONL corpus");
  c_convert->add_option("--csv", conv.csv, "input CSV")->required();
  c_convert->add_option("--lexicon", conv.lexicon, "word<TAB>TAG lexicon")->required();
  c_convert->add_option("--out", conv.out, "output JSONL path")->required();
  c_convert->add_option("--default-tag", conv.default_tag, "tag for unknown words");
  c_convert->add_flag("--lenient", conv.lenient, "keep rows with unknown operators");

  TrainArgs tr;
  CLI::App* c_train = app.add_subcommand("train", "train the operator predictor");
  c_train->add_option("--corpus", tr.corpus, "JSONL corpus")->required();
  c_train->add_option("--out", tr.out, "checkpoint path")->required();
  c_train->add_option("--preset", tr.preset, "ex1 or ex2");
  c_train->add_option("--config", tr.config_file, "key=value config file");
  c_train->add_option("--report", tr.report, "per-epoch CSV path");
  c_train->add_option("--dev", tr.dev, "dev JSONL corpus");
  tr.o_optimizer = c_train->add_option("--optimizer", tr.optimizer, "adam or sgd");
  tr.o_epochs = c_train->add_option("--epochs", tr.epochs);
  tr.o_lr0 = c_train->add_option("--lr0", tr.lr0);
  tr.o_batch_size = c_train->add_option("--batch-size", tr.batch_size);
  tr.o_teacher_forcing = c_train->add_option("--teacher-forcing", tr.teacher_forcing);
  tr.o_lr_step = c_train->add_option("--lr-step", tr.lr_step);
  tr.o_lr_gamma = c_train->add_option("--lr-gamma", tr.lr_gamma);
  tr.o_seed = c_train->add_option("--seed", tr.seed);
  tr.o_enc_emb = c_train->add_option("--enc-emb", tr.enc_emb);
  tr.o_enc_hid = c_train->add_option("--enc-hid", tr.enc_hid);
  tr.o_dec_emb = c_train->add_option("--dec-emb", tr.dec_emb);
  tr.o_dec_hid = c_train->add_option("--dec-hid", tr.dec_hid);
  tr.o_attn_dim = c_train->add_option("--attn-dim", tr.attn_dim);
  tr.o_g_state = c_train->add_option("--g-state", tr.g_state, "previous or current");
  tr.o_clip_norm = c_train->add_option("--clip-norm", tr.clip_norm, "enable gradient clipping");
  tr.o_grad_check = c_train->add_option("--grad-check-epochs", tr.grad_check_epochs);
  tr.o_eval_max_len = c_train->add_option("--eval-max-len", tr.eval_max_len);

  EvalArgs ev;
  CLI::App* c_eval = app.add_subcommand("eval", "metrics over a corpus");
  c_eval->add_option("--ckpt", ev.ckpt, "SEQ2 checkpoint")->required();
  c_eval->add_option("--corpus", ev.corpus, "JSONL corpus")->required();
  c_eval->add_option("--max-len", ev.max_len, "decode cap, 0 = auto");

  PredictArgs pr;
  CLI::App* c_predict = app.add_subcommand("predict", "operators for one POS sequence");
  c_predict->add_option("--ckpt", pr.ckpt, "SEQ2 checkpoint")->required();
  c_predict->add_option("tags", pr.tags, "POS tags")->required();
  c_predict->add_option("--max-len", pr.max_len, "decode cap");

  GradcheckArgs gc;
  CLI::App* c_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  c_gradcheck->add_option("--preset", gc.preset, "ex1 or ex2");
  c_gradcheck->add_option("--eps", gc.eps, "finite-difference step");
  c_gradcheck->add_option("--param-scale", gc.param_scale, "init draw multiplier");
  c_gradcheck->add_option("--seed", gc.seed);

  AttentionArgs at;
  CLI::App* c_attention = app.add_subcommand("attention", "export one example's weights");
  c_attention->add_option("--ckpt", at.ckpt, "SEQ2 checkpoint")->required();
  c_attention->add_option("--corpus", at.corpus, "JSONL corpus")->required();
  c_attention->add_option("--id", at.id, "example id")->required();
  c_attention->add_option("--out", at.out, "CSV path")->required();
  c_attention->add_option("--max-len", at.max_len, "decode cap, 0 = auto");

  CopyTrainArgs ct;
  CLI::App* c_ctrain = app.add_subcommand("copynet-train", "train the conditioned CopyNet");
  c_ctrain->add_option("--corpus", ct.corpus, "copy JSONL corpus")->required();
  c_ctrain->add_option("--out", ct.out, "checkpoint path")->required();
  c_ctrain->add_option("--sop", ct.sop, "'gold' or a SEQ2 checkpoint path");
  c_ctrain->add_option("--lexicon", ct.lexicon, "lexicon for checkpoint sop mode");
  c_ctrain->add_option("--report", ct.report, "per-epoch CSV path");
  c_ctrain->add_option("--epochs", ct.config.epochs);
  c_ctrain->add_option("--lr0", ct.config.lr0);
  c_ctrain->add_option("--batch-size", ct.config.batch_size);
  c_ctrain->add_option("--lr-step", ct.config.lr_step);
  c_ctrain->add_option("--lr-gamma", ct.config.lr_gamma);
  c_ctrain->add_option("--seed", ct.config.seed);
  c_ctrain->add_option("--emb", ct.config.model.emb_dim);
  c_ctrain->add_option("--enc-hid", ct.config.model.enc_hid_dim);
  c_ctrain->add_option("--dec-hid", ct.config.model.dec_hid_dim);
  c_ctrain->add_option("--attn-dim", ct.config.model.attention_dim);
  c_ctrain->add_option("--sop-dim", ct.config.model.sop_dim);
  c_ctrain->add_option("--action-hidden", ct.config.model.action_hidden);

  CopyEvalArgs ce;
  CLI::App* c_ceval = app.add_subcommand("copynet-eval", "CopyNet loss and decode metrics");
  c_ceval->add_option("--ckpt", ce.ckpt, "CNET checkpoint")->required();
  c_ceval->add_option("--corpus", ce.corpus, "copy JSONL corpus")->required();
  c_ceval->add_option("--sop", ce.sop, "'gold' or a SEQ2 checkpoint path");
  c_ceval->add_option("--lexicon", ce.lexicon, "lexicon for checkpoint sop mode");
  c_ceval->add_option("--max-len", ce.max_len, "decode cap");

  TreeTrainArgs tt;
  CLI::App* c_ttrain = app.add_subcommand("tree-train", "train the margin tree scorer");
  c_ttrain->add_option("--corpus", tt.corpus, "tree JSONL corpus")->required();
  c_ttrain->add_option("--out", tt.out, "checkpoint path")->required();
  c_ttrain->add_option("--report", tt.report, "per-epoch CSV path");
  c_ttrain->add_option("--epochs", tt.config.epochs);
  c_ttrain->add_option("--lr0", tt.config.lr0);
  c_ttrain->add_option("--seed", tt.config.seed);
  c_ttrain->add_option("--dim", tt.config.dim);
  c_ttrain->add_option("--lambda", tt.config.margin.lambda);
  c_ttrain->add_option("--max-leaves", tt.config.margin.max_leaves);
  c_ttrain->add_option("--valence-weight", tt.config.margin.valence_aux_weight);

  TreeEvalArgs te;
  CLI::App* c_teval = app.add_subcommand("tree-eval", "margin objective over instances");
  c_teval->add_option("--ckpt", te.ckpt, "TREE checkpoint")->required();
  c_teval->add_option("--corpus", te.corpus, "tree JSONL corpus")->required();

  std::vector<const char*> argv;
  argv.push_back("qops");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(c_convert)) return do_convert(conv);
    if (app.got_subcommand(c_train)) return do_train(tr);
    if (app.got_subcommand(c_eval)) return do_eval(ev);
    if (app.got_subcommand(c_predict)) return do_predict(pr);
    if (app.got_subcommand(c_gradcheck)) return do_gradcheck(gc);
    if (app.got_subcommand(c_attention)) return do_attention(at);
    if (app.got_subcommand(c_ctrain)) return do_copynet_train(ct);
    if (app.got_subcommand(c_ceval)) return do_copynet_eval(ce);
    if (app.got_subcommand(c_ttrain)) return do_tree_train(tt);
    if (app.got_subcommand(c_teval)) return do_tree_eval(te);
    throw std::logic_error("run_cli: unreachable subcommand dispatch");
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace qops
