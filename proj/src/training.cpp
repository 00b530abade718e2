#include "qops/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "qops/checkpoint.hpp"
#include "qops/evaluation.hpp"
#include "qops/rng.hpp"

namespace qops {

void TrainConfig::validate() const {
  if (optimizer != "adam" && optimizer != "sgd")
    throw std::invalid_argument("optimizer must be 'adam' or 'sgd', got '" + optimizer + "'");
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (lr0 <= 0.0) throw std::invalid_argument("lr0 must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (teacher_forcing_ratio < 0.0 || teacher_forcing_ratio > 1.0)
    throw std::invalid_argument("teacher_forcing_ratio must lie in [0,1]");
  if (lr_step == 0) throw std::invalid_argument("lr_step must be positive");
  if (lr_gamma <= 0.0) throw std::invalid_argument("lr_gamma must be positive");
  if (clip && clip_norm <= 0.0) throw std::invalid_argument("clip_norm must be positive");
}

TrainConfig TrainConfig::ex1() {
  TrainConfig c;
  c.optimizer = "adam";
  c.epochs = 20;
  c.lr0 = 1e-3;
  c.batch_size = 10;
  c.teacher_forcing_ratio = 0.5;
  c.model = ModelConfig::ex1(0, 0);
  return c;
}

TrainConfig TrainConfig::ex2() {
  TrainConfig c;
  c.optimizer = "sgd";
  c.epochs = 30;
  c.lr0 = 1e-2;
  c.batch_size = 5;
  c.teacher_forcing_ratio = 0.5;
  c.model = ModelConfig::ex2(0, 0);
  return c;
}

Tensor nll_loss(Tape& tape, const std::vector<Tensor>& step_dists,
                const std::vector<int>& targets, const std::vector<std::uint8_t>& mask) {
  if (step_dists.size() != targets.size() || step_dists.size() != mask.size())
    throw std::invalid_argument("nll_loss: dists, targets and mask lengths differ");
  std::vector<Tensor> picked;
  for (std::size_t t = 0; t < step_dists.size(); ++t)
    if (mask[t]) picked.push_back(pick(tape, step_dists[t], static_cast<std::size_t>(targets[t])));
  if (picked.empty()) throw std::invalid_argument("nll_loss: mask excludes every step");
  Tensor probs = picked.size() == 1 ? picked.front() : concat(tape, picked);
  Tensor total = sum(tape, log(tape, probs));
  return scale(tape, total, -1.0 / static_cast<double>(picked.size()));
}

std::vector<Tensor> teacher_forced_rollout(Tape& tape, const std::vector<int>& pos_ids,
                                           const std::vector<int>& target, std::size_t steps,
                                           const ModelParams& params, const ModelConfig& config,
                                           double ratio, std::uint64_t coin_seed) {
  if (ratio < 0.0 || ratio > 1.0)
    throw std::invalid_argument("teacher_forced_rollout: ratio must lie in [0,1]");
  if (steps == 0 || steps >= target.size())
    throw std::invalid_argument("teacher_forced_rollout: steps must lie in [1, |target|)");
  Rng coins(coin_seed);
  Tensor enc = encode(tape, pos_ids, params);
  Tensor s = decoder_init(tape, enc, params);
  std::vector<Tensor> dists;
  dists.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    bool use_gold = coins.uniform() < ratio;
    int y_prev;
    if (t == 0) {
      y_prev = target[0];  // both branches coincide on SOS
    } else if (use_gold) {
      y_prev = target[t];
    } else {
      y_prev = masked_argmax(dists.back(), {});
    }
    DecodeStep step = decode_step(tape, y_prev, s, enc, params, config);
    dists.push_back(step.dist);
    s = step.state;
  }
  return dists;
}

void sgd_step(const std::vector<Tensor>& params, double lr) {
  for (Tensor p : params) {
    if (!p.requires_grad()) throw std::logic_error("sgd_step: parameter without gradient");
    auto& data = p.data();
    const auto& grad = p.grad();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr * grad[i];
  }
}

AdamState::AdamState(const std::vector<Tensor>& params) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Tensor& p : params) {
    m.emplace_back(p.size(), 0.0);
    v.emplace_back(p.size(), 0.0);
  }
}

void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::logic_error("adam_step: state buffers do not match the parameter list");
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    if (!p.requires_grad()) throw std::logic_error("adam_step: parameter without gradient");
    if (state.m[i].size() != p.size())
      throw std::logic_error("adam_step: moment buffer shape mismatch");
    auto& data = p.data();
    const auto& grad = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      double g = grad[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      data[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double lr_schedule(std::size_t epoch, double lr0, std::size_t step, double gamma) {
  if (step == 0) throw std::invalid_argument("lr_schedule: step must be positive");
  std::size_t k = epoch / step;
  // Repeated in-place multiplication keeps scheduled values bit-identical to
  // a loop that decays lr once per boundary.
  double lr = lr0;
  for (std::size_t i = 0; i < k; ++i) lr *= gamma;
  return lr;
}

double clip_gradients(const std::vector<Tensor>& params, double clip_norm) {
  if (clip_norm <= 0.0) throw std::invalid_argument("clip_gradients: clip_norm must be positive");
  double sq = 0.0;
  for (const Tensor& p : params)
    for (double g : p.grad()) sq += g * g;
  double norm = std::sqrt(sq);
  if (norm > clip_norm) {
    double factor = clip_norm / norm;
    for (Tensor p : params)
      for (double& g : p.grad()) g *= factor;
  }
  return norm;
}

double corpus_accuracy(const TrainedModel& model, const std::vector<Example>& corpus,
                       std::size_t max_len) {
  if (corpus.empty()) throw std::invalid_argument("corpus_accuracy: empty corpus");
  Vocab pos_vocab = model.pos_vocab();
  Vocab op_vocab = model.op_vocab();
  double acc = 0.0;
  for (const Example& ex : corpus) {
    std::vector<int> pos_ids, gold;
    for (const auto& s : ex.pos) pos_ids.push_back(pos_vocab.id_of(s));
    for (const auto& s : ex.ops) gold.push_back(op_vocab.id_of(s));
    Prediction pred = predict(pos_ids, model.params, model.config, max_len);
    acc += token_accuracy(pred.op_ids, gold);
  }
  return acc / static_cast<double>(corpus.size());
}

namespace {

// Forced rollout keeps the hook's loss smooth in the parameters; free-running
// steps would make finite differences jump across argmax boundaries.
void run_grad_check_hook(const std::vector<Example>& corpus, const Vocab& pos_vocab,
                         const Vocab& op_vocab, const ModelParams& params,
                         const ModelConfig& mc, std::size_t epoch) {
  const Example& ex = corpus.front();
  std::vector<int> pos_ids, frame;
  for (const auto& s : ex.pos) pos_ids.push_back(pos_vocab.id_of(s));
  frame.push_back(kSosId);
  for (const auto& s : ex.ops) frame.push_back(op_vocab.id_of(s));
  frame.push_back(kEosId);
  std::size_t steps = frame.size() - 1;
  std::vector<int> targets(frame.begin() + 1, frame.end());
  std::vector<std::uint8_t> mask(steps, 1);

  auto f = [&](Tape& tape) {
    auto dists = teacher_forced_rollout(tape, pos_ids, frame, steps, params, mc, 1.0, 0);
    return nll_loss(tape, dists, targets, mask);
  };
  double err = grad_check(f, params.all(), 1e-4);
  if (err > 1e-3)
    throw std::runtime_error("train: gradient check failed at epoch " + std::to_string(epoch) +
                             " with max relative error " + std::to_string(err));
}

}  // namespace

TrainedModel train(const TrainConfig& config, const std::vector<Example>& corpus,
                   TrainReport* report, const std::vector<Example>* dev) {
  config.validate();
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  auto t_start = std::chrono::steady_clock::now();

  Vocab pos_vocab = build_vocab(corpus, VocabSide::kPos);
  Vocab op_vocab = build_vocab(corpus, VocabSide::kOps);
  ModelConfig mc = config.model;
  mc.pos_vocab_size = pos_vocab.size();
  mc.op_vocab_size = op_vocab.size();
  mc.validate();

  TrainedModel model;
  model.config = mc;
  model.pos_symbols = pos_vocab.symbols();
  model.op_symbols = op_vocab.symbols();
  model.params = init_params(mc, config.seed);
  std::vector<Tensor> all_params = model.params.all();

  AdamState adam(all_params);
  std::size_t max_gold = 0;
  for (const Example& ex : corpus) max_gold = std::max(max_gold, ex.ops.size());
  std::size_t eval_cap = config.eval_max_len ? config.eval_max_len : max_gold + 2;

  if (report) {
    report->epochs.clear();
    report->seed = config.seed;
  }

  double lr = config.lr0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    lr = lr_schedule(epoch, config.lr0, config.lr_step, config.lr_gamma);
    auto batches = batchify(corpus, pos_vocab, op_vocab, config.batch_size,
                            derive_seed(config.seed, 1, epoch, 0));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Batch& batch = batches[b];
      Tape tape;
      std::vector<Tensor> losses;
      losses.reserve(batch.size());
      std::uint64_t batch_seed = derive_seed(config.seed, 2, epoch, b);
      for (std::size_t k = 0; k < batch.size(); ++k) {
        std::vector<int> pos_ids(batch.pos[k].begin(),
                                 batch.pos[k].begin() + static_cast<long>(batch.pos_len[k]));
        std::size_t steps = batch.target[k].size() - 1;
        auto dists = teacher_forced_rollout(tape, pos_ids, batch.target[k], steps, model.params,
                                            mc, config.teacher_forcing_ratio,
                                            derive_seed(batch_seed, 0, k, 0));
        std::vector<int> targets(batch.target[k].begin() + 1, batch.target[k].end());
        losses.push_back(nll_loss(tape, dists, targets, batch.mask[k]));
      }
      Tensor batch_loss = losses.size() == 1
                              ? losses.front()
                              : scale(tape, sum(tape, concat(tape, losses)),
                                      1.0 / static_cast<double>(losses.size()));
      double loss_value = batch_loss.value();
      if (!std::isfinite(loss_value))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 " batch " + std::to_string(b));
      tape.backward(batch_loss);
      if (config.clip) clip_gradients(all_params, config.clip_norm);
      if (config.optimizer == "adam")
        adam_step(all_params, adam, lr);
      else
        sgd_step(all_params, lr);
      loss_sum += loss_value;
    }

    if (config.grad_check_epochs && epoch % config.grad_check_epochs == 0)
      run_grad_check_hook(corpus, pos_vocab, op_vocab, model.params, mc, epoch);

    if (report) {
      EpochRecord rec;
      rec.epoch = epoch;
      rec.loss = loss_sum / static_cast<double>(batches.size());
      rec.train_acc = corpus_accuracy(model, corpus, eval_cap);
      rec.dev_acc = dev ? corpus_accuracy(model, *dev, eval_cap)
                        : std::numeric_limits<double>::quiet_NaN();
      rec.lr = lr;
      report->epochs.push_back(rec);
    }
  }

  if (report) {
    report->final_lr = lr;
    report->wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  }
  return model;
}

void write_report_csv(const TrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_report_csv: cannot open '" + path + "'");
  out << "epoch,loss,train_acc,dev_acc,lr\n";
  char buf[64];
  auto fmt = [&](double v) -> std::string {
    if (std::isnan(v)) return "";
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  for (const EpochRecord& rec : report.epochs)
    out << rec.epoch << ',' << fmt(rec.loss) << ',' << fmt(rec.train_acc) << ','
        << fmt(rec.dev_acc) << ',' << fmt(rec.lr) << '\n';
  if (!out) throw std::runtime_error("write_report_csv: write to '" + path + "' failed");
}

void save_seq2seq(const std::string& path, const TrainedModel& model) {
  Checkpoint ckpt;
  ckpt.section = "SEQ2";
  ckpt.config["enc_emb_dim"] = std::to_string(model.config.enc_emb_dim);
  ckpt.config["enc_hid_dim"] = std::to_string(model.config.enc_hid_dim);
  ckpt.config["dec_emb_dim"] = std::to_string(model.config.dec_emb_dim);
  ckpt.config["dec_hid_dim"] = std::to_string(model.config.dec_hid_dim);
  ckpt.config["attention_dim"] = std::to_string(model.config.attention_dim);
  ckpt.config["g_state_choice"] = to_string(model.config.g_state_choice);
  ckpt.config["pos_vocab"] = join_list(model.pos_symbols);
  ckpt.config["op_vocab"] = join_list(model.op_symbols);
  ckpt.tensors = model.params.named();
  save_checkpoint(path, ckpt);
}

TrainedModel load_seq2seq(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.section != "SEQ2")
    throw std::runtime_error("load_seq2seq: '" + path + "' holds a '" + ckpt.section +
                             "' section, not SEQ2");
  TrainedModel model;
  model.pos_symbols = split_list(config_get(ckpt, "pos_vocab"));
  model.op_symbols = split_list(config_get(ckpt, "op_vocab"));
  model.config.enc_emb_dim = config_get_size(ckpt, "enc_emb_dim");
  model.config.enc_hid_dim = config_get_size(ckpt, "enc_hid_dim");
  model.config.dec_emb_dim = config_get_size(ckpt, "dec_emb_dim");
  model.config.dec_hid_dim = config_get_size(ckpt, "dec_hid_dim");
  model.config.attention_dim = config_get_size(ckpt, "attention_dim");
  model.config.g_state_choice = g_state_choice_from_string(config_get(ckpt, "g_state_choice"));
  model.config.pos_vocab_size = model.pos_symbols.size();
  model.config.op_vocab_size = model.op_symbols.size();
  model.config.validate();

  model.params = init_params(model.config, 0);
  auto expected = model.params.named();
  if (expected.size() != ckpt.tensors.size())
    throw std::runtime_error("load_seq2seq: expected " + std::to_string(expected.size()) +
                             " tensors, file holds " + std::to_string(ckpt.tensors.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    auto& [want_name, want] = expected[i];
    auto& [got_name, got] = ckpt.tensors[i];
    if (want_name != got_name)
      throw std::runtime_error("load_seq2seq: tensor " + std::to_string(i) + " is '" + got_name +
                               "', expected '" + want_name + "'");
    if (want.shape() != got.shape())
      throw std::runtime_error("load_seq2seq: tensor '" + got_name +
                               "' shape does not match the config dims");
    want.data() = got.data();
  }
  return model;
}

}  // namespace qops
