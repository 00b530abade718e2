#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qops/corpus.hpp"
#include "qops/seq2seq.hpp"
#include "qops/tensor.hpp"

namespace qops {

struct TrainConfig {
  std::string optimizer = "adam";  // "adam" or "sgd"
  std::size_t epochs = 20;
  double lr0 = 1e-3;
  std::size_t batch_size = 10;
  double teacher_forcing_ratio = 0.5;
  std::size_t lr_step = 10;
  double lr_gamma = 0.1;
  std::uint64_t seed = 13;
  ModelConfig model;
  bool clip = false;
  double clip_norm = 5.0;
  std::size_t grad_check_epochs = 0;  // debug hook, 0 disables
  std::size_t eval_max_len = 0;       // greedy-decode cap, 0 = longest gold + 2

  void validate() const;

  // The two experiment presets; vocab sizes are filled in by train().
  static TrainConfig ex1();
  static TrainConfig ex2();
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double dev_acc = 0.0;  // NaN when no dev corpus was given
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double final_lr = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
};

// CSV columns: epoch,loss,train_acc,dev_acc,lr. Floats use %.17g so the file
// reproduces the doubles bit for bit; NaN dev_acc prints as an empty field.
void write_report_csv(const TrainReport& report, const std::string& path);

struct TrainedModel {
  ModelConfig config;
  std::vector<std::string> pos_symbols;
  std::vector<std::string> op_symbols;
  ModelParams params;

  Vocab pos_vocab() const { return Vocab::from_symbols(pos_symbols); }
  Vocab op_vocab() const { return Vocab::from_symbols(op_symbols); }
};

// -(sum_t mask_t * log dist_t[target_t]) / sum_t mask_t, built on the tape.
Tensor nll_loss(Tape& tape, const std::vector<Tensor>& step_dists,
                const std::vector<int>& targets, const std::vector<std::uint8_t>& mask);

// Decoder dists for `steps` steps. Step 0 always feeds SOS; later steps feed
// the gold previous symbol when the per-step coin is below the ratio, else
// the model's own argmax. target is the full frame (SOS, ops..., EOS, pads).
std::vector<Tensor> teacher_forced_rollout(Tape& tape, const std::vector<int>& pos_ids,
                                           const std::vector<int>& target, std::size_t steps,
                                           const ModelParams& params, const ModelConfig& config,
                                           double ratio, std::uint64_t coin_seed);

// theta <- theta - lr * grad for every parameter.
void sgd_step(const std::vector<Tensor>& params, double lr);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  explicit AdamState(const std::vector<Tensor>& params);
};

// Bias-corrected Adam update; state buffers must match the parameter list.
void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr);

// lr0 with gamma applied floor(epoch/step) times, by repeated multiplication
// so scheduled values stay bit-identical to cumulative decay.
double lr_schedule(std::size_t epoch, double lr0, std::size_t step, double gamma);

// Scales all gradients by clip_norm/norm when the global L2 norm exceeds
// clip_norm; returns the pre-clip norm.
double clip_gradients(const std::vector<Tensor>& params, double clip_norm);

TrainedModel train(const TrainConfig& config, const std::vector<Example>& corpus,
                   TrainReport* report = nullptr, const std::vector<Example>* dev = nullptr);

// Greedy-decode token accuracy of the model over a corpus.
double corpus_accuracy(const TrainedModel& model, const std::vector<Example>& corpus,
                       std::size_t max_len);

// "SEQ2" section of the shared checkpoint container.
void save_seq2seq(const std::string& path, const TrainedModel& model);
TrainedModel load_seq2seq(const std::string& path);

}  // namespace qops
