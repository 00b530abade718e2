#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qops/seq2seq.hpp"
#include "qops/tensor.hpp"
#include "qops/vocab.hpp"

namespace qops {

// One decomposition-generation example: source question tokens, target
// decomposition tokens, and the operator sequence conditioning the decoder.
struct CopyExample {
  std::string id;
  std::vector<std::string> question;
  std::vector<std::string> decomposition;
  std::vector<std::string> ops;
};

std::vector<CopyExample> load_copy_jsonl(const std::string& path);
void save_copy_jsonl(const std::vector<CopyExample>& corpus, const std::string& path);

// Word vocabulary over question and decomposition tokens of the whole corpus.
Vocab build_word_vocab(const std::vector<CopyExample>& corpus);

struct CopyNetConfig {
  std::size_t emb_dim = 8;
  std::size_t enc_hid_dim = 12;
  std::size_t dec_hid_dim = 12;
  std::size_t attention_dim = 0;  // 0 = dec_hid_dim
  std::size_t sop_dim = 6;
  std::size_t action_hidden = 16;
  std::size_t word_vocab_size = 0;
  std::size_t op_vocab_size = 0;

  std::size_t attn_dim() const { return attention_dim ? attention_dim : dec_hid_dim; }
  void validate() const;
};

struct CopyNetParams {
  Tensor e_word;  // word_vocab x emb
  GruGates encoder;  // emb -> enc_hid
  GruGates decoder;  // emb + enc_hid -> dec_hid
  Tensor w_bridge;   // enc_hid x dec_hid
  Tensor v_a, w_a, u_a;
  Tensor e_sop;   // op_vocab x sop_dim
  Tensor w_gen;   // (dec_hid + enc_hid + sop_dim) x word_vocab
  Tensor w_copy;  // enc_hid x (dec_hid + sop_dim)
  Tensor w_act1;  // (emb + sop_dim) x action_hidden
  Tensor b_act1;  // 1 x action_hidden
  Tensor w_act2;  // action_hidden x 2
  Tensor b_act2;  // 1 x 2

  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> all() const;
  // The operator-conditioning weights; zeroing them reduces the model to a
  // plain CopyNet.
  std::vector<Tensor> conditioning() const;
};

CopyNetParams init_copynet(const CopyNetConfig& config, std::uint64_t seed);

inline constexpr std::size_t kUseCurrent = 0;
inline constexpr std::size_t kUseNext = 1;

struct AlignmentState {
  std::size_t cursor = 0;
  int alsop = 0;  // operator id at the cursor
};

// softmax over a one-hidden-layer tanh MLP on concat(y_prev_emb, e_sop[sop]).
Tensor align_action(Tape& tape, const Tensor& y_prev_emb, int sop_id,
                    const CopyNetParams& params);

AlignmentState advance_alignment(const AlignmentState& state, std::size_t action,
                                 const std::vector<int>& sop);

// Joint generate/copy distribution: one softmax over vocab scores
// concat(s_t, c_t, alsop_emb) * w_gen and per-position copy scores
// tanh(h_j * w_copy) . concat(s_t, alsop_emb).
struct MixtureDist {
  Tensor full;  // 1 x (vocab + source length)
  std::size_t vocab_size = 0;
  std::size_t source_len = 0;
};

MixtureDist copy_gen_dist(Tape& tape, const Tensor& s_t, const Tensor& c_t,
                          const Tensor& enc_states, const Tensor& alsop_emb,
                          const CopyNetParams& params);

// Word probability with copy mass collapsed onto surface tokens: the
// generate entry (when the word is in vocab) plus every copy position whose
// source token matches. A word absent from both falls back to the UNK entry.
Tensor target_word_prob(Tape& tape, const MixtureDist& dist, const std::string& word,
                        const std::vector<std::string>& source_tokens, const Vocab& word_vocab,
                        std::size_t* oov_count = nullptr);

// Collapsed word-level distribution in deterministic order: vocab words by id,
// then out-of-vocab source tokens by first occurrence.
std::vector<std::pair<std::string, double>> collapsed_dist(
    const MixtureDist& dist, const std::vector<std::string>& source_tokens,
    const Vocab& word_vocab);

struct CopyRolloutStats {
  std::vector<std::size_t> cursor_trace;  // cursor after each decoder step
  std::size_t oov = 0;
};

// Teacher-forced per-example loss: -sum_t log p(y_t). The alignment embedding
// is the action-probability-weighted mix of the current and next operator
// embeddings (soft training); the cursor itself advances by hard argmax.
Tensor enhanced_example_loss(Tape& tape, const CopyExample& ex, const std::vector<int>& sop_ids,
                             const CopyNetParams& params, const Vocab& word_vocab,
                             CopyRolloutStats* stats = nullptr);

// L_enh = (1/N) sum_k [-sum_t log p(y_t)]: sum over steps, mean over examples.
Tensor enhanced_loss(Tape& tape, const std::vector<CopyExample>& batch,
                     const std::vector<std::vector<int>>& sops, const CopyNetParams& params,
                     const Vocab& word_vocab, std::size_t* oov_count = nullptr,
                     std::vector<CopyRolloutStats>* stats = nullptr);

// Reference path without operator conditioning: w_gen restricted to its
// (dec_hid + enc_hid) rows and w_copy to its dec_hid columns, no e_sop, no
// action MLP. Matches enhanced_loss bitwise when conditioning() is zeroed.
Tensor plain_example_loss(Tape& tape, const CopyExample& ex, const CopyNetParams& params,
                          const Vocab& word_vocab, std::size_t* oov_count = nullptr);

Tensor plain_copynet_loss(Tape& tape, const std::vector<CopyExample>& batch,
                          const CopyNetParams& params, const Vocab& word_vocab,
                          std::size_t* oov_count = nullptr);

struct CopyPrediction {
  std::vector<std::string> words;  // EOS excluded
  std::vector<std::size_t> cursor_trace;
};

// Greedy decode over the collapsed distribution; hard alignment actions.
CopyPrediction copynet_decode(const std::vector<std::string>& question,
                              const std::vector<int>& sop_ids, const CopyNetParams& params,
                              const Vocab& word_vocab, std::size_t max_len);

struct CopyTrainConfig {
  std::size_t epochs = 30;
  double lr0 = 1e-3;
  std::size_t batch_size = 4;
  std::size_t lr_step = 10;
  double lr_gamma = 0.1;
  std::uint64_t seed = 13;
  CopyNetConfig model;

  void validate() const;
};

struct CopyNetModel {
  CopyNetConfig config;
  std::vector<std::string> word_symbols;
  std::vector<std::string> op_symbols;
  CopyNetParams params;

  Vocab word_vocab() const { return Vocab::from_symbols(word_symbols); }
  Vocab op_vocab() const { return Vocab::from_symbols(op_symbols); }
};

struct CopyEpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct CopyTrainReport {
  std::vector<CopyEpochRecord> epochs;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

// Operator sequences per example come from a frozen predictor or the gold
// annotations; sops[k] conditions corpus[k].
CopyNetModel train_copynet(const CopyTrainConfig& config, const std::vector<CopyExample>& corpus,
                           const std::vector<std::vector<int>>& sops,
                           CopyTrainReport* report = nullptr);

// Maps each example's gold operator names into ids.
std::vector<std::vector<int>> gold_sops(const std::vector<CopyExample>& corpus,
                                        const Vocab& op_vocab);

void save_copynet(const std::string& path, const CopyNetModel& model);
CopyNetModel load_copynet(const std::string& path);

}  // namespace qops
