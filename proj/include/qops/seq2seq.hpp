#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qops/tensor.hpp"

namespace qops {

enum class GStateChoice { kPrevious, kCurrent };

// Dimensions of the operator-prediction model. The two experiment presets
// are ex1 = (3,3,3,3) and ex2 = (5,10,4,12); attention_dim defaults to
// dec_hid_dim when left 0.
struct ModelConfig {
  std::size_t enc_emb_dim = 3;
  std::size_t enc_hid_dim = 3;
  std::size_t dec_emb_dim = 3;
  std::size_t dec_hid_dim = 3;
  std::size_t pos_vocab_size = 0;
  std::size_t op_vocab_size = 0;
  std::size_t attention_dim = 0;
  GStateChoice g_state_choice = GStateChoice::kPrevious;

  std::size_t attn_dim() const { return attention_dim ? attention_dim : dec_hid_dim; }
  void validate() const;

  static ModelConfig ex1(std::size_t pos_vocab, std::size_t op_vocab);
  static ModelConfig ex2(std::size_t pos_vocab, std::size_t op_vocab);
};

std::string to_string(GStateChoice c);
GStateChoice g_state_choice_from_string(const std::string& s);

// One GRU cell's weights, input_dim -> hid_dim, stored for the row-vector
// convention: x(1 x in) * W(in x hid) + h(1 x hid) * U(hid x hid) + b(1 x hid).
struct GruGates {
  Tensor w_z, u_z, b_z;
  Tensor w_r, u_r, b_r;
  Tensor w_h, u_h, b_h;
};

struct ModelParams {
  Tensor e_pos;  // pos_vocab x enc_emb
  Tensor e_op;   // op_vocab x dec_emb
  GruGates encoder;
  GruGates decoder;
  Tensor w_bridge;  // enc_hid x dec_hid, decoder init s_0 = tanh(h_last * w_bridge)
  Tensor v_a;       // attn x 1
  Tensor w_a;       // dec_hid x attn
  Tensor u_a;       // enc_hid x attn
  Tensor w_op;      // (dec_emb + enc_hid + dec_hid) x op_vocab

  // (name, tensor) pairs in a fixed order; the order defines checkpoint
  // layout and optimizer-state association.
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> all() const;
};

// Weights uniform(-0.08, 0.08), biases zero, drawn in named() order.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

GruGates init_gru(std::size_t in_dim, std::size_t hid_dim, class Rng& rng);
Tensor init_uniform(std::vector<std::size_t> shape, class Rng& rng);

// z = sigmoid(x w_z + h u_z + b_z), r = sigmoid(x w_r + h u_r + b_r),
// hbar = tanh(x w_h + (r . h) u_h + b_h), h' = (1 - z) . h + z . hbar.
Tensor gru_cell(Tape& tape, const Tensor& x, const Tensor& h_prev, const GruGates& gates);

// GRU chain over embedded ids from a zero state; states stacked as rows.
Tensor encode_with(Tape& tape, const std::vector<int>& ids, const Tensor& table,
                   const GruGates& gates);

// Encoder states stacked as rows: row t is the state after consuming token t.
Tensor encode(Tape& tape, const std::vector<int>& pos_ids, const ModelParams& params);

struct Attention {
  Tensor context;  // 1 x enc_hid
  Tensor weights;  // t_x x 1, nonnegative, sums to 1
};

// Additive attention: score_j = v_a' tanh(w_a s_prev + u_a h_j), weights are
// the softmax over j, context the weighted sum of encoder states.
Attention attend_with(Tape& tape, const Tensor& s_prev, const Tensor& enc_states,
                      const Tensor& v_a, const Tensor& w_a, const Tensor& u_a);

Attention attend(Tape& tape, const Tensor& s_prev, const Tensor& enc_states,
                 const ModelParams& params);

struct DecodeStep {
  Tensor dist;     // 1 x op_vocab, softmax over operator logits
  Tensor state;    // 1 x dec_hid
  Tensor weights;  // attention weights for this step
};

// One decoder step: context from attention with s_prev, GRU over
// (emb(y_prev); context), logits = (emb(y_prev); context; s_sel) * w_op where
// s_sel is s_prev or the new state depending on g_state_choice.
DecodeStep decode_step(Tape& tape, int y_prev_id, const Tensor& s_prev,
                       const Tensor& enc_states, const ModelParams& params,
                       const ModelConfig& config);

// Initial decoder state from the final encoder state.
Tensor decoder_init(Tape& tape, const Tensor& enc_states, const ModelParams& params);

// Per-decode record of attention weights, one row per emitted operator.
struct AttentionTrace {
  std::vector<std::vector<double>> rows;  // t_y x t_x

  std::size_t steps() const { return rows.size(); }
};

struct Prediction {
  std::vector<int> op_ids;  // content operators, EOS excluded
  AttentionTrace trace;
};

// Greedy argmax decode from SOS until EOS or max_len operators. PAD and SOS
// are never emitted (their logits are masked out of the argmax).
Prediction predict(const std::vector<int>& pos_ids, const ModelParams& params,
                   const ModelConfig& config, std::size_t max_len);

// Argmax over a distribution's values with some ids excluded; ties resolve to
// the lowest id.
int masked_argmax(const Tensor& dist, const std::vector<int>& excluded_ids);

}  // namespace qops
