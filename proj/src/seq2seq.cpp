#include "qops/seq2seq.hpp"

#include <algorithm>
#include <stdexcept>

#include "qops/rng.hpp"
#include "qops/vocab.hpp"

namespace qops {

void ModelConfig::validate() const {
  if (enc_emb_dim == 0 || enc_hid_dim == 0 || dec_emb_dim == 0 || dec_hid_dim == 0)
    throw std::invalid_argument("model dimensions must be positive");
  if (pos_vocab_size == 0 || op_vocab_size == 0)
    throw std::invalid_argument("vocab sizes must be positive");
}

ModelConfig ModelConfig::ex1(std::size_t pos_vocab, std::size_t op_vocab) {
  ModelConfig c;
  c.enc_emb_dim = 3;
  c.enc_hid_dim = 3;
  c.dec_emb_dim = 3;
  c.dec_hid_dim = 3;
  c.pos_vocab_size = pos_vocab;
  c.op_vocab_size = op_vocab;
  return c;
}

ModelConfig ModelConfig::ex2(std::size_t pos_vocab, std::size_t op_vocab) {
  ModelConfig c;
  c.enc_emb_dim = 5;
  c.enc_hid_dim = 10;
  c.dec_emb_dim = 4;
  c.dec_hid_dim = 12;
  c.pos_vocab_size = pos_vocab;
  c.op_vocab_size = op_vocab;
  return c;
}

std::string to_string(GStateChoice c) {
  return c == GStateChoice::kPrevious ? "previous" : "current";
}

GStateChoice g_state_choice_from_string(const std::string& s) {
  if (s == "previous") return GStateChoice::kPrevious;
  if (s == "current") return GStateChoice::kCurrent;
  throw std::invalid_argument("g_state_choice must be 'previous' or 'current', got '" + s + "'");
}

Tensor init_uniform(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  auto& d = t.data();
  for (auto& v : d) v = rng.uniform(-0.08, 0.08);
  return t;
}

GruGates init_gru(std::size_t in_dim, std::size_t hid_dim, Rng& rng) {
  GruGates g;
  g.w_z = init_uniform({in_dim, hid_dim}, rng);
  g.u_z = init_uniform({hid_dim, hid_dim}, rng);
  g.b_z = Tensor::zeros({1, hid_dim}, true);
  g.w_r = init_uniform({in_dim, hid_dim}, rng);
  g.u_r = init_uniform({hid_dim, hid_dim}, rng);
  g.b_r = Tensor::zeros({1, hid_dim}, true);
  g.w_h = init_uniform({in_dim, hid_dim}, rng);
  g.u_h = init_uniform({hid_dim, hid_dim}, rng);
  g.b_h = Tensor::zeros({1, hid_dim}, true);
  return g;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ModelParams p;
  p.e_pos = init_uniform({config.pos_vocab_size, config.enc_emb_dim}, rng);
  p.e_op = init_uniform({config.op_vocab_size, config.dec_emb_dim}, rng);
  p.encoder = init_gru(config.enc_emb_dim, config.enc_hid_dim, rng);
  p.decoder = init_gru(config.dec_emb_dim + config.enc_hid_dim, config.dec_hid_dim, rng);
  p.w_bridge = init_uniform({config.enc_hid_dim, config.dec_hid_dim}, rng);
  p.v_a = init_uniform({config.attn_dim(), 1}, rng);
  p.w_a = init_uniform({config.dec_hid_dim, config.attn_dim()}, rng);
  p.u_a = init_uniform({config.enc_hid_dim, config.attn_dim()}, rng);
  p.w_op = init_uniform(
      {config.dec_emb_dim + config.enc_hid_dim + config.dec_hid_dim, config.op_vocab_size}, rng);
  return p;
}

static void append_gru(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                       const GruGates& g) {
  out.emplace_back(prefix + ".w_z", g.w_z);
  out.emplace_back(prefix + ".u_z", g.u_z);
  out.emplace_back(prefix + ".b_z", g.b_z);
  out.emplace_back(prefix + ".w_r", g.w_r);
  out.emplace_back(prefix + ".u_r", g.u_r);
  out.emplace_back(prefix + ".b_r", g.b_r);
  out.emplace_back(prefix + ".w_h", g.w_h);
  out.emplace_back(prefix + ".u_h", g.u_h);
  out.emplace_back(prefix + ".b_h", g.b_h);
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("e_pos", e_pos);
  out.emplace_back("e_op", e_op);
  append_gru(out, "encoder", encoder);
  append_gru(out, "decoder", decoder);
  out.emplace_back("w_bridge", w_bridge);
  out.emplace_back("v_a", v_a);
  out.emplace_back("w_a", w_a);
  out.emplace_back("u_a", u_a);
  out.emplace_back("w_op", w_op);
  return out;
}

std::vector<Tensor> ModelParams::all() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

Tensor gru_cell(Tape& tape, const Tensor& x, const Tensor& h_prev, const GruGates& gates) {
  Tensor z = sigmoid(tape, add(tape, add(tape, matmul(tape, x, gates.w_z),
                                         matmul(tape, h_prev, gates.u_z)),
                               gates.b_z));
  Tensor r = sigmoid(tape, add(tape, add(tape, matmul(tape, x, gates.w_r),
                                         matmul(tape, h_prev, gates.u_r)),
                               gates.b_r));
  Tensor hbar = tanh(tape, add(tape, add(tape, matmul(tape, x, gates.w_h),
                                         matmul(tape, mul(tape, r, h_prev), gates.u_h)),
                               gates.b_h));
  // h' = h + z . (hbar - h), same value as (1-z).h + z.hbar with one fewer op.
  return add(tape, h_prev, mul(tape, z, sub(tape, hbar, h_prev)));
}

Tensor encode_with(Tape& tape, const std::vector<int>& ids, const Tensor& table,
                   const GruGates& gates) {
  if (ids.empty()) throw std::invalid_argument("encode: empty input sequence");
  std::size_t hid = gates.u_z.rows();
  Tensor h = Tensor::zeros({1, hid});
  std::vector<Tensor> states;
  states.reserve(ids.size());
  for (int id : ids) {
    Tensor x = embedding_lookup(tape, table, static_cast<std::size_t>(id));
    h = gru_cell(tape, x, h, gates);
    states.push_back(h);
  }
  return stack_rows(tape, states);
}

Tensor encode(Tape& tape, const std::vector<int>& pos_ids, const ModelParams& params) {
  return encode_with(tape, pos_ids, params.e_pos, params.encoder);
}

Attention attend_with(Tape& tape, const Tensor& s_prev, const Tensor& enc_states,
                      const Tensor& v_a, const Tensor& w_a, const Tensor& u_a) {
  // t_x x attn, each row shifted by the decoder-state projection.
  Tensor proj = add_rowwise(tape, matmul(tape, enc_states, u_a), matmul(tape, s_prev, w_a));
  Tensor scores = matmul(tape, tanh(tape, proj), v_a);  // t_x x 1
  Tensor weights = softmax(tape, scores);
  Tensor context = matmul(tape, transpose(tape, weights), enc_states);  // 1 x enc_hid
  return Attention{context, weights};
}

Attention attend(Tape& tape, const Tensor& s_prev, const Tensor& enc_states,
                 const ModelParams& params) {
  return attend_with(tape, s_prev, enc_states, params.v_a, params.w_a, params.u_a);
}

Tensor decoder_init(Tape& tape, const Tensor& enc_states, const ModelParams& params) {
  Tensor h_last = row(tape, enc_states, enc_states.rows() - 1);
  return tanh(tape, matmul(tape, h_last, params.w_bridge));
}

DecodeStep decode_step(Tape& tape, int y_prev_id, const Tensor& s_prev,
                       const Tensor& enc_states, const ModelParams& params,
                       const ModelConfig& config) {
  Tensor y_emb = embedding_lookup(tape, params.e_op, y_prev_id);
  Attention att = attend(tape, s_prev, enc_states, params);
  Tensor x = concat(tape, {y_emb, att.context});
  Tensor s_new = gru_cell(tape, x, s_prev, params.decoder);
  const Tensor& s_sel = config.g_state_choice == GStateChoice::kPrevious ? s_prev : s_new;
  Tensor logits = matmul(tape, concat(tape, {y_emb, att.context, s_sel}), params.w_op);
  Tensor dist = softmax(tape, logits);
  return DecodeStep{dist, s_new, att.weights};
}

int masked_argmax(const Tensor& dist, const std::vector<int>& excluded_ids) {
  const auto& d = dist.data();
  int best = -1;
  double best_v = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (std::find(excluded_ids.begin(), excluded_ids.end(), static_cast<int>(i)) !=
        excluded_ids.end())
      continue;
    if (best < 0 || d[i] > best_v) {
      best = static_cast<int>(i);
      best_v = d[i];
    }
  }
  if (best < 0) throw std::invalid_argument("masked_argmax: all ids excluded");
  return best;
}

Prediction predict(const std::vector<int>& pos_ids, const ModelParams& params,
                   const ModelConfig& config, std::size_t max_len) {
  Tape tape;
  Tensor enc = encode(tape, pos_ids, params);
  Tensor s = decoder_init(tape, enc, params);
  Prediction out;
  int y_prev = kSosId;
  for (std::size_t t = 0; t < max_len; ++t) {
    DecodeStep step = decode_step(tape, y_prev, s, enc, params, config);
    int y = masked_argmax(step.dist, {kPadId, kSosId});
    if (y == kEosId) break;
    out.op_ids.push_back(y);
    out.trace.rows.push_back(step.weights.data());
    s = step.state;
    y_prev = y;
  }
  return out;
}

}  // namespace qops
