#include "qops/copynet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "qops/checkpoint.hpp"
#include "qops/corpus.hpp"
#include "qops/rng.hpp"
#include "qops/training.hpp"

namespace qops {

std::vector<CopyExample> load_copy_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_copy_jsonl: cannot open '" + path + "'");
  std::vector<CopyExample> out;
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
    CopyExample ex;
    try {
      ex.id = j.at("id").get<std::string>();
      ex.question = j.at("question").get<std::vector<std::string>>();
      ex.decomposition = j.at("decomposition").get<std::vector<std::string>>();
      ex.ops = j.at("ops").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (ex.question.empty() || ex.decomposition.empty() || ex.ops.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": question, decomposition and ops must be non-empty");
    out.push_back(std::move(ex));
  }
  return out;
}

void save_copy_jsonl(const std::vector<CopyExample>& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_copy_jsonl: cannot open '" + path + "'");
  for (const CopyExample& ex : corpus) {
    nlohmann::json j;
    j["id"] = ex.id;
    j["question"] = ex.question;
    j["decomposition"] = ex.decomposition;
    j["ops"] = ex.ops;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_copy_jsonl: write to '" + path + "' failed");
}

Vocab build_word_vocab(const std::vector<CopyExample>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("build_word_vocab: empty corpus");
  Vocab v;
  for (const CopyExample& ex : corpus) {
    for (const auto& w : ex.question) v.add(w);
    for (const auto& w : ex.decomposition) v.add(w);
  }
  return v;
}

void CopyNetConfig::validate() const {
  if (emb_dim == 0 || enc_hid_dim == 0 || dec_hid_dim == 0 || sop_dim == 0 || action_hidden == 0)
    throw std::invalid_argument("copynet dimensions must be positive");
  if (word_vocab_size == 0 || op_vocab_size == 0)
    throw std::invalid_argument("copynet vocab sizes must be positive");
}

CopyNetParams init_copynet(const CopyNetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  CopyNetParams p;
  p.e_word = init_uniform({config.word_vocab_size, config.emb_dim}, rng);
  p.encoder = init_gru(config.emb_dim, config.enc_hid_dim, rng);
  p.decoder = init_gru(config.emb_dim + config.enc_hid_dim, config.dec_hid_dim, rng);
  p.w_bridge = init_uniform({config.enc_hid_dim, config.dec_hid_dim}, rng);
  p.v_a = init_uniform({config.attn_dim(), 1}, rng);
  p.w_a = init_uniform({config.dec_hid_dim, config.attn_dim()}, rng);
  p.u_a = init_uniform({config.enc_hid_dim, config.attn_dim()}, rng);
  p.e_sop = init_uniform({config.op_vocab_size, config.sop_dim}, rng);
  p.w_gen = init_uniform(
      {config.dec_hid_dim + config.enc_hid_dim + config.sop_dim, config.word_vocab_size}, rng);
  p.w_copy = init_uniform({config.enc_hid_dim, config.dec_hid_dim + config.sop_dim}, rng);
  p.w_act1 = init_uniform({config.emb_dim + config.sop_dim, config.action_hidden}, rng);
  p.b_act1 = Tensor::zeros({1, config.action_hidden}, true);
  p.w_act2 = init_uniform({config.action_hidden, 2}, rng);
  p.b_act2 = Tensor::zeros({1, 2}, true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> CopyNetParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("e_word", e_word);
  auto gru = [&](const std::string& prefix, const GruGates& g) {
    out.emplace_back(prefix + ".w_z", g.w_z);
    out.emplace_back(prefix + ".u_z", g.u_z);
    out.emplace_back(prefix + ".b_z", g.b_z);
    out.emplace_back(prefix + ".w_r", g.w_r);
    out.emplace_back(prefix + ".u_r", g.u_r);
    out.emplace_back(prefix + ".b_r", g.b_r);
    out.emplace_back(prefix + ".w_h", g.w_h);
    out.emplace_back(prefix + ".u_h", g.u_h);
    out.emplace_back(prefix + ".b_h", g.b_h);
  };
  gru("encoder", encoder);
  gru("decoder", decoder);
  out.emplace_back("w_bridge", w_bridge);
  out.emplace_back("v_a", v_a);
  out.emplace_back("w_a", w_a);
  out.emplace_back("u_a", u_a);
  out.emplace_back("e_sop", e_sop);
  out.emplace_back("w_gen", w_gen);
  out.emplace_back("w_copy", w_copy);
  out.emplace_back("w_act1", w_act1);
  out.emplace_back("b_act1", b_act1);
  out.emplace_back("w_act2", w_act2);
  out.emplace_back("b_act2", b_act2);
  return out;
}

std::vector<Tensor> CopyNetParams::all() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

std::vector<Tensor> CopyNetParams::conditioning() const {
  return {e_sop, w_act1, b_act1, w_act2, b_act2};
}

Tensor align_action(Tape& tape, const Tensor& y_prev_emb, int sop_id,
                    const CopyNetParams& params) {
  Tensor sop_emb = embedding_lookup(tape, params.e_sop, static_cast<std::size_t>(sop_id));
  Tensor hidden = tanh(tape, add(tape, matmul(tape, concat(tape, {y_prev_emb, sop_emb}),
                                              params.w_act1),
                                 params.b_act1));
  Tensor logits = add(tape, matmul(tape, hidden, params.w_act2), params.b_act2);
  return softmax(tape, logits);
}

AlignmentState advance_alignment(const AlignmentState& state, std::size_t action,
                                 const std::vector<int>& sop) {
  if (sop.empty()) throw std::invalid_argument("advance_alignment: empty operator sequence");
  if (state.cursor >= sop.size())
    throw std::out_of_range("advance_alignment: cursor outside the operator sequence");
  if (action != kUseCurrent && action != kUseNext)
    throw std::invalid_argument("advance_alignment: unknown action");
  AlignmentState next = state;
  if (action == kUseNext) next.cursor = std::min(next.cursor + 1, sop.size() - 1);
  next.alsop = sop[next.cursor];
  return next;
}

MixtureDist copy_gen_dist(Tape& tape, const Tensor& s_t, const Tensor& c_t,
                          const Tensor& enc_states, const Tensor& alsop_emb,
                          const CopyNetParams& params) {
  if (enc_states.rows() == 0) throw std::invalid_argument("copy_gen_dist: empty source");
  Tensor gen_scores = matmul(tape, concat(tape, {s_t, c_t, alsop_emb}), params.w_gen);
  Tensor copy_keys = tanh(tape, matmul(tape, enc_states, params.w_copy));  // t_s x (dec+sop)
  Tensor query = transpose(tape, concat(tape, {s_t, alsop_emb}));          // (dec+sop) x 1
  Tensor copy_scores = transpose(tape, matmul(tape, copy_keys, query));    // 1 x t_s
  MixtureDist dist;
  dist.vocab_size = gen_scores.cols();
  dist.source_len = enc_states.rows();
  dist.full = softmax(tape, concat(tape, {gen_scores, copy_scores}));
  return dist;
}

Tensor target_word_prob(Tape& tape, const MixtureDist& dist, const std::string& word,
                        const std::vector<std::string>& source_tokens, const Vocab& word_vocab,
                        std::size_t* oov_count) {
  if (source_tokens.size() != dist.source_len)
    throw std::logic_error("target_word_prob: source token count does not match the mixture");
  std::vector<Tensor> parts;
  if (word_vocab.contains(word))
    parts.push_back(pick(tape, dist.full, static_cast<std::size_t>(word_vocab.id_of(word))));
  for (std::size_t j = 0; j < source_tokens.size(); ++j)
    if (source_tokens[j] == word) parts.push_back(pick(tape, dist.full, dist.vocab_size + j));
  if (parts.empty()) {
    if (oov_count) ++*oov_count;
    return pick(tape, dist.full, static_cast<std::size_t>(kUnkId));
  }
  if (parts.size() == 1) return parts.front();
  return sum(tape, concat(tape, parts));
}

std::vector<std::pair<std::string, double>> collapsed_dist(
    const MixtureDist& dist, const std::vector<std::string>& source_tokens,
    const Vocab& word_vocab) {
  if (source_tokens.size() != dist.source_len)
    throw std::logic_error("collapsed_dist: source token count does not match the mixture");
  std::vector<std::pair<std::string, double>> out;
  out.reserve(dist.vocab_size + source_tokens.size());
  for (std::size_t v = 0; v < dist.vocab_size; ++v)
    out.emplace_back(word_vocab.symbol_of(static_cast<int>(v)), dist.full.at(v));
  for (std::size_t j = 0; j < source_tokens.size(); ++j) {
    double mass = dist.full.at(dist.vocab_size + j);
    const std::string& tok = source_tokens[j];
    if (word_vocab.contains(tok)) {
      out[static_cast<std::size_t>(word_vocab.id_of(tok))].second += mass;
    } else {
      auto it = std::find_if(out.begin() + static_cast<long>(dist.vocab_size), out.end(),
                             [&](const auto& e) { return e.first == tok; });
      if (it == out.end())
        out.emplace_back(tok, mass);
      else
        it->second += mass;
    }
  }
  return out;
}

namespace {

struct DecoderSetup {
  std::vector<int> frame_ids;             // SOS, target ids..., EOS
  std::vector<std::string> frame_words;   // target words..., <eos>; scored per step
};

DecoderSetup make_setup(const CopyExample& ex, const Vocab& word_vocab) {
  DecoderSetup s;
  s.frame_ids.push_back(kSosId);
  for (const auto& w : ex.decomposition) s.frame_ids.push_back(word_vocab.id_of(w));
  s.frame_ids.push_back(kEosId);
  s.frame_words = ex.decomposition;
  s.frame_words.push_back(kEosSymbol);
  return s;
}

Tensor negative_log_sum(Tape& tape, std::vector<Tensor>& probs) {
  Tensor joined = probs.size() == 1 ? probs.front() : concat(tape, probs);
  return scale(tape, sum(tape, log(tape, joined)), -1.0);
}

}  // namespace

Tensor enhanced_example_loss(Tape& tape, const CopyExample& ex, const std::vector<int>& sop_ids,
                             const CopyNetParams& params, const Vocab& word_vocab,
                             CopyRolloutStats* stats) {
  if (sop_ids.empty())
    throw std::invalid_argument("enhanced_example_loss: empty operator sequence");
  std::vector<int> source_ids;
  for (const auto& w : ex.question) source_ids.push_back(word_vocab.id_of(w));
  DecoderSetup setup = make_setup(ex, word_vocab);
  std::size_t steps = setup.frame_ids.size() - 1;

  Tensor enc = encode_with(tape, source_ids, params.e_word, params.encoder);
  Tensor s = tanh(tape, matmul(tape, row(tape, enc, enc.rows() - 1), params.w_bridge));

  std::size_t cursor = 0;
  std::size_t last = sop_ids.size() - 1;
  std::vector<Tensor> probs;
  probs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor y_emb = embedding_lookup(tape, params.e_word,
                                    static_cast<std::size_t>(setup.frame_ids[t]));
    Attention att = attend_with(tape, s, enc, params.v_a, params.w_a, params.u_a);

    Tensor alsop_emb;
    if (t == 0) {
      alsop_emb = embedding_lookup(tape, params.e_sop, static_cast<std::size_t>(sop_ids[0]));
    } else {
      // Soft alignment for training: expected operator embedding under the
      // action distribution; the cursor itself moves by hard argmax.
      Tensor action = align_action(tape, y_emb, sop_ids[cursor], params);
      std::size_t next = std::min(cursor + 1, last);
      Tensor emb_cur = embedding_lookup(tape, params.e_sop, static_cast<std::size_t>(sop_ids[cursor]));
      Tensor emb_next = embedding_lookup(tape, params.e_sop, static_cast<std::size_t>(sop_ids[next]));
      alsop_emb = add(tape, mul_scalar(tape, emb_cur, pick(tape, action, kUseCurrent)),
                      mul_scalar(tape, emb_next, pick(tape, action, kUseNext)));
      if (action.at(kUseNext) > action.at(kUseCurrent)) cursor = next;
    }

    Tensor x = concat(tape, {y_emb, att.context});
    s = gru_cell(tape, x, s, params.decoder);
    MixtureDist dist = copy_gen_dist(tape, s, att.context, enc, alsop_emb, params);
    probs.push_back(target_word_prob(tape, dist, setup.frame_words[t], ex.question, word_vocab,
                                     stats ? &stats->oov : nullptr));
    if (stats) stats->cursor_trace.push_back(cursor);
  }
  return negative_log_sum(tape, probs);
}

Tensor enhanced_loss(Tape& tape, const std::vector<CopyExample>& batch,
                     const std::vector<std::vector<int>>& sops, const CopyNetParams& params,
                     const Vocab& word_vocab, std::size_t* oov_count,
                     std::vector<CopyRolloutStats>* stats) {
  if (batch.empty()) throw std::invalid_argument("enhanced_loss: empty batch");
  if (sops.size() != batch.size())
    throw std::invalid_argument("enhanced_loss: one operator sequence per example required");
  std::vector<Tensor> losses;
  losses.reserve(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    CopyRolloutStats local;
    losses.push_back(enhanced_example_loss(tape, batch[k], sops[k], params, word_vocab, &local));
    if (oov_count) *oov_count += local.oov;
    if (stats) stats->push_back(std::move(local));
  }
  Tensor total = losses.size() == 1 ? losses.front() : sum(tape, concat(tape, losses));
  return scale(tape, total, 1.0 / static_cast<double>(losses.size()));
}

Tensor plain_example_loss(Tape& tape, const CopyExample& ex, const CopyNetParams& params,
                          const Vocab& word_vocab, std::size_t* oov_count) {
  std::vector<int> source_ids;
  for (const auto& w : ex.question) source_ids.push_back(word_vocab.id_of(w));
  DecoderSetup setup = make_setup(ex, word_vocab);
  std::size_t steps = setup.frame_ids.size() - 1;

  std::size_t dec_hid = params.w_bridge.cols();
  std::size_t enc_hid = params.w_bridge.rows();
  Tensor w_gen = slice_rows(tape, params.w_gen, 0, dec_hid + enc_hid);
  Tensor w_copy = slice_cols(tape, params.w_copy, 0, dec_hid);

  Tensor enc = encode_with(tape, source_ids, params.e_word, params.encoder);
  Tensor s = tanh(tape, matmul(tape, row(tape, enc, enc.rows() - 1), params.w_bridge));

  std::vector<Tensor> probs;
  probs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor y_emb = embedding_lookup(tape, params.e_word,
                                    static_cast<std::size_t>(setup.frame_ids[t]));
    Attention att = attend_with(tape, s, enc, params.v_a, params.w_a, params.u_a);
    Tensor x = concat(tape, {y_emb, att.context});
    s = gru_cell(tape, x, s, params.decoder);

    Tensor gen_scores = matmul(tape, concat(tape, {s, att.context}), w_gen);
    Tensor copy_keys = tanh(tape, matmul(tape, enc, w_copy));
    Tensor copy_scores = transpose(tape, matmul(tape, copy_keys, transpose(tape, s)));
    MixtureDist dist;
    dist.vocab_size = gen_scores.cols();
    dist.source_len = enc.rows();
    dist.full = softmax(tape, concat(tape, {gen_scores, copy_scores}));
    probs.push_back(
        target_word_prob(tape, dist, setup.frame_words[t], ex.question, word_vocab, oov_count));
  }
  return negative_log_sum(tape, probs);
}

Tensor plain_copynet_loss(Tape& tape, const std::vector<CopyExample>& batch,
                          const CopyNetParams& params, const Vocab& word_vocab,
                          std::size_t* oov_count) {
  if (batch.empty()) throw std::invalid_argument("plain_copynet_loss: empty batch");
  std::vector<Tensor> losses;
  losses.reserve(batch.size());
  for (const CopyExample& ex : batch)
    losses.push_back(plain_example_loss(tape, ex, params, word_vocab, oov_count));
  Tensor total = losses.size() == 1 ? losses.front() : sum(tape, concat(tape, losses));
  return scale(tape, total, 1.0 / static_cast<double>(losses.size()));
}

CopyPrediction copynet_decode(const std::vector<std::string>& question,
                              const std::vector<int>& sop_ids, const CopyNetParams& params,
                              const Vocab& word_vocab, std::size_t max_len) {
  if (question.empty()) throw std::invalid_argument("copynet_decode: empty question");
  if (sop_ids.empty()) throw std::invalid_argument("copynet_decode: empty operator sequence");
  Tape tape;
  std::vector<int> source_ids;
  for (const auto& w : question) source_ids.push_back(word_vocab.id_of(w));
  Tensor enc = encode_with(tape, source_ids, params.e_word, params.encoder);
  Tensor s = tanh(tape, matmul(tape, row(tape, enc, enc.rows() - 1), params.w_bridge));

  CopyPrediction out;
  std::size_t cursor = 0;
  std::size_t last = sop_ids.size() - 1;
  int y_prev = kSosId;
  for (std::size_t t = 0; t < max_len; ++t) {
    Tensor y_emb = embedding_lookup(tape, params.e_word, static_cast<std::size_t>(y_prev));
    Attention att = attend_with(tape, s, enc, params.v_a, params.w_a, params.u_a);
    if (t > 0) {
      Tensor action = align_action(tape, y_emb, sop_ids[cursor], params);
      if (action.at(kUseNext) > action.at(kUseCurrent)) cursor = std::min(cursor + 1, last);
    }
    Tensor alsop_emb =
        embedding_lookup(tape, params.e_sop, static_cast<std::size_t>(sop_ids[cursor]));
    Tensor x = concat(tape, {y_emb, att.context});
    s = gru_cell(tape, x, s, params.decoder);
    MixtureDist dist = copy_gen_dist(tape, s, att.context, enc, alsop_emb, params);
    auto words = collapsed_dist(dist, question, word_vocab);

    std::size_t best = 0;
    double best_p = -1.0;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (words[i].first == kPadSymbol || words[i].first == kSosSymbol) continue;
      if (words[i].second > best_p) {
        best = i;
        best_p = words[i].second;
      }
    }
    const std::string& word = words[best].first;
    if (word == kEosSymbol) break;
    out.words.push_back(word);
    out.cursor_trace.push_back(cursor);
    y_prev = word_vocab.id_of(word);
  }
  return out;
}

void CopyTrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (lr0 <= 0.0) throw std::invalid_argument("lr0 must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (lr_step == 0) throw std::invalid_argument("lr_step must be positive");
  if (lr_gamma <= 0.0) throw std::invalid_argument("lr_gamma must be positive");
}

std::vector<std::vector<int>> gold_sops(const std::vector<CopyExample>& corpus,
                                        const Vocab& op_vocab) {
  std::vector<std::vector<int>> out;
  out.reserve(corpus.size());
  for (const CopyExample& ex : corpus) {
    std::vector<int> ids;
    for (const auto& name : ex.ops) {
      if (!op_vocab.contains(name))
        throw std::invalid_argument("gold_sops: example '" + ex.id + "' uses unknown operator '" +
                                    name + "'");
      ids.push_back(op_vocab.id_of(name));
    }
    out.push_back(std::move(ids));
  }
  return out;
}

CopyNetModel train_copynet(const CopyTrainConfig& config, const std::vector<CopyExample>& corpus,
                           const std::vector<std::vector<int>>& sops, CopyTrainReport* report) {
  config.validate();
  if (corpus.empty()) throw std::invalid_argument("train_copynet: empty corpus");
  if (sops.size() != corpus.size())
    throw std::invalid_argument("train_copynet: one operator sequence per example required");
  auto t_start = std::chrono::steady_clock::now();

  Vocab word_vocab = build_word_vocab(corpus);
  Vocab op_vocab = OperatorSet::qdmr().vocab();
  CopyNetModel model;
  model.config = config.model;
  model.config.word_vocab_size = word_vocab.size();
  model.config.op_vocab_size = op_vocab.size();
  model.config.validate();
  model.word_symbols = word_vocab.symbols();
  model.op_symbols = op_vocab.symbols();
  model.params = init_copynet(model.config, config.seed);
  std::vector<Tensor> all_params = model.params.all();
  AdamState adam(all_params);

  if (report) {
    report->epochs.clear();
    report->seed = config.seed;
  }

  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double lr = lr_schedule(epoch, config.lr0, config.lr_step, config.lr_gamma);
    Rng shuffle_rng(derive_seed(config.seed, 1, epoch, 0));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t num_batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      std::size_t b1 = std::min(b0 + config.batch_size, order.size());
      std::vector<CopyExample> batch;
      std::vector<std::vector<int>> batch_sops;
      for (std::size_t i = b0; i < b1; ++i) {
        batch.push_back(corpus[order[i]]);
        batch_sops.push_back(sops[order[i]]);
      }
      Tape tape;
      Tensor loss = enhanced_loss(tape, batch, batch_sops, model.params, word_vocab);
      double loss_value = loss.value();
      if (!std::isfinite(loss_value))
        throw std::runtime_error("train_copynet: non-finite loss at epoch " +
                                 std::to_string(epoch) + " batch " + std::to_string(num_batches));
      tape.backward(loss);
      adam_step(all_params, adam, lr);
      loss_sum += loss_value;
      ++num_batches;
    }

    if (report) {
      CopyEpochRecord rec;
      rec.epoch = epoch;
      rec.loss = loss_sum / static_cast<double>(num_batches);
      rec.lr = lr;
      report->epochs.push_back(rec);
    }
  }

  if (report)
    report->wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return model;
}

void save_copynet(const std::string& path, const CopyNetModel& model) {
  Checkpoint ckpt;
  ckpt.section = "CNET";
  ckpt.config["emb_dim"] = std::to_string(model.config.emb_dim);
  ckpt.config["enc_hid_dim"] = std::to_string(model.config.enc_hid_dim);
  ckpt.config["dec_hid_dim"] = std::to_string(model.config.dec_hid_dim);
  ckpt.config["attention_dim"] = std::to_string(model.config.attention_dim);
  ckpt.config["sop_dim"] = std::to_string(model.config.sop_dim);
  ckpt.config["action_hidden"] = std::to_string(model.config.action_hidden);
  ckpt.config["word_vocab"] = join_list(model.word_symbols);
  ckpt.config["op_vocab"] = join_list(model.op_symbols);
  ckpt.tensors = model.params.named();
  save_checkpoint(path, ckpt);
}

CopyNetModel load_copynet(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.section != "CNET")
    throw std::runtime_error("load_copynet: '" + path + "' holds a '" + ckpt.section +
                             "' section, not CNET");
  CopyNetModel model;
  model.word_symbols = split_list(config_get(ckpt, "word_vocab"));
  model.op_symbols = split_list(config_get(ckpt, "op_vocab"));
  model.config.emb_dim = config_get_size(ckpt, "emb_dim");
  model.config.enc_hid_dim = config_get_size(ckpt, "enc_hid_dim");
  model.config.dec_hid_dim = config_get_size(ckpt, "dec_hid_dim");
  model.config.attention_dim = config_get_size(ckpt, "attention_dim");
  model.config.sop_dim = config_get_size(ckpt, "sop_dim");
  model.config.action_hidden = config_get_size(ckpt, "action_hidden");
  model.config.word_vocab_size = model.word_symbols.size();
  model.config.op_vocab_size = model.op_symbols.size();
  model.config.validate();

  model.params = init_copynet(model.config, 0);
  auto expected = model.params.named();
  if (expected.size() != ckpt.tensors.size())
    throw std::runtime_error("load_copynet: expected " + std::to_string(expected.size()) +
                             " tensors, file holds " + std::to_string(ckpt.tensors.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    auto& [want_name, want] = expected[i];
    auto& [got_name, got] = ckpt.tensors[i];
    if (want_name != got_name)
      throw std::runtime_error("load_copynet: tensor " + std::to_string(i) + " is '" + got_name +
                               "', expected '" + want_name + "'");
    if (want.shape() != got.shape())
      throw std::runtime_error("load_copynet: tensor '" + got_name +
                               "' shape does not match the config dims");
    want.data() = got.data();
  }
  return model;
}

}  // namespace qops
