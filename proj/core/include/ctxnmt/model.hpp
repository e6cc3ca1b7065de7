#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctxnmt/context.hpp"
#include "ctxnmt/corpus.hpp"
#include "ctxnmt/error.hpp"
#include "ctxnmt/layers.hpp"
#include "ctxnmt/param_store.hpp"
#include "ctxnmt/strategy.hpp"
#include "ctxnmt/tape.hpp"
#include "ctxnmt/vocab.hpp"

namespace ctxnmt {

struct ModelConfig {
  StrategyConfig strategy;
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t attn_dim = 0;     // 0 picks dec_hidden
  std::size_t readout_dim = 0;  // 0 picks dec_hidden
  std::size_t max_len = 80;     // longest source/target accepted per example

  std::size_t attention_dim() const { return attn_dim ? attn_dim : strategy.dec_hidden; }
  std::size_t readout_width() const { return readout_dim ? readout_dim : strategy.dec_hidden; }

  void validate() const {
    strategy.validate();
    if (src_vocab <= Vocabulary::kReserved || tgt_vocab <= Vocabulary::kReserved) {
      throw ConfigError("vocabulary sizes must exceed the reserved block of " +
                        std::to_string(Vocabulary::kReserved));
    }
    if (max_len == 0) throw ConfigError("max_len must be positive");
  }
};

// The full translation model: shared source embeddings, the two-level
// context summarizer, a bidirectional encoder, additive attention, a GRU
// decoder, and the readout. How the context summary D enters is decided by
// the strategy: recurrent-state initialization, an extra decoder input
// block, a gated version of that block, or combinations.
//
// All entry points are batched; beams and gradient checks simply run with a
// batch of one. Parameters live in an owned ParameterStore and are
// registered in a fixed order so serialization and cross-model weight
// sharing are stable.
template <typename T>
class TranslationModel {
 public:
  TranslationModel(const ModelConfig& cfg, unsigned long long seed) : cfg_(cfg), store_(seed) {
    cfg_.validate();
    const auto& st = cfg_.strategy;
    const std::size_t ann = 2 * st.enc_hidden;
    store_.add("src_emb", {cfg_.src_vocab, st.emb_dim}, Init::kUniform);
    store_.add("tgt_emb", {cfg_.tgt_vocab, st.emb_dim}, Init::kUniform);
    if (st.uses_context()) {
      ctx_ = ContextEncoder<T>::create(store_, "ctx", st.emb_dim, st.ctx_dim);
    }
    enc_fwd_ = GruCell<T>::create(store_, "enc.fwd", st.emb_dim, st.enc_hidden);
    enc_bwd_ = GruCell<T>::create(store_, "enc.bwd", st.emb_dim, st.enc_hidden);
    attn_ = AttentionLayer<T>::create(store_, "attn", st.dec_hidden, ann, cfg_.attention_dim());
    store_.add("init.W_s", {ann, st.dec_hidden}, Init::kUniform);
    if (st.init_decoder()) {
      store_.add("init.W_D", {st.ctx_dim, st.dec_hidden}, Init::kUniform);
    }
    std::size_t dec_in = st.emb_dim + ann;
    if (st.aux_context()) dec_in += st.ctx_dim;
    dec_ = GruCell<T>::create(store_, "dec", dec_in, st.dec_hidden);
    if (st.gated()) {
      gate_ = ContextGate<T>::create(store_, "gate", st.dec_hidden, st.emb_dim, ann, st.ctx_dim);
    }
    out_ = Readout<T>::create(store_, "out", st.dec_hidden, st.emb_dim, ann,
                              cfg_.readout_width(), cfg_.tgt_vocab);
  }

  const ModelConfig& config() const { return cfg_; }
  unsigned long long seed() const { return store_.seed(); }
  ParameterStore<T>& store() { return store_; }
  const ParameterStore<T>& store() const { return store_; }

  // Pins the context gate output to a constant, bypassing its computation.
  // Exists so gate-saturation equivalences are directly testable.
  void force_gate(double value) { forced_gate_ = value; }
  void clear_forced_gate() { forced_gate_.reset(); }
  std::optional<double> forced_gate() const { return forced_gate_; }

  // --- context -------------------------------------------------------------

  // D for a batch of padded windows, [B x d_ctx]; exact zeros when the
  // strategy uses no context or a window is empty.
  TapeVal summarize_windows(Tape<T>& tape, const WindowBatch& windows, std::size_t batch) {
    if (!cfg_.strategy.uses_context()) return tape.zeros({batch, cfg_.strategy.ctx_dim});
    auto emb = tape.param(store_, "src_emb");
    return ctx_.summarize_batch(tape, store_, emb, windows, batch);
  }

  TapeVal summarize_window(Tape<T>& tape, const ContextWindow& window) {
    if (!cfg_.strategy.uses_context() || window.empty()) {
      return tape.zeros({1, cfg_.strategy.ctx_dim});
    }
    auto emb = tape.param(store_, "src_emb");
    return ctx_.summarize_window(tape, store_, emb, window).D;
  }

  // --- encoder -------------------------------------------------------------

  struct Encoded {
    std::vector<TapeVal> annotations;              // one [B x 2h] per position
    typename AttentionLayer<T>::Prepared prepared; // attention precomputation
    TapeVal h_last;                                // [B x 2h] at each item's final position
    TapeVal D;                                     // [B x d_ctx]
    std::size_t batch = 0;
  };

  Encoded encode(Tape<T>& tape, const SeqBatch& source, TapeVal D) {
    if (source.steps.empty()) throw ContractError("encode: empty source batch");
    const std::size_t B = source.lengths.size();
    const std::size_t n = source.steps.size();

    auto emb = tape.param(store_, "src_emb");
    std::vector<TapeVal> xs(n);
    std::vector<TapeVal> masks(n);
    bool any_padding = false;
    for (std::size_t t = 0; t < n; ++t) {
      xs[t] = tape.rows_lookup(emb, source.steps[t].ids);
      if (!source.steps[t].full) {
        masks[t] = ContextEncoder<T>::mask_leaf(tape, source.steps[t].mask);
        any_padding = true;
      }
    }
    if (!any_padding) masks.clear();

    TapeVal init =
        cfg_.strategy.init_encoder() ? D : tape.zeros({B, cfg_.strategy.enc_hidden});
    Encoded enc;
    enc.annotations =
        encode_bidirectional(tape, store_, enc_fwd_, enc_bwd_, xs, masks, init, init);

    std::vector<std::size_t> last(B);
    for (std::size_t b = 0; b < B; ++b) {
      if (source.lengths[b] == 0 || source.lengths[b] > n) {
        throw ContractError("encode: invalid source length " +
                            std::to_string(source.lengths[b]));
      }
      last[b] = source.lengths[b] - 1;
    }
    enc.h_last = tape.select_time(enc.annotations, last);

    // Padded positions are pushed out of the attention softmax by a large
    // negative score bias.
    if (any_padding) {
      Tensor<T> bias({B, n});
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t b = 0; b < B; ++b) {
          bias.at(b, t) = source.steps[t].mask[b] ? T(0) : T(-1e9);
        }
      }
      enc.prepared = attn_.prepare(tape, store_, enc.annotations, &bias);
    } else {
      enc.prepared = attn_.prepare(tape, store_, enc.annotations, nullptr);
    }
    enc.D = D;
    enc.batch = B;
    return enc;
  }

  // --- decoder -------------------------------------------------------------

  // s_0 = tanh(h_last W_s [+ D W_D]); the context term only for strategies
  // that initialize the decoder.
  TapeVal init_state(Tape<T>& tape, const Encoded& enc) {
    auto pre = tape.matmul(enc.h_last, tape.param(store_, "init.W_s"));
    if (cfg_.strategy.init_decoder()) {
      pre = tape.add(pre, tape.matmul(enc.D, tape.param(store_, "init.W_D")));
    }
    return tape.tanh_act(pre);
  }

  struct StepResult {
    TapeVal state;    // s_i, [B x dec_hidden]
    TapeVal logits;   // [B x tgt_vocab]
    TapeVal context;  // attention mix c_i, [B x 2h]
    TapeVal weights;  // attention weights, [B x positions]
    TapeVal gate;     // z_i, [B x d_ctx]; invalid for ungated strategies
  };

  // One teacher-forced or search step. `live` marks rows that advance; rows
  // with 0 hold their state exactly (pass nullptr when every row is live).
  StepResult decode_step(Tape<T>& tape, const Encoded& enc, TapeVal s_prev,
                         const std::vector<int>& y_prev,
                         const std::vector<std::uint8_t>* live = nullptr) {
    auto y_emb = tape.rows_lookup(tape.param(store_, "tgt_emb"), y_prev);
    auto [c, w] = attn_.attend(tape, store_, s_prev, enc.prepared);

    StepResult r;
    std::vector<TapeVal> blocks{y_emb, c};
    if (cfg_.strategy.aux_context()) {
      if (cfg_.strategy.gated()) {
        if (forced_gate_.has_value()) {
          Tensor<T> z(tape.value(enc.D).shape);
          z.fill(static_cast<T>(*forced_gate_));
          r.gate = tape.leaf(std::move(z));
        } else {
          r.gate = gate_.forward(tape, store_, s_prev, y_emb, c);
        }
        blocks.push_back(tape.mul(r.gate, enc.D));
      } else {
        blocks.push_back(enc.D);
      }
    }
    auto x = tape.concat_cols(blocks);

    bool full = live == nullptr;
    if (!full) {
      full = true;
      for (std::uint8_t m : *live) full = full && m != 0;
    }
    r.state = full ? dec_.step(tape, store_, x, s_prev)
                   : dec_.step_masked(tape, store_, x, s_prev,
                                      ContextEncoder<T>::mask_leaf(tape, *live));
    r.logits = out_.logits(tape, store_, r.state, y_emb, c);
    r.context = c;
    r.weights = w;
    return r;
  }

  // --- loss ----------------------------------------------------------------

  struct LossResult {
    TapeVal loss;             // mean negative log-likelihood per live token
    std::size_t tokens = 0;   // live target tokens in the batch
  };

  LossResult batch_loss(Tape<T>& tape, const PaddedBatch& batch) {
    if (batch.target.in_steps.empty()) throw ContractError("batch_loss: empty target");
    TapeVal D = summarize_windows(tape, batch.window, batch.batch);
    Encoded enc = encode(tape, batch.source, D);
    TapeVal s = init_state(tape, enc);

    TapeVal total;
    for (std::size_t t = 0; t < batch.target.in_steps.size(); ++t) {
      const StepIds& in = batch.target.in_steps[t];
      const StepIds& out = batch.target.out_steps[t];
      StepResult r = decode_step(tape, enc, s, in.ids, in.full ? nullptr : &in.mask);
      std::vector<T> loss_mask(out.mask.begin(), out.mask.end());
      TapeVal nll = tape.pick_nll(r.logits, out.ids, loss_mask);
      total = total.valid() ? tape.add(total, nll) : nll;
      s = r.state;
    }
    LossResult res;
    res.tokens = batch.target.token_count;
    res.loss = tape.scale(total, T(1) / static_cast<T>(res.tokens));
    return res;
  }

  // Convenience for a single example; enforces the configured length budget.
  LossResult example_loss(Tape<T>& tape, const TrainingExample& example) {
    if (example.source.empty()) throw ContractError("example_loss: empty source");
    if (example.source.size() > cfg_.max_len ||
        example.target.size() > cfg_.max_len + 2) {
      throw ContractError("example_loss: example exceeds max_len " +
                          std::to_string(cfg_.max_len));
    }
    TrainingExample local = example;
    if (!cfg_.strategy.uses_context()) local.window.clear();
    std::vector<TrainingExample> one{std::move(local)};
    const std::size_t K = cfg_.strategy.uses_context() ? cfg_.strategy.window : 0;
    return batch_loss(tape, pad_batch(one, {0}, K));
  }

 private:
  ModelConfig cfg_;
  ParameterStore<T> store_;
  ContextEncoder<T> ctx_;
  GruCell<T> enc_fwd_;
  GruCell<T> enc_bwd_;
  AttentionLayer<T> attn_;
  GruCell<T> dec_;
  ContextGate<T> gate_;
  Readout<T> out_;
  std::optional<double> forced_gate_;
};

}  // namespace ctxnmt
