#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ctxnmt/error.hpp"
#include "ctxnmt/param_store.hpp"
#include "ctxnmt/tape.hpp"

namespace ctxnmt {

// All layers hold only names and sizes; weights live in the ParameterStore
// under "<prefix>.<name>". Matrices are stored row-major as [input x output]
// so a batch of row vectors multiplies from the left: y = x * W.

// Gated recurrent unit with the fixed convention
//   z = sigmoid(x W_z + h U_z + b_z)
//   r = sigmoid(x W_r + h U_r + b_r)
//   hc = tanh(x W_h + (r o h) U_h + b_h)
//   h' = (1 - z) o h + z o hc
template <typename T>
struct GruCell {
  std::string prefix;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  static GruCell create(ParameterStore<T>& store, const std::string& prefix,
                        std::size_t input_dim, std::size_t hidden_dim) {
    GruCell cell{prefix, input_dim, hidden_dim};
    for (const char* g : {"z", "r", "h"}) {
      store.add(prefix + ".W_" + g, {input_dim, hidden_dim}, Init::kUniform);
      store.add(prefix + ".U_" + g, {hidden_dim, hidden_dim}, Init::kOrthogonal);
      store.add(prefix + ".b_" + g, {hidden_dim}, Init::kUniform);
    }
    return cell;
  }

  // x: [B x input_dim], h_prev: [B x hidden_dim] -> [B x hidden_dim]
  TapeVal step(Tape<T>& tape, ParameterStore<T>& store, TapeVal x, TapeVal h_prev) const {
    check_dims(tape, x, h_prev);
    auto gate_pre = [&](const char* g, TapeVal hin) {
      auto wx = tape.matmul(x, tape.param(store, prefix + ".W_" + g));
      auto uh = tape.matmul(hin, tape.param(store, prefix + ".U_" + g));
      return tape.add_broadcast(tape.add(wx, uh), tape.param(store, prefix + ".b_" + g));
    };
    auto z = tape.sigmoid(gate_pre("z", h_prev));
    auto r = tape.sigmoid(gate_pre("r", h_prev));
    auto hc = tape.tanh_act(gate_pre("h", tape.mul(r, h_prev)));
    auto keep = tape.mul(tape.one_minus(z), h_prev);
    return tape.add(keep, tape.mul(z, hc));
  }

  // Masked step for padded batches: rows with mask 0 keep h_prev exactly
  // (h + 0*(new-h) adds a signed zero, which preserves the held value).
  TapeVal step_masked(Tape<T>& tape, ParameterStore<T>& store, TapeVal x, TapeVal h_prev,
                      TapeVal mask) const {
    auto h_new = step(tape, store, x, h_prev);
    auto delta = tape.sub(h_new, h_prev);
    return tape.add(h_prev, tape.scale_rows(delta, mask));
  }

 private:
  void check_dims(const Tape<T>& tape, TapeVal x, TapeVal h_prev) const {
    const auto& xv = tape.value(x);
    const auto& hv = tape.value(h_prev);
    if (xv.rank() != 2 || xv.shape[1] != input_dim || hv.rank() != 2 ||
        hv.shape[1] != hidden_dim || xv.shape[0] != hv.shape[0]) {
      throw ContractError("gru '" + prefix + "' expects x [B x " + std::to_string(input_dim) +
                          "], h [B x " + std::to_string(hidden_dim) + "]; got " +
                          shape_string(xv.shape) + " and " + shape_string(hv.shape));
    }
  }
};

// Bidirectional encoder pass. Returns one annotation [B x 2h] per position:
// the forward state at that position concatenated with the backward state.
// step_masks may be empty (no padding) or hold one [B] mask per position;
// masked positions hold their direction's running state. An invalid TapeVal
// in step_masks marks a position where every row is live, which keeps the
// unmasked arithmetic (and its exact bit pattern) on that step.
template <typename T>
std::vector<TapeVal> encode_bidirectional(Tape<T>& tape, ParameterStore<T>& store,
                                          const GruCell<T>& fwd, const GruCell<T>& bwd,
                                          const std::vector<TapeVal>& x_steps,
                                          const std::vector<TapeVal>& step_masks,
                                          TapeVal init_fwd, TapeVal init_bwd) {
  if (x_steps.empty()) throw ContractError("encode_bidirectional: empty input sequence");
  if (!step_masks.empty() && step_masks.size() != x_steps.size()) {
    throw ContractError("encode_bidirectional: mask count does not match sequence length");
  }
  const std::size_t n = x_steps.size();
  auto masked_at = [&](std::size_t t) { return !step_masks.empty() && step_masks[t].valid(); };
  std::vector<TapeVal> f(n), b(n);
  TapeVal h = init_fwd;
  for (std::size_t t = 0; t < n; ++t) {
    h = masked_at(t) ? fwd.step_masked(tape, store, x_steps[t], h, step_masks[t])
                     : fwd.step(tape, store, x_steps[t], h);
    f[t] = h;
  }
  h = init_bwd;
  for (std::size_t t = n; t-- > 0;) {
    h = masked_at(t) ? bwd.step_masked(tape, store, x_steps[t], h, step_masks[t])
                     : bwd.step(tape, store, x_steps[t], h);
    b[t] = h;
  }
  std::vector<TapeVal> annotations(n);
  for (std::size_t t = 0; t < n; ++t) annotations[t] = tape.concat_cols({f[t], b[t]});
  return annotations;
}

// Additive attention: e_j = v_a' tanh(W_a s_prev + U_a h_j), weights are the
// softmax over positions, and c is the weight-mixed annotation.
template <typename T>
struct AttentionLayer {
  std::string prefix;
  std::size_t dec_dim = 0;
  std::size_t ann_dim = 0;
  std::size_t attn_dim = 0;

  static AttentionLayer create(ParameterStore<T>& store, const std::string& prefix,
                               std::size_t dec_dim, std::size_t ann_dim, std::size_t attn_dim) {
    AttentionLayer layer{prefix, dec_dim, ann_dim, attn_dim};
    store.add(prefix + ".W_a", {dec_dim, attn_dim}, Init::kUniform);
    store.add(prefix + ".U_a", {ann_dim, attn_dim}, Init::kUniform);
    store.add(prefix + ".v_a", {attn_dim, 1}, Init::kUniform);
    return layer;
  }

  // Per-sentence work that does not depend on the decoder state: the U_a
  // projection of every annotation, plus an optional additive score bias
  // that masks padded positions with a large negative constant.
  struct Prepared {
    std::vector<TapeVal> annotations;
    std::vector<TapeVal> projected;
    TapeVal score_bias;  // invalid when no masking is needed
  };

  Prepared prepare(Tape<T>& tape, ParameterStore<T>& store,
                   const std::vector<TapeVal>& annotations,
                   const Tensor<T>* score_bias) const {
    if (annotations.empty()) throw ContractError("attention: no annotations");
    Prepared prep;
    prep.annotations = annotations;
    auto ua = tape.param(store, prefix + ".U_a");
    prep.projected.reserve(annotations.size());
    for (TapeVal a : annotations) prep.projected.push_back(tape.matmul(a, ua));
    if (score_bias != nullptr) prep.score_bias = tape.leaf(*score_bias);
    return prep;
  }

  // s_prev: [B x dec_dim] -> (c: [B x ann_dim], weights: [B x N])
  std::pair<TapeVal, TapeVal> attend(Tape<T>& tape, ParameterStore<T>& store, TapeVal s_prev,
                                     const Prepared& prep) const {
    auto q = tape.matmul(s_prev, tape.param(store, prefix + ".W_a"));
    auto va = tape.param(store, prefix + ".v_a");
    const std::size_t B = tape.value(q).shape[0];
    std::vector<TapeVal> scores;
    scores.reserve(prep.projected.size());
    for (TapeVal proj : prep.projected) {
      const std::size_t rows = tape.value(proj).shape[0];
      auto pre = (rows == B) ? tape.add(q, proj) : tape.add_broadcast(q, proj);
      scores.push_back(tape.matmul(tape.tanh_act(pre), va));
    }
    auto e = tape.concat_cols(scores);
    if (prep.score_bias.valid()) e = tape.add(e, prep.score_bias);
    auto weights = tape.softmax_rows(e);
    auto c = tape.attention_mix(weights, prep.annotations);
    return {c, weights};
  }

  // Convenience for unprepared single calls (tests, single sentences).
  std::pair<TapeVal, TapeVal> attend_direct(Tape<T>& tape, ParameterStore<T>& store,
                                            TapeVal s_prev,
                                            const std::vector<TapeVal>& annotations) const {
    return attend(tape, store, s_prev, prepare(tape, store, annotations, nullptr));
  }
};

// Element-wise context gate z = sigmoid(s U_z + y W_z + c C_z); no bias.
template <typename T>
struct ContextGate {
  std::string prefix;
  std::size_t dec_dim = 0;
  std::size_t emb_dim = 0;
  std::size_t ann_dim = 0;
  std::size_t out_dim = 0;

  static ContextGate create(ParameterStore<T>& store, const std::string& prefix,
                            std::size_t dec_dim, std::size_t emb_dim, std::size_t ann_dim,
                            std::size_t out_dim) {
    ContextGate gate{prefix, dec_dim, emb_dim, ann_dim, out_dim};
    store.add(prefix + ".U_z", {dec_dim, out_dim}, Init::kUniform);
    store.add(prefix + ".W_z", {emb_dim, out_dim}, Init::kUniform);
    store.add(prefix + ".C_z", {ann_dim, out_dim}, Init::kUniform);
    return gate;
  }

  TapeVal forward(Tape<T>& tape, ParameterStore<T>& store, TapeVal s_prev, TapeVal y_emb,
                  TapeVal c) const {
    auto su = tape.matmul(s_prev, tape.param(store, prefix + ".U_z"));
    auto yw = tape.matmul(y_emb, tape.param(store, prefix + ".W_z"));
    auto cc = tape.matmul(c, tape.param(store, prefix + ".C_z"));
    return tape.sigmoid(tape.add(tape.add(su, yw), cc));
  }
};

// Readout: logits = tanh(s U_o + y V_o + c C_o) W_o. The caller applies
// softmax (or the fused NLL) as needed.
template <typename T>
struct Readout {
  std::string prefix;
  std::size_t dec_dim = 0;
  std::size_t emb_dim = 0;
  std::size_t ann_dim = 0;
  std::size_t readout_dim = 0;
  std::size_t vocab = 0;

  static Readout create(ParameterStore<T>& store, const std::string& prefix,
                        std::size_t dec_dim, std::size_t emb_dim, std::size_t ann_dim,
                        std::size_t readout_dim, std::size_t vocab) {
    Readout r{prefix, dec_dim, emb_dim, ann_dim, readout_dim, vocab};
    store.add(prefix + ".U_o", {dec_dim, readout_dim}, Init::kUniform);
    store.add(prefix + ".V_o", {emb_dim, readout_dim}, Init::kUniform);
    store.add(prefix + ".C_o", {ann_dim, readout_dim}, Init::kUniform);
    store.add(prefix + ".W_o", {readout_dim, vocab}, Init::kUniform);
    return r;
  }

  TapeVal logits(Tape<T>& tape, ParameterStore<T>& store, TapeVal s, TapeVal y_emb,
                 TapeVal c) const {
    auto su = tape.matmul(s, tape.param(store, prefix + ".U_o"));
    auto yv = tape.matmul(y_emb, tape.param(store, prefix + ".V_o"));
    auto cc = tape.matmul(c, tape.param(store, prefix + ".C_o"));
    auto pre = tape.tanh_act(tape.add(tape.add(su, yv), cc));
    return tape.matmul(pre, tape.param(store, prefix + ".W_o"));
  }
};

}  // namespace ctxnmt
