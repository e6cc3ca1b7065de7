#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ctxnmt/context.hpp"
#include "ctxnmt/corpus.hpp"
#include "ctxnmt/error.hpp"
#include "ctxnmt/model.hpp"
#include "ctxnmt/tape.hpp"
#include "ctxnmt/vocab.hpp"

namespace ctxnmt {

struct DecodeOptions {
  std::size_t beam = 1;     // 1 is greedy
  double alpha = 1.0;       // final score = logprob / length^alpha
  std::size_t max_out = 0;  // output budget; 0 picks 2 * source length + 10
};

struct Translation {
  std::vector<int> tokens;  // no frame or pad tokens
  double score = 0.0;       // normalized score of the winning hypothesis
};

namespace detail {

template <typename T>
std::vector<double> log_softmax_row(const Tensor<T>& logits) {
  const std::size_t V = logits.size();
  double m = static_cast<double>(logits.data[0]);
  for (std::size_t v = 1; v < V; ++v) m = std::max(m, static_cast<double>(logits.data[v]));
  double sum = 0.0;
  for (std::size_t v = 0; v < V; ++v) sum += std::exp(static_cast<double>(logits.data[v]) - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(V);
  for (std::size_t v = 0; v < V; ++v) out[v] = static_cast<double>(logits.data[v]) - lse;
  return out;
}

// Decode-time input hygiene, shared by every consumer of decode_step so all
// of them see exactly what training examples would have contained: sources
// and window sentences are cut to the length budget and only the most
// recent K window sentences are kept.
inline std::vector<int> trimmed_source(const ModelConfig& cfg, const std::vector<int>& source) {
  std::vector<int> src = source;
  if (src.size() > cfg.max_len) src.resize(cfg.max_len);
  return src;
}

inline ContextWindow trimmed_window(const ModelConfig& cfg, const ContextWindow& window) {
  ContextWindow win;
  const std::size_t K = cfg.strategy.uses_context() ? cfg.strategy.window : 0;
  const std::size_t skip = window.sentences.size() > K ? window.sentences.size() - K : 0;
  for (std::size_t i = skip; i < window.sentences.size(); ++i) {
    std::vector<int> sent = window.sentences[i];
    if (sent.size() > cfg.max_len) sent.resize(cfg.max_len);
    win.sentences.push_back(std::move(sent));
  }
  return win;
}

}  // namespace detail

// Beam search over one sentence; width 1 degenerates to greedy argmax. Each
// step expands every live hypothesis over the vocabulary (the structural
// pad/bos ids are never emitted), keeps the top `beam` candidates by
// accumulated log-probability with ties broken toward the lower token id,
// and retires hypotheses that produced eos. The final answer maximizes
// logprob / length^alpha over retired hypotheses; eos is forced once the
// output budget is reached, so decoding always terminates.
//
// Inputs longer than the model's length budget are truncated, as are window
// sentences, matching how training examples were built.
template <typename T>
Translation translate_sentence_scored(TranslationModel<T>& model, const std::vector<int>& source,
                                      const ContextWindow& window, const DecodeOptions& opt) {
  if (source.empty()) throw ContractError("translate: empty source sentence");
  if (opt.beam == 0) throw ContractError("translate: beam width must be at least 1");
  const ModelConfig& cfg = model.config();

  const std::vector<int> src = detail::trimmed_source(cfg, source);
  const ContextWindow win = detail::trimmed_window(cfg, window);

  Tape<T> tape(false);
  TapeVal D = model.summarize_window(tape, win);
  auto enc = model.encode(tape, single_sequence(src), D);
  TapeVal s0 = model.init_state(tape, enc);

  const std::size_t max_out = opt.max_out ? opt.max_out : 2 * src.size() + 10;
  const std::size_t V = cfg.tgt_vocab;

  struct Hyp {
    std::vector<int> tokens;
    double logp = 0.0;
    TapeVal state;
  };
  struct Cand {
    double logp;
    int token;
    std::size_t parent;
    TapeVal state;
  };

  std::vector<Hyp> live{{{}, 0.0, s0}};
  std::vector<Hyp> done;
  std::vector<Cand> cands;

  for (std::size_t step = 0; step < max_out && !live.empty(); ++step) {
    const bool force_eos = step + 1 == max_out;
    cands.clear();
    for (std::size_t p = 0; p < live.size(); ++p) {
      const int y_prev = live[p].tokens.empty() ? Vocabulary::kBos : live[p].tokens.back();
      auto r = model.decode_step(tape, enc, live[p].state, {y_prev});
      const auto logp = detail::log_softmax_row(tape.value(r.logits));
      if (force_eos) {
        cands.push_back({live[p].logp + logp[Vocabulary::kEos], Vocabulary::kEos, p, r.state});
        continue;
      }
      for (std::size_t v = 0; v < V; ++v) {
        const int tok = static_cast<int>(v);
        if (tok == Vocabulary::kPad || tok == Vocabulary::kBos) continue;
        cands.push_back({live[p].logp + logp[v], tok, p, r.state});
      }
    }
    const std::size_t keep = std::min(opt.beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep),
                      cands.end(), [](const Cand& a, const Cand& b) {
                        if (a.logp != b.logp) return a.logp > b.logp;
                        if (a.token != b.token) return a.token < b.token;
                        return a.parent < b.parent;
                      });
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < keep; ++i) {
      Hyp h;
      h.tokens = live[cands[i].parent].tokens;
      h.tokens.push_back(cands[i].token);
      h.logp = cands[i].logp;
      h.state = cands[i].state;
      if (cands[i].token == Vocabulary::kEos) {
        done.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }

  // Every hypothesis is retired by the forced eos, so `done` is non-empty.
  auto normalized = [&](const Hyp& h) {
    return h.logp / std::pow(static_cast<double>(h.tokens.size()), opt.alpha);
  };
  const Hyp* best = &done.front();
  double best_score = normalized(done.front());
  for (std::size_t i = 1; i < done.size(); ++i) {
    const double s = normalized(done[i]);
    if (s > best_score || (s == best_score &&
                           std::lexicographical_compare(done[i].tokens.begin(),
                                                        done[i].tokens.end(),
                                                        best->tokens.begin(),
                                                        best->tokens.end()))) {
      best = &done[i];
      best_score = s;
    }
  }

  Translation out;
  out.tokens.assign(best->tokens.begin(), best->tokens.end() - 1);  // strip eos
  out.score = best_score;
  return out;
}

template <typename T>
std::vector<int> translate_sentence(TranslationModel<T>& model, const std::vector<int>& source,
                                    const ContextWindow& window, const DecodeOptions& opt) {
  return translate_sentence_scored(model, source, window, opt).tokens;
}

// Window of up to K preceding source sentences for every sentence of a
// document, oldest first; the opening sentence gets an empty window.
inline std::vector<ContextWindow> document_windows(const std::vector<std::vector<int>>& sentences,
                                                   std::size_t K) {
  std::vector<ContextWindow> windows(sentences.size());
  for (std::size_t m = 0; m < sentences.size(); ++m) {
    const std::size_t start = m > K ? m - K : 0;
    for (std::size_t i = start; i < m; ++i) {
      windows[m].sentences.push_back(sentences[i]);
    }
  }
  return windows;
}

template <typename T>
std::vector<std::vector<int>> translate_document(TranslationModel<T>& model,
                                                 const std::vector<std::vector<int>>& sentences,
                                                 const DecodeOptions& opt) {
  if (sentences.empty()) throw ContractError("translate: empty document");
  const std::size_t K =
      model.config().strategy.uses_context() ? model.config().strategy.window : 0;
  const auto windows = document_windows(sentences, K);
  std::vector<std::vector<int>> out;
  out.reserve(sentences.size());
  for (std::size_t m = 0; m < sentences.size(); ++m) {
    out.push_back(translate_sentence(model, sentences[m], windows[m], opt));
  }
  return out;
}

}  // namespace ctxnmt
