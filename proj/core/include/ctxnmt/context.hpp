#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ctxnmt/corpus.hpp"
#include "ctxnmt/error.hpp"
#include "ctxnmt/layers.hpp"
#include "ctxnmt/param_store.hpp"
#include "ctxnmt/tape.hpp"
#include "ctxnmt/vocab.hpp"

namespace ctxnmt {

// The previous source sentences (oldest first, without frame tokens) that
// summarize into the document context vector D.
struct ContextWindow {
  std::vector<std::vector<int>> sentences;

  bool empty() const { return sentences.empty(); }
};

// Two-level summarizer: a sentence GRU compresses each history sentence to a
// vector S_k, then a document GRU walks the S_k oldest-to-newest; its final
// state is D. Both levels start from zero states, and an empty history
// yields D = 0 so a document's opening sentence degrades to the no-context
// computation.
template <typename T>
struct ContextEncoder {
  GruCell<T> sentence_rnn;
  GruCell<T> document_rnn;
  std::size_t emb_dim = 0;
  std::size_t d_ctx = 0;

  static ContextEncoder create(ParameterStore<T>& store, const std::string& prefix,
                               std::size_t emb_dim, std::size_t d_ctx) {
    ContextEncoder enc;
    enc.sentence_rnn = GruCell<T>::create(store, prefix + ".sent", emb_dim, d_ctx);
    enc.document_rnn = GruCell<T>::create(store, prefix + ".doc", d_ctx, d_ctx);
    enc.emb_dim = emb_dim;
    enc.d_ctx = d_ctx;
    return enc;
  }

  // Final sentence-GRU state over exactly the given tokens (the caller
  // decides about frame tokens; window-level entry points append eos to
  // mirror the main encoder's input convention).
  TapeVal summarize_sentence(Tape<T>& tape, ParameterStore<T>& store, TapeVal emb_table,
                             const std::vector<int>& tokens) const {
    if (tokens.empty()) throw ContractError("summarize_sentence: empty sentence");
    TapeVal h = tape.zeros({1, d_ctx});
    for (int id : tokens) {
      auto x = tape.rows_lookup(emb_table, {id});
      h = sentence_rnn.step(tape, store, x, h);
    }
    return h;
  }

  struct Summary {
    TapeVal D;
    std::vector<TapeVal> sentence_summaries;
  };

  Summary summarize_window(Tape<T>& tape, ParameterStore<T>& store, TapeVal emb_table,
                           const ContextWindow& window) const {
    Summary out;
    TapeVal d = tape.zeros({1, d_ctx});
    for (const auto& sentence : window.sentences) {
      std::vector<int> framed = sentence;
      framed.push_back(Vocabulary::kEos);
      TapeVal s = summarize_sentence(tape, store, emb_table, framed);
      out.sentence_summaries.push_back(s);
      d = document_rnn.step(tape, store, s, d);
    }
    out.D = d;
    return out;
  }

  // Batched variant over a padded WindowBatch; returns D as [B x d_ctx].
  // Inactive slots hold the document state, so right-aligned windows of
  // different lengths reproduce the per-item unbatched results.
  TapeVal summarize_batch(Tape<T>& tape, ParameterStore<T>& store, TapeVal emb_table,
                          const WindowBatch& window, std::size_t batch) const {
    TapeVal d = tape.zeros({batch, d_ctx});
    for (const WindowSlot& slot : window.slots) {
      if (!slot.any) continue;
      TapeVal h = tape.zeros({batch, d_ctx});
      for (const StepIds& step : slot.steps) {
        auto x = tape.rows_lookup(emb_table, step.ids);
        if (step.full) {
          h = sentence_rnn.step(tape, store, x, h);
        } else {
          h = sentence_rnn.step_masked(tape, store, x, h, mask_leaf(tape, step.mask));
        }
      }
      if (slot.all) {
        d = document_rnn.step(tape, store, h, d);
      } else {
        d = document_rnn.step_masked(tape, store, h, d, mask_leaf(tape, slot.active));
      }
    }
    return d;
  }

  static TapeVal mask_leaf(Tape<T>& tape, const std::vector<std::uint8_t>& mask) {
    Tensor<T> m({mask.size()});
    for (std::size_t i = 0; i < mask.size(); ++i) m.data[i] = static_cast<T>(mask[i]);
    return tape.leaf(m);
  }
};

}  // namespace ctxnmt
