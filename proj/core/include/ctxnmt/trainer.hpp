#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "ctxnmt/corpus.hpp"
#include "ctxnmt/decode.hpp"
#include "ctxnmt/error.hpp"
#include "ctxnmt/eval.hpp"
#include "ctxnmt/model.hpp"
#include "ctxnmt/optim.hpp"
#include "ctxnmt/rng.hpp"
#include "ctxnmt/vocab.hpp"

namespace ctxnmt {

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t patience = 0;  // extra epochs tolerated past the best one
  std::size_t batch_size = 80;
  double lr = 0.001;
  double clip_norm = 5.0;
  std::size_t beam = 1;  // development decode width
  std::uint64_t shuffle_seed = 1;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean negative log-likelihood per target token
  double dev_bleu = 0.0;    // greedy-decode corpus BLEU in [0, 1]
  bool improved = false;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_dev_bleu = 0.0;
  std::size_t examples = 0;
  std::size_t dropped_overlength = 0;
};

namespace detail {

// Plain value snapshot of every parameter, for best-checkpoint restores.
template <typename T>
std::vector<Tensor<T>> snapshot_params(const ParameterStore<T>& store) {
  std::vector<Tensor<T>> out;
  out.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) out.push_back(store.entry(i).value);
  return out;
}

template <typename T>
void restore_params(ParameterStore<T>& store, const std::vector<Tensor<T>>& snapshot) {
  for (std::size_t i = 0; i < store.size(); ++i) store.entry(i).value = snapshot[i];
}

}  // namespace detail

// Greedy document-aware translation of a source-side corpus into target
// token spellings, the shape evaluation wants.
template <typename T>
std::vector<TokenSentence> translate_corpus(TranslationModel<T>& model,
                                            const Vocabulary& src_vocab,
                                            const Vocabulary& tgt_vocab,
                                            const TokenDocuments& docs,
                                            const DecodeOptions& opt = DecodeOptions()) {
  std::vector<TokenSentence> out;
  for (const auto& doc : docs) {
    std::vector<std::vector<int>> sentences;
    sentences.reserve(doc.size());
    for (const auto& sent : doc) sentences.push_back(src_vocab.encode(sent));
    for (const auto& ids : translate_document(model, sentences, opt)) {
      TokenSentence hyp;
      hyp.reserve(ids.size());
      for (int id : ids) hyp.push_back(tgt_vocab.token(id));
      out.push_back(std::move(hyp));
    }
  }
  return out;
}

// Teacher-forced epochs with Adam, greedy dev BLEU after each epoch, and
// early stopping that keeps the best-dev checkpoint. Training stops once
// `patience` epochs have passed without a new best (patience 0 stops right
// after the first epoch) or when the epoch budget runs out; either way the
// parameters revert to the best checkpoint. The log stream, when given,
// receives one line per epoch with no timestamps, so identical runs produce
// identical logs.
template <typename T>
TrainResult train_model(TranslationModel<T>& model, const DocumentCorpus& train_corpus,
                        const DocumentCorpus& dev_corpus, const Vocabulary& src_vocab,
                        const Vocabulary& tgt_vocab, const TrainOptions& opt,
                        std::ostream* log = nullptr) {
  if (opt.epochs == 0) throw ConfigError("training needs at least one epoch");
  const ModelConfig& cfg = model.config();

  ExampleStats stats;
  const std::size_t window = cfg.strategy.uses_context() ? cfg.strategy.window : 0;
  const auto examples =
      make_examples(train_corpus, src_vocab, tgt_vocab, window, cfg.max_len, &stats);
  if (examples.empty()) throw ConfigError("training corpus has no usable sentence pairs");

  const TokenDocuments dev_src = corpus_side(dev_corpus, Side::kSource);
  const std::vector<TokenSentence> dev_refs = side_sentences(dev_corpus, Side::kTarget);

  AdamOptimizer<T> adam(opt.lr, opt.clip_norm);
  Rng shuffle_rng(opt.shuffle_seed);
  DecodeOptions dev_decode;
  dev_decode.beam = opt.beam;

  TrainResult result;
  result.examples = examples.size();
  result.dropped_overlength = stats.dropped_overlength;
  std::vector<Tensor<T>> best = detail::snapshot_params(model.store());

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    double total_nll = 0.0;
    std::size_t total_tokens = 0;
    for (const auto& batch_idx : shuffled_batches(examples.size(), opt.batch_size, shuffle_rng)) {
      Tape<T> tape(true);
      PaddedBatch padded = pad_batch(examples, batch_idx, window);
      auto res = model.batch_loss(tape, padded);
      const double loss = static_cast<double>(tape.value(res.loss).data[0]);
      if (!std::isfinite(loss)) {
        throw NumericError("epoch " + std::to_string(epoch) + ": non-finite batch loss " +
                           std::to_string(loss));
      }
      tape.backward(res.loss);
      adam.step(model.store());
      total_nll += loss * static_cast<double>(res.tokens);
      total_tokens += res.tokens;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = total_nll / static_cast<double>(total_tokens);

    std::vector<TokenSentence> hyps = translate_corpus(model, src_vocab, tgt_vocab, dev_src, dev_decode);
    std::vector<std::vector<TokenSentence>> refs;
    refs.reserve(dev_refs.size());
    for (const auto& ref : dev_refs) refs.push_back({ref});
    record.dev_bleu = corpus_bleu(hyps, refs, true).bleu;

    record.improved = result.history.empty() || record.dev_bleu > result.best_dev_bleu;
    if (record.improved) {
      result.best_dev_bleu = record.dev_bleu;
      result.best_epoch = epoch;
      best = detail::snapshot_params(model.store());
    }
    result.history.push_back(record);

    if (log) {
      char line[160];
      std::snprintf(line, sizeof line, "epoch %zu train_loss %.6f dev_bleu %.2f%s\n",
                    record.epoch, record.train_loss, 100.0 * record.dev_bleu,
                    record.improved ? " *" : "");
      (*log) << line;
    }

    if (epoch - result.best_epoch >= opt.patience) break;
  }

  detail::restore_params(model.store(), best);
  return result;
}

}  // namespace ctxnmt
