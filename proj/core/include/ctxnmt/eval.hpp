#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "ctxnmt/corpus.hpp"
#include "ctxnmt/decode.hpp"
#include "ctxnmt/error.hpp"
#include "ctxnmt/model.hpp"
#include "ctxnmt/tensor.hpp"
#include "ctxnmt/vocab.hpp"

namespace ctxnmt {

using TokenSentence = std::vector<std::string>;

// Corpus BLEU in [0, 1]: geometric mean of the four modified n-gram
// precisions times the brevity penalty. Any zero precision makes the whole
// score zero; per-sentence smoothing is a separate operation below.
struct BleuResult {
  double bleu = 0.0;
  std::array<double, 4> precisions{};
  double brevity_penalty = 0.0;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;  // sum of closest reference lengths
};

BleuResult corpus_bleu(const std::vector<TokenSentence>& hyps,
                       const std::vector<std::vector<TokenSentence>>& refs, bool lowercase);

// Per-sentence BLEU with add-one smoothing applied to every n-gram order,
// numerator and denominator alike, so even a hypothesis with no overlap
// scores above zero. Exact matches still score exactly 1.
double sentence_bleu_smoothed(const TokenSentence& hyp, const std::vector<TokenSentence>& refs,
                              bool lowercase = true);

// Exact two-sided binomial sign test over paired per-sentence scores. Ties
// are excluded; with no informative pairs at all the p-value is reported as
// 1.0 and wins == losses == 0 flags the degenerate case.
struct SignTestResult {
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;
  double p_value = 1.0;
};

SignTestResult sign_test(const std::vector<double>& scores_a,
                         const std::vector<double>& scores_b);

// Report text: one "key: value" line per field, stable key names. BLEU and
// precisions are printed on the conventional 0-100 scale.
std::string format_bleu_report(const BleuResult& r);
std::string format_sign_report(const SignTestResult& r);

// Fixed-point probability with trailing zeros trimmed ("1.0", "0.109375").
std::string format_probability(double p);

// Gate activation summary over greedy decoding of a corpus: statistics of
// every gate component at every decoded step, plus a histogram over ten
// uniform bins of [0, 1].
struct GateReport {
  std::size_t steps = 0;       // decode steps observed
  std::size_t components = 0;  // gate scalars observed
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::array<std::size_t, 10> histogram{};
};

std::string format_gate_report(const GateReport& r);

// Greedy decode of one sentence that records the context gate vector at
// every emitted step (the closing eos step included). Token choices match
// translate_sentence with beam 1 exactly.
template <typename T>
struct GateTrace {
  std::vector<int> tokens;       // emitted ids, eos stripped
  std::vector<Tensor<T>> gates;  // one gate vector per decode step
};

template <typename T>
GateTrace<T> greedy_gate_trace(TranslationModel<T>& model, const std::vector<int>& source,
                               const ContextWindow& window, std::size_t max_out = 0) {
  if (source.empty()) throw ContractError("gate trace: empty source sentence");
  const ModelConfig& cfg = model.config();
  const std::vector<int> src = detail::trimmed_source(cfg, source);
  const ContextWindow win = detail::trimmed_window(cfg, window);

  Tape<T> tape(false);
  TapeVal D = model.summarize_window(tape, win);
  auto enc = model.encode(tape, single_sequence(src), D);
  TapeVal state = model.init_state(tape, enc);

  const std::size_t budget = max_out ? max_out : 2 * src.size() + 10;
  GateTrace<T> trace;
  int y_prev = Vocabulary::kBos;
  for (std::size_t step = 0; step < budget; ++step) {
    auto r = model.decode_step(tape, enc, state, {y_prev});
    if (!r.gate.valid()) {
      throw ContractError("gate trace requires a gated strategy or a forced gate");
    }
    trace.gates.push_back(tape.value(r.gate));
    int best = -1;
    if (step + 1 == budget) {
      best = Vocabulary::kEos;
    } else {
      const auto logp = detail::log_softmax_row(tape.value(r.logits));
      double best_logp = 0.0;
      for (std::size_t v = 0; v < logp.size(); ++v) {
        const int tok = static_cast<int>(v);
        if (tok == Vocabulary::kPad || tok == Vocabulary::kBos) continue;
        if (best < 0 || logp[v] > best_logp) {
          best = tok;
          best_logp = logp[v];
        }
      }
    }
    if (best == Vocabulary::kEos) break;
    trace.tokens.push_back(best);
    state = r.state;
    y_prev = best;
  }
  return trace;
}

// Aggregates gate activations over greedy document-aware translation of a
// source corpus. Requires a strategy with a context gate.
template <typename T>
GateReport gate_stats(TranslationModel<T>& model, const Vocabulary& src_vocab,
                      const TokenDocuments& docs) {
  const ModelConfig& cfg = model.config();
  if (!cfg.strategy.gated()) {
    throw ContractError("gate statistics require a gated strategy");
  }
  GateReport report;
  report.min = 1.0;
  report.max = 0.0;
  long double sum = 0.0L;

  for (const auto& doc : docs) {
    std::vector<std::vector<int>> sentences;
    sentences.reserve(doc.size());
    for (const auto& sent : doc) sentences.push_back(src_vocab.encode(sent));
    const std::size_t K = cfg.strategy.uses_context() ? cfg.strategy.window : 0;
    const auto windows = document_windows(sentences, K);
    for (std::size_t m = 0; m < sentences.size(); ++m) {
      const auto trace = greedy_gate_trace(model, sentences[m], windows[m]);
      report.steps += trace.gates.size();
      for (const auto& gate : trace.gates) {
        for (const T& raw : gate.data) {
          const double v = static_cast<double>(raw);
          sum += v;
          report.min = std::min(report.min, v);
          report.max = std::max(report.max, v);
          std::size_t bin = v >= 1.0 ? 9 : static_cast<std::size_t>(v * 10.0);
          if (bin > 9) bin = 9;
          ++report.histogram[bin];
          ++report.components;
        }
      }
    }
  }
  if (report.components == 0) {
    throw ContractError("gate statistics need at least one decoded step");
  }
  report.mean = static_cast<double>(sum / static_cast<long double>(report.components));
  return report;
}

}  // namespace ctxnmt
