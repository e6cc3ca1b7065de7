#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ctxnmt/decode.hpp"
#include "ctxnmt/error.hpp"
#include "ctxnmt/eval.hpp"
#include "ctxnmt/model.hpp"
#include "doctest.h"

using namespace ctxnmt;

namespace {

TokenSentence toks(std::initializer_list<const char*> words) {
  TokenSentence out;
  for (const char* w : words) out.emplace_back(w);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Corpus BLEU
// ---------------------------------------------------------------------------

TEST_CASE("identical hypothesis and reference score a perfect BLEU") {
  const auto hyp = toks({"the", "cat", "sat", "on", "the", "mat"});
  const BleuResult r = corpus_bleu({hyp}, {{hyp}}, false);
  CHECK(r.bleu == 1.0);
  CHECK(r.brevity_penalty == 1.0);
  for (double p : r.precisions) CHECK(p == 1.0);
  CHECK(r.hyp_length == 6);
  CHECK(r.ref_length == 6);
}

TEST_CASE("clipping caps repeated unigrams at the reference count") {
  // "the" appears twice in the reference, so only 2 of the 7 hypothesis
  // unigrams count: p1 = 2/7. No bigram matches, so overall BLEU is zero.
  const auto hyp = toks({"the", "the", "the", "the", "the", "the", "the"});
  const auto ref = toks({"the", "cat", "is", "on", "the", "mat"});
  const BleuResult r = corpus_bleu({hyp}, {{ref}}, false);
  CHECK(r.precisions[0] == 2.0 / 7.0);
  CHECK(r.precisions[1] == 0.0);
  CHECK(r.bleu == 0.0);
}

TEST_CASE("a missing 4-gram zeroes unsmoothed BLEU") {
  // Every shorter n-gram matches somewhere but no 4-gram does.
  const auto hyp = toks({"a", "b", "c", "e", "d"});
  const auto ref = toks({"a", "b", "c", "d", "e"});
  const BleuResult r = corpus_bleu({hyp}, {{ref}}, false);
  CHECK(r.precisions[0] > 0.0);
  CHECK(r.precisions[3] == 0.0);
  CHECK(r.bleu == 0.0);
}

TEST_CASE("clipping uses the maximum count over multiple references") {
  const auto hyp = toks({"the", "the"});
  const std::vector<TokenSentence> refs{toks({"the"}), toks({"the", "the", "the"})};
  const BleuResult r = corpus_bleu({hyp}, {refs}, false);
  CHECK(r.precisions[0] == 1.0);
}

TEST_CASE("the brevity penalty follows the closest reference length") {
  // Hypothesis of 2 tokens against a 4-token reference: BP = exp(1 - 4/2).
  const auto hyp = toks({"a", "b"});
  const auto ref = toks({"a", "b", "c", "d"});
  const BleuResult r = corpus_bleu({hyp}, {{ref}}, false);
  CHECK(r.brevity_penalty == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(r.bleu < 1.0);

  // Length-3 hypothesis with references of lengths 2 and 4: both are one
  // token away, the tie picks the shorter, and 3 >= 2 means no penalty.
  const auto hyp3 = toks({"a", "b", "c"});
  const std::vector<TokenSentence> refs{toks({"a", "b"}), toks({"a", "b", "c", "d"})};
  const BleuResult tie = corpus_bleu({hyp3}, {refs}, false);
  CHECK(tie.ref_length == 2);
  CHECK(tie.brevity_penalty == 1.0);

  const std::vector<TokenSentence> flipped{toks({"a", "b", "c", "d"}), toks({"a", "b"})};
  const BleuResult swapped = corpus_bleu({hyp3}, {flipped}, false);
  CHECK(swapped.ref_length == 2);
}

TEST_CASE("corpus BLEU ignores sentence order") {
  const std::vector<TokenSentence> hyps{toks({"a", "b", "c", "d"}), toks({"x", "y", "z", "w"}),
                                        toks({"p", "q", "r", "s", "t"})};
  const std::vector<std::vector<TokenSentence>> refs{{toks({"a", "b", "c", "d", "e"})},
                                                     {toks({"x", "y", "w", "z"})},
                                                     {toks({"p", "q", "r", "s"})}};
  const BleuResult forward = corpus_bleu(hyps, refs, false);
  const std::vector<TokenSentence> hyps_r{hyps[2], hyps[0], hyps[1]};
  const std::vector<std::vector<TokenSentence>> refs_r{refs[2], refs[0], refs[1]};
  const BleuResult reversed = corpus_bleu(hyps_r, refs_r, false);
  CHECK(forward.bleu == reversed.bleu);
  CHECK(forward.brevity_penalty == reversed.brevity_penalty);
  for (std::size_t n = 0; n < 4; ++n) CHECK(forward.precisions[n] == reversed.precisions[n]);
}

TEST_CASE("the lowercase flag equals pre-lowered input") {
  const std::vector<TokenSentence> hyps{toks({"The", "CAT", "sat", "ON", "the", "Mat"})};
  const std::vector<std::vector<TokenSentence>> refs{{toks({"the", "cat", "SAT", "on", "THE", "mat"})}};
  const BleuResult ci = corpus_bleu(hyps, refs, true);
  CHECK(ci.bleu == 1.0);

  const std::vector<TokenSentence> hyps_low{toks({"the", "cat", "sat", "on", "the", "mat"})};
  const std::vector<std::vector<TokenSentence>> refs_low{{toks({"the", "cat", "sat", "on", "the", "mat"})}};
  const BleuResult pre = corpus_bleu(hyps_low, refs_low, false);
  CHECK(ci.bleu == pre.bleu);
}

TEST_CASE("corpus BLEU stays inside its range bounds") {
  const std::vector<TokenSentence> hyps{toks({"a", "b", "c", "d", "e"}),
                                        toks({"x", "b", "c", "d", "q", "r"})};
  const std::vector<std::vector<TokenSentence>> refs{{toks({"a", "b", "c", "d", "f"})},
                                                     {toks({"x", "b", "c", "d", "q", "s"})}};
  const BleuResult r = corpus_bleu(hyps, refs, false);
  CHECK(r.bleu >= 0.0);
  CHECK(r.bleu <= 1.0);
  CHECK(r.brevity_penalty <= 1.0);
  CHECK(r.hyp_length >= r.ref_length);  // hyp lengths equal the closest refs here
  CHECK(r.brevity_penalty == 1.0);
}

TEST_CASE("corpus BLEU rejects malformed input") {
  const auto hyp = toks({"a"});
  CHECK_THROWS_AS(corpus_bleu({hyp}, {}, false), ContractError);
  CHECK_THROWS_AS(corpus_bleu({hyp}, {{}}, false), ContractError);

  // An all-empty hypothesis corpus has nothing to score.
  const BleuResult r = corpus_bleu({TokenSentence{}}, {{toks({"a"})}}, false);
  CHECK(r.bleu == 0.0);
  CHECK(r.brevity_penalty == 0.0);
}

// ---------------------------------------------------------------------------
// Smoothed sentence BLEU
// ---------------------------------------------------------------------------

TEST_CASE("smoothed sentence BLEU keeps exact matches at 1") {
  const auto hyp = toks({"a", "b", "c", "d", "e"});
  CHECK(sentence_bleu_smoothed(hyp, {hyp}) == 1.0);

  // Equality with any single reference of the same length also stays exact.
  const std::vector<TokenSentence> refs{toks({"x", "y", "z", "q", "r"}), hyp};
  CHECK(sentence_bleu_smoothed(hyp, refs) == 1.0);
}

TEST_CASE("smoothing keeps disjoint sentences positive but tiny") {
  // 30 hypothesis tokens sharing nothing with the reference: every smoothed
  // precision is 1/(count + 1), so the score is the closed form
  // (31 * 30 * 29 * 28)^(-1/4) with no brevity penalty at equal lengths.
  TokenSentence hyp;
  TokenSentence ref;
  for (int i = 0; i < 30; ++i) {
    hyp.push_back("h" + std::to_string(i));
    ref.push_back("r" + std::to_string(i));
  }
  const double got = sentence_bleu_smoothed(hyp, {ref});
  const double expected = std::pow(31.0 * 30.0 * 29.0 * 28.0, -0.25);
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
  CHECK(got > 0.0);
  CHECK(got < 0.05);
}

TEST_CASE("padding a hypothesis with junk can only lower the smoothed score") {
  const auto ref = toks({"a", "b"});
  const auto shorter = toks({"a", "b", "x"});
  const auto longer = toks({"a", "b", "x", "y"});
  CHECK(sentence_bleu_smoothed(longer, {ref}) < sentence_bleu_smoothed(shorter, {ref}));
}

TEST_CASE("smoothed sentence BLEU rejects empty input") {
  CHECK_THROWS_AS(sentence_bleu_smoothed({}, {toks({"a"})}), ContractError);
  CHECK_THROWS_AS(sentence_bleu_smoothed(toks({"a"}), {}), ContractError);
}

// ---------------------------------------------------------------------------
// Sign test
// ---------------------------------------------------------------------------

TEST_CASE("sign test matches hand-computed binomial tails") {
  // 10 wins out of 10: p = 2 * (1/2)^10 = 2/1024, exactly representable.
  std::vector<double> a(10, 1.0);
  std::vector<double> b(10, 0.0);
  SignTestResult all_wins = sign_test(a, b);
  CHECK(all_wins.wins == 10);
  CHECK(all_wins.losses == 0);
  CHECK(all_wins.p_value == 0.001953125);

  // 5 wins, 5 losses: the two-sided tail doubles past 1 and is capped.
  std::vector<double> a5{1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
  std::vector<double> b5{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  SignTestResult even = sign_test(a5, b5);
  CHECK(even.wins == 5);
  CHECK(even.losses == 5);
  CHECK(even.p_value == 1.0);

  // 8 wins, 2 losses: 2 * (C(10,8) + C(10,9) + C(10,10)) / 2^10 = 112/1024.
  std::vector<double> a8{1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
  std::vector<double> b8{0, 0, 0, 0, 0, 0, 0, 0, 1, 1};
  SignTestResult skew = sign_test(a8, b8);
  CHECK(skew.wins == 8);
  CHECK(skew.losses == 2);
  CHECK(skew.p_value == 0.109375);

  // 3 wins, 1 loss, 2 ties: n = 4, k = 3, p = 2 * (4 + 1) / 16.
  std::vector<double> am{2, 2, 2, 0, 5, 5};
  std::vector<double> bm{1, 1, 1, 1, 5, 5};
  SignTestResult mixed = sign_test(am, bm);
  CHECK(mixed.wins == 3);
  CHECK(mixed.losses == 1);
  CHECK(mixed.ties == 2);
  CHECK(mixed.p_value == 0.625);
}

TEST_CASE("an all-tie comparison is flagged as uninformative") {
  std::vector<double> same{0.25, 0.5, 0.75};
  SignTestResult r = sign_test(same, same);
  CHECK(r.wins == 0);
  CHECK(r.losses == 0);
  CHECK(r.ties == 3);
  CHECK(r.p_value == 1.0);
}

TEST_CASE("the sign test only sees comparison outcomes") {
  const std::vector<double> a{0.9, 0.2, 0.6, 0.4, 0.8, 0.1, 0.7};
  const std::vector<double> b{0.5, 0.3, 0.5, 0.4, 0.2, 0.3, 0.6};
  const SignTestResult plain = sign_test(a, b);

  auto warp = [](const std::vector<double>& v) {
    std::vector<double> out;
    for (double x : v) out.push_back(std::exp(3.0 * x) - 1.0);  // strictly increasing
    return out;
  };
  const SignTestResult warped = sign_test(warp(a), warp(b));
  CHECK(plain.wins == warped.wins);
  CHECK(plain.losses == warped.losses);
  CHECK(plain.ties == warped.ties);
  CHECK(plain.p_value == warped.p_value);
}

TEST_CASE("sign test rejects malformed input") {
  CHECK_THROWS_AS(sign_test({1.0}, {1.0, 2.0}), ContractError);
  CHECK_THROWS_AS(sign_test({}, {}), ContractError);
}

// ---------------------------------------------------------------------------
// Report formatting
// ---------------------------------------------------------------------------

TEST_CASE("reports print stable keys and conventional scales") {
  const auto hyp = toks({"the", "cat", "sat", "down"});
  const BleuResult perfect = corpus_bleu({hyp}, {{hyp}}, false);
  CHECK(format_bleu_report(perfect) ==
        "bleu: 100.00\np1: 100.00\np2: 100.00\np3: 100.00\np4: 100.00\nbp: 1.0000\n");

  std::vector<double> same{1.0, 2.0};
  CHECK(format_sign_report(sign_test(same, same)) ==
        "wins: 0\nlosses: 0\nties: 2\np_value: 1.0\n");

  std::vector<double> a8{1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
  std::vector<double> b8{0, 0, 0, 0, 0, 0, 0, 0, 1, 1};
  CHECK(format_sign_report(sign_test(a8, b8)) ==
        "wins: 8\nlosses: 2\nties: 0\np_value: 0.109375\n");

  CHECK(format_probability(1.0) == "1.0");
  CHECK(format_probability(0.5) == "0.5");
  CHECK(format_probability(0.001953125) == "0.001953");
  CHECK(format_probability(0.0) == "0.0");
}

// ---------------------------------------------------------------------------
// Gate statistics
// ---------------------------------------------------------------------------

namespace {

ModelConfig gated_cfg() {
  ModelConfig cfg;
  cfg.strategy.strategy = Strategy::kGatedAux;
  cfg.strategy.window = 3;
  cfg.strategy.emb_dim = 3;
  cfg.strategy.enc_hidden = 4;
  cfg.strategy.dec_hidden = 5;
  cfg.strategy.ctx_dim = 4;
  cfg.src_vocab = 10;
  cfg.tgt_vocab = 11;
  cfg.attn_dim = 4;
  cfg.readout_dim = 5;
  cfg.max_len = 20;
  return cfg;
}

// Vocabulary whose ids 4..9 spell t4..t9, matching gated_cfg's source side.
Vocabulary toy_vocab() {
  std::vector<std::vector<std::string>> sents;
  for (int i = 4; i <= 9; ++i) sents.push_back({"t" + std::to_string(i)});
  // Higher frequency for lower ids keeps the mapping stable.
  for (int i = 4; i <= 9; ++i) {
    for (int rep = 0; rep < 10 - i; ++rep) sents.push_back({"t" + std::to_string(i)});
  }
  return Vocabulary::build(sents, 10).vocab;
}

TokenDocuments toy_docs() {
  return {{{"t4", "t5"}, {"t6"}, {"t7", "t8", "t9"}}, {{"t5", "t7"}}};
}

}  // namespace

TEST_CASE("a zero-weight gate reports exactly one half everywhere") {
  TranslationModel<double> model(gated_cfg(), 3);
  for (const char* name : {"gate.U_z", "gate.W_z", "gate.C_z"}) {
    model.store().value(name).fill(0.0);
  }
  const GateReport r = gate_stats(model, toy_vocab(), toy_docs());
  CHECK(r.mean == 0.5);
  CHECK(r.min == 0.5);
  CHECK(r.max == 0.5);
  CHECK(r.steps > 0);
  CHECK(r.components == r.steps * 4);  // ctx_dim scalars per step
  for (std::size_t b = 0; b < 10; ++b) {
    CHECK(r.histogram[b] == (b == 5 ? r.components : 0));
  }
}

TEST_CASE("a forced gate reports saturated statistics") {
  TranslationModel<double> model(gated_cfg(), 3);
  model.force_gate(1.0);
  const GateReport r = gate_stats(model, toy_vocab(), toy_docs());
  CHECK(r.mean == 1.0);
  CHECK(r.min == 1.0);
  CHECK(r.max == 1.0);
  CHECK(r.histogram[9] == r.components);
}

TEST_CASE("gate statistics demand a gated strategy") {
  ModelConfig cfg = gated_cfg();
  cfg.strategy.strategy = Strategy::kAux;
  TranslationModel<double> model(cfg, 3);
  CHECK_THROWS_AS(gate_stats(model, toy_vocab(), toy_docs()), ContractError);

  TranslationModel<double> gated(gated_cfg(), 3);
  CHECK_THROWS_AS(gate_stats(gated, toy_vocab(), TokenDocuments{}), ContractError);
}

TEST_CASE("gate traces follow the greedy decoder exactly") {
  TranslationModel<double> model(gated_cfg(), 21);
  const std::vector<std::vector<int>> sentences{{4, 5, 6}, {7, 8}, {5, 9, 4, 6}};
  const auto windows = document_windows(sentences, 3);
  DecodeOptions opt;
  opt.beam = 1;
  for (std::size_t m = 0; m < sentences.size(); ++m) {
    const auto trace = greedy_gate_trace(model, sentences[m], windows[m]);
    const auto tokens = translate_sentence(model, sentences[m], windows[m], opt);
    CHECK(trace.tokens == tokens);
    CHECK(trace.gates.size() == trace.tokens.size() + 1);  // one per step, eos included
    for (const auto& gate : trace.gates) {
      REQUIRE(gate.size() == 4);
      for (double v : gate.data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
    }
  }
}
