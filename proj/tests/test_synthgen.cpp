#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ctxnmt/corpus.hpp"
#include "ctxnmt/error.hpp"
#include "ctxnmt/synthgen.hpp"
#include "doctest.h"

using namespace ctxnmt;

namespace {

SynthSpec base_spec() {
  SynthSpec spec;
  spec.n_docs = 100;
  spec.sentences_per_doc = 4;
  spec.n_topics = 3;
  spec.n_ambiguous = 4;
  spec.filler_vocab = 20;
  spec.ambiguity_rate = 0.5;
  spec.seed = 11;
  return spec;
}

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.rfind(prefix, 0) == 0;
}

// Recovers the document topic from the marker in its first sentence.
std::size_t doc_topic(const Document& doc) {
  for (const auto& tok : doc.pairs.at(0).source) {
    if (starts_with(tok, "topic_")) return std::stoul(tok.substr(6));
  }
  REQUIRE_MESSAGE(false, "document has no topic marker in its first sentence");
  return 0;
}

}  // namespace

TEST_CASE("synthetic specs reject out-of-range settings") {
  auto bad = [](auto mutate) {
    SynthSpec spec = base_spec();
    mutate(spec);
    CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
  };
  bad([](SynthSpec& s) { s.n_docs = 0; });
  bad([](SynthSpec& s) { s.sentences_per_doc = 1; });
  bad([](SynthSpec& s) { s.n_topics = 1; });
  bad([](SynthSpec& s) { s.n_ambiguous = 0; });
  bad([](SynthSpec& s) { s.filler_vocab = 0; });
  bad([](SynthSpec& s) { s.ambiguity_rate = -0.1; });
  bad([](SynthSpec& s) { s.ambiguity_rate = 1.5; });
}

TEST_CASE("zero ambiguity yields a pure copy corpus with uppercased markers") {
  SynthSpec spec = base_spec();
  spec.ambiguity_rate = 0.0;
  spec.n_docs = 30;
  const SynthResult r = generate_synthetic(spec);

  CHECK(r.key.empty());
  REQUIRE(r.corpus.documents.size() == 30);
  for (const auto& doc : r.corpus.documents) {
    REQUIRE(doc.pairs.size() == spec.sentences_per_doc);
    for (const auto& pair : doc.pairs) {
      REQUIRE(pair.source.size() == pair.target.size());
      for (std::size_t i = 0; i < pair.source.size(); ++i) {
        if (starts_with(pair.source[i], "topic_")) {
          CHECK(pair.target[i] == "TOPIC_" + pair.source[i].substr(6));
        } else {
          CHECK(pair.target[i] == pair.source[i]);
        }
      }
    }
  }
}

TEST_CASE("the same seed reproduces the corpus byte for byte") {
  const SynthResult a = generate_synthetic(base_spec());
  const SynthResult b = generate_synthetic(base_spec());
  CHECK(serialize_side(a.corpus, Side::kSource) == serialize_side(b.corpus, Side::kSource));
  CHECK(serialize_side(a.corpus, Side::kTarget) == serialize_side(b.corpus, Side::kTarget));
  CHECK(serialize_key(a.key) == serialize_key(b.key));

  SynthSpec other = base_spec();
  other.seed += 1;
  const SynthResult c = generate_synthetic(other);
  CHECK(serialize_side(a.corpus, Side::kSource) != serialize_side(c.corpus, Side::kSource));
}

TEST_CASE("generated documents satisfy the structural guarantees") {
  const SynthResult r = generate_synthetic(base_spec());

  for (const auto& doc : r.corpus.documents) {
    const std::size_t topic = doc_topic(doc);
    for (std::size_t s = 0; s < doc.pairs.size(); ++s) {
      const auto& pair = doc.pairs[s];
      std::size_t markers = 0;
      std::size_t ambiguous = 0;
      for (std::size_t i = 0; i < pair.source.size(); ++i) {
        const std::string& tok = pair.source[i];
        if (starts_with(tok, "topic_")) {
          ++markers;
          CHECK(pair.target[i] == "TOPIC_" + tok.substr(6));
        } else if (starts_with(tok, "amb_")) {
          ++ambiguous;
          // Consistency: the sense is fixed by the document topic, so every
          // occurrence of amb_a in this document resolves the same way.
          CHECK(pair.target[i] == sense_token(std::stoul(tok.substr(4)), topic));
        } else {
          CHECK(starts_with(tok, "w"));
          CHECK(pair.target[i] == tok);
        }
      }
      // Markers appear exactly once in the opening sentence and never again;
      // they never share a sentence with an ambiguous token, so the sense is
      // unrecoverable from the current sentence alone.
      CHECK(markers == (s == 0 ? 1u : 0u));
      CHECK(ambiguous <= 1u);
      CHECK((markers == 0 || ambiguous == 0));
      if (s == 0) CHECK(ambiguous == 0);
    }
  }
}

TEST_CASE("the answer key lists exactly the ambiguous slots") {
  const SynthResult r = generate_synthetic(base_spec());

  std::size_t ambiguous_in_corpus = 0;
  for (const auto& doc : r.corpus.documents) {
    for (const auto& pair : doc.pairs) {
      for (const auto& tok : pair.source) {
        if (starts_with(tok, "amb_")) ++ambiguous_in_corpus;
      }
    }
  }
  REQUIRE(r.key.size() == ambiguous_in_corpus);
  CHECK(!r.key.empty());

  for (const auto& slot : r.key) {
    REQUIRE(slot.doc < r.corpus.documents.size());
    const auto& pairs = r.corpus.documents[slot.doc].pairs;
    REQUIRE(slot.sentence < pairs.size());
    CHECK(slot.sentence > 0);
    const auto& pair = pairs[slot.sentence];
    REQUIRE(slot.position < pair.source.size());
    CHECK(starts_with(pair.source[slot.position], "amb_"));
    CHECK(pair.target[slot.position] == slot.sense);
  }
}

TEST_CASE("ambiguous slot counts stay within the binomial bound") {
  // 100 documents with 3 non-opening sentences each give 300 independent
  // slots at rate 0.5: mean 150, sigma = sqrt(300 * 0.25) ~ 8.66, so any
  // honest draw stays within 3 sigma ~ 25.98 of the mean.
  const double mean = 300.0 * 0.5;
  const double bound = 3.0 * std::sqrt(300.0 * 0.5 * 0.5);
  for (std::uint64_t seed : {1u, 7u, 42u}) {
    SynthSpec spec = base_spec();
    spec.seed = seed;
    const SynthResult r = generate_synthetic(spec);
    const double count = static_cast<double>(r.key.size());
    INFO("seed ", seed, " key size ", r.key.size());
    CHECK(std::fabs(count - mean) <= bound);
  }
}

TEST_CASE("generated corpora survive a corpus-module round trip") {
  const SynthResult r = generate_synthetic(base_spec());
  const std::string src = serialize_side(r.corpus, Side::kSource);
  const std::string tgt = serialize_side(r.corpus, Side::kTarget);

  const DocumentCorpus parsed = parse_parallel_text(src, tgt);
  REQUIRE(parsed.documents.size() == r.corpus.documents.size());
  for (std::size_t d = 0; d < parsed.documents.size(); ++d) {
    const auto& got = parsed.documents[d].pairs;
    const auto& want = r.corpus.documents[d].pairs;
    REQUIRE(got.size() == want.size());
    for (std::size_t s = 0; s < got.size(); ++s) {
      CHECK(got[s].source == want[s].source);
      CHECK(got[s].target == want[s].target);
    }
  }
}

TEST_CASE("answer keys round trip through their text form") {
  const SynthResult r = generate_synthetic(base_spec());
  const std::vector<SenseSlot> parsed = parse_key(serialize_key(r.key));
  REQUIRE(parsed.size() == r.key.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) CHECK(parsed[i] == r.key[i]);

  CHECK_THROWS_WITH_AS(parse_key("1 2 3\n", "key"),
                       "key line 1: expected 'doc sentence position sense'", ParseError);
  CHECK_THROWS_WITH_AS(parse_key("0 1 2 SENSE_0_0 junk\n", "key"),
                       "key line 1: trailing fields", ParseError);
  CHECK_THROWS_WITH_AS(parse_key("0 1 2 SENSE_0_0\nx y z w\n", "key"),
                       "key line 2: expected 'doc sentence position sense'", ParseError);
}

TEST_CASE("sense scoring counts position-free containment") {
  const SynthResult r = generate_synthetic(base_spec());
  const TokenDocuments refs = corpus_side(r.corpus, Side::kTarget);

  CHECK(score_senses(refs, r.key) == 1.0);
  CHECK(score_senses(refs, {}) == 1.0);

  // Replacing every keyed sense token breaks containment everywhere.
  TokenDocuments wrong = refs;
  for (const auto& slot : r.key) {
    for (auto& tok : wrong[slot.doc][slot.sentence]) {
      if (tok == slot.sense) tok = "WRONG";
    }
  }
  CHECK(score_senses(wrong, r.key) == 0.0);

  // Break only the even-numbered documents; the expected fraction follows
  // directly from the key, independent of the scorer.
  TokenDocuments half = refs;
  std::size_t broken = 0;
  for (const auto& slot : r.key) {
    if (slot.doc % 2 != 0) continue;
    for (auto& tok : half[slot.doc][slot.sentence]) {
      if (tok == slot.sense) tok = "WRONG";
    }
    ++broken;
  }
  const double expected =
      static_cast<double>(r.key.size() - broken) / static_cast<double>(r.key.size());
  CHECK(score_senses(half, r.key) == doctest::Approx(expected).epsilon(1e-12));

  // Scoring rejects hypothesis sets that do not cover the keyed documents.
  TokenDocuments short_docs(refs.begin(), refs.end() - 1);
  std::vector<SenseSlot> tail_key{{r.corpus.documents.size() - 1, 1, 0, "SENSE_0_0"}};
  CHECK_THROWS_AS(score_senses(short_docs, tail_key), ContractError);
  std::vector<SenseSlot> deep_key{{0, 99, 0, "SENSE_0_0"}};
  CHECK_THROWS_AS(score_senses(refs, deep_key), ContractError);
}
