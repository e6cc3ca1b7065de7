#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxnmt/corpus.hpp"

namespace ctxnmt {

// Recipe for a synthetic parallel corpus whose only nontrivial translation
// decisions require cross-sentence context. Each document commits to one
// topic; the first sentence announces it with a marker token; later
// sentences are copy-translated filler except that, with probability
// ambiguity_rate, one slot holds an ambiguous token whose correct target
// sense is determined by the document topic alone. Within a sentence the
// ambiguous token is therefore unresolvable: a context-free model can do no
// better than guessing among the n_topics senses.
struct SynthSpec {
  std::size_t n_docs = 0;
  std::size_t sentences_per_doc = 0;
  std::size_t n_topics = 0;
  std::size_t n_ambiguous = 0;
  std::size_t filler_vocab = 0;
  double ambiguity_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// One scored slot: the hypothesis for sentence `sentence` of document `doc`
// must contain `sense` somewhere (scoring is position-free; the position
// records where the ambiguous token sat in the source).
struct SenseSlot {
  std::size_t doc = 0;
  std::size_t sentence = 0;
  std::size_t position = 0;
  std::string sense;

  bool operator==(const SenseSlot& other) const {
    return doc == other.doc && sentence == other.sentence &&
           position == other.position && sense == other.sense;
  }
};

struct SynthResult {
  DocumentCorpus corpus;
  std::vector<SenseSlot> key;
};

// Token spellings used by the generator.
std::string topic_marker(std::size_t topic);           // "topic_<t>"
std::string topic_marker_target(std::size_t topic);    // "TOPIC_<t>"
std::string ambiguous_token(std::size_t a);            // "amb_<a>"
std::string sense_token(std::size_t a, std::size_t t); // "SENSE_<a>_<t>"
std::string filler_token(std::size_t f);               // "w<f>"

// Deterministic for a given spec: the same spec yields byte-identical
// corpora and key. Throws ConfigError on invalid specs.
SynthResult generate_synthetic(const SynthSpec& spec);

// Answer key text: one "doc sentence position sense" record per line.
std::string serialize_key(const std::vector<SenseSlot>& key);
std::vector<SenseSlot> parse_key(const std::string& text,
                                 const std::string& name = "key");

// Fraction of keyed slots whose hypothesis sentence contains the correct
// sense token. An empty key scores 1.0 (nothing to get wrong). Throws
// ContractError when the hypotheses do not cover a keyed document or
// sentence index.
double score_senses(const TokenDocuments& hypotheses,
                    const std::vector<SenseSlot>& key);

}  // namespace ctxnmt
