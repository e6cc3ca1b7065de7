#include "ctxnmt/synthgen.hpp"

#include <cstdio>
#include <sstream>

#include "ctxnmt/error.hpp"
#include "ctxnmt/rng.hpp"

namespace ctxnmt {

namespace {

// Sentence lengths vary a little so padding and masking paths get exercised
// downstream; the range is arbitrary but fixed for reproducibility.
constexpr std::size_t kMinSentenceLen = 3;
constexpr std::size_t kLenSpread = 4;  // lengths drawn from [3, 6]

std::size_t draw_len(Rng& rng) {
  return kMinSentenceLen + static_cast<std::size_t>(rng.below(kLenSpread));
}

}  // namespace

void SynthSpec::validate() const {
  if (n_docs == 0) throw ConfigError("synthetic spec needs at least one document");
  if (sentences_per_doc < 2) {
    throw ConfigError("synthetic documents need at least two sentences");
  }
  if (n_topics < 2) throw ConfigError("synthetic spec needs at least two topics");
  if (n_ambiguous < 1) throw ConfigError("synthetic spec needs at least one ambiguous token");
  if (filler_vocab < 1) throw ConfigError("synthetic spec needs a nonempty filler vocabulary");
  if (!(ambiguity_rate >= 0.0 && ambiguity_rate <= 1.0)) {
    throw ConfigError("ambiguity rate must lie in [0, 1]");
  }
}

std::string topic_marker(std::size_t topic) { return "topic_" + std::to_string(topic); }
std::string topic_marker_target(std::size_t topic) { return "TOPIC_" + std::to_string(topic); }
std::string ambiguous_token(std::size_t a) { return "amb_" + std::to_string(a); }
std::string sense_token(std::size_t a, std::size_t t) {
  return "SENSE_" + std::to_string(a) + "_" + std::to_string(t);
}
std::string filler_token(std::size_t f) { return "w" + std::to_string(f); }

SynthResult generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SynthResult result;
  result.corpus.documents.resize(spec.n_docs);

  for (std::size_t d = 0; d < spec.n_docs; ++d) {
    Document& doc = result.corpus.documents[d];
    const std::size_t topic = static_cast<std::size_t>(rng.below(spec.n_topics));

    for (std::size_t s = 0; s < spec.sentences_per_doc; ++s) {
      SentencePair pair;
      const std::size_t len = draw_len(rng);
      pair.source.resize(len);
      pair.target.resize(len);
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t f = static_cast<std::size_t>(rng.below(spec.filler_vocab));
        pair.source[i] = filler_token(f);
        pair.target[i] = pair.source[i];
      }
      if (s == 0) {
        // The opening sentence announces the topic; everything else in it is
        // filler so the marker's position carries no signal.
        const std::size_t at = static_cast<std::size_t>(rng.below(len));
        pair.source[at] = topic_marker(topic);
        pair.target[at] = topic_marker_target(topic);
      } else if (rng.uniform() < spec.ambiguity_rate) {
        const std::size_t at = static_cast<std::size_t>(rng.below(len));
        const std::size_t a = static_cast<std::size_t>(rng.below(spec.n_ambiguous));
        pair.source[at] = ambiguous_token(a);
        pair.target[at] = sense_token(a, topic);
        result.key.push_back(SenseSlot{d, s, at, pair.target[at]});
      }
      doc.pairs.push_back(std::move(pair));
    }
  }
  return result;
}

std::string serialize_key(const std::vector<SenseSlot>& key) {
  std::ostringstream out;
  for (const auto& slot : key) {
    out << slot.doc << ' ' << slot.sentence << ' ' << slot.position << ' ' << slot.sense << '\n';
  }
  return out.str();
}

std::vector<SenseSlot> parse_key(const std::string& text, const std::string& name) {
  std::vector<SenseSlot> key;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    SenseSlot slot;
    std::string extra;
    if (!(fields >> slot.doc >> slot.sentence >> slot.position >> slot.sense)) {
      throw ParseError(name + " line " + std::to_string(line_no) +
                       ": expected 'doc sentence position sense'");
    }
    if (fields >> extra) {
      throw ParseError(name + " line " + std::to_string(line_no) + ": trailing fields");
    }
    key.push_back(std::move(slot));
  }
  return key;
}

double score_senses(const TokenDocuments& hypotheses, const std::vector<SenseSlot>& key) {
  if (key.empty()) return 1.0;
  std::size_t hits = 0;
  for (const auto& slot : key) {
    if (slot.doc >= hypotheses.size()) {
      throw ContractError("sense key refers to document " + std::to_string(slot.doc) +
                          " but only " + std::to_string(hypotheses.size()) +
                          " hypothesis documents were given");
    }
    const auto& doc = hypotheses[slot.doc];
    if (slot.sentence >= doc.size()) {
      throw ContractError("sense key refers to sentence " + std::to_string(slot.sentence) +
                          " of document " + std::to_string(slot.doc) + " but it has only " +
                          std::to_string(doc.size()) + " sentences");
    }
    const auto& sentence = doc[slot.sentence];
    for (const auto& tok : sentence) {
      if (tok == slot.sense) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(key.size());
}

}  // namespace ctxnmt
