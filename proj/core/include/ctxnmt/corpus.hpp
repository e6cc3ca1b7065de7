#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxnmt/rng.hpp"
#include "ctxnmt/vocab.hpp"

namespace ctxnmt {

// Parallel documents: aligned tokenized sentence pairs grouped by document.
// Text format (both sides): one tokenized sentence per line, tokens separated
// by whitespace; a blank line ends a document; the final document needs no
// trailing blank line.
struct SentencePair {
  std::vector<std::string> source;
  std::vector<std::string> target;
};

struct Document {
  std::vector<SentencePair> pairs;
};

struct DocumentCorpus {
  std::vector<Document> documents;

  std::size_t sentence_count() const {
    std::size_t n = 0;
    for (const auto& d : documents) n += d.pairs.size();
    return n;
  }
};

enum class Side { kSource, kTarget };

// Tokenized documents of a single side: documents -> sentences -> tokens.
using TokenDocuments = std::vector<std::vector<std::vector<std::string>>>;

DocumentCorpus parse_parallel(const std::string& src_path, const std::string& tgt_path);
DocumentCorpus parse_parallel_text(const std::string& src_text, const std::string& tgt_text,
                                   const std::string& src_name = "source",
                                   const std::string& tgt_name = "target");

TokenDocuments parse_documents_text(const std::string& text, const std::string& name = "input");
TokenDocuments parse_documents_file(const std::string& path);

std::string serialize_documents(const TokenDocuments& docs);
std::string serialize_side(const DocumentCorpus& corpus, Side side);
TokenDocuments corpus_side(const DocumentCorpus& corpus, Side side);

// Flat sentence view of one side, for vocabulary building.
std::vector<std::vector<std::string>> side_sentences(const DocumentCorpus& corpus, Side side);

// One trainable sentence pair with its own context window, so examples can
// be shuffled freely.
struct TrainingExample {
  std::vector<int> source;               // source ids, no frame tokens
  std::vector<int> target;               // bos ... eos framed target ids
  std::vector<std::vector<int>> window;  // previous source sentences, oldest first
  std::size_t doc_index = 0;
  std::size_t sent_index = 0;
};

struct ExampleStats {
  std::size_t kept = 0;
  std::size_t dropped_overlength = 0;
};

// Builds one example per in-length sentence pair. Over-length pairs are
// dropped as examples but their source sentences still serve as history for
// later sentences (truncated to max_len tokens for bounded compute).
std::vector<TrainingExample> make_examples(const DocumentCorpus& corpus,
                                           const Vocabulary& src_vocab,
                                           const Vocabulary& tgt_vocab, std::size_t window_size,
                                           std::size_t max_len, ExampleStats* stats = nullptr);

// Seeded epoch shuffle chunked into index batches of at most batch_size.
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size,
                                                       Rng& rng);

// ---------------------------------------------------------------------------
// Padded batch layout consumed by the model. One StepIds per time step; the
// mask flags live rows and `full` marks steps where every row is live so the
// model can skip masking work.
// ---------------------------------------------------------------------------

struct StepIds {
  std::vector<int> ids;
  std::vector<std::uint8_t> mask;
  bool full = true;
};

struct SeqBatch {
  std::vector<StepIds> steps;        // source tokens with eos appended, padded
  std::vector<std::size_t> lengths;  // per-item live length (including eos)
};

struct WindowSlot {
  std::vector<StepIds> steps;        // slot sentence tokens with eos, padded
  std::vector<std::uint8_t> active;  // items that have a sentence in this slot
  bool any = false;
  bool all = false;
};

struct WindowBatch {
  std::vector<WindowSlot> slots;  // oldest first, right-aligned to the window
};

struct TargetBatch {
  std::vector<StepIds> in_steps;   // bos y_1 ... y_T
  std::vector<StepIds> out_steps;  // y_1 ... y_T eos (the loss targets)
  std::size_t token_count = 0;     // live target tokens across the batch
};

struct PaddedBatch {
  std::size_t batch = 0;
  SeqBatch source;
  WindowBatch window;
  TargetBatch target;
};

PaddedBatch pad_batch(const std::vector<TrainingExample>& examples,
                      const std::vector<std::size_t>& indices, std::size_t window_size);

// Batch-of-one view of a single source sentence (eos appended, no padding).
SeqBatch single_sequence(const std::vector<int>& ids);

}  // namespace ctxnmt
