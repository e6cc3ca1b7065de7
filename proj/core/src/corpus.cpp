#include "ctxnmt/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ctxnmt/error.hpp"

namespace ctxnmt {

namespace {

bool is_blank(const std::string& line) {
  for (char c : line) {
    if (c != ' ' && c != '\t' && c != '\r') return false;
  }
  return true;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : line) {
    if (c == ' ' || c == '\t' || c == '\r') {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) lines.push_back(std::move(cur));
  return lines;
}

}  // namespace

DocumentCorpus parse_parallel_text(const std::string& src_text, const std::string& tgt_text,
                                   const std::string& src_name, const std::string& tgt_name) {
  const auto src_lines = split_lines(src_text);
  const auto tgt_lines = split_lines(tgt_text);
  DocumentCorpus corpus;
  Document current;
  std::size_t doc_start_line = 1;

  const std::size_t n = std::max(src_lines.size(), tgt_lines.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t line_no = i + 1;
    if (i >= src_lines.size() || i >= tgt_lines.size()) {
      const std::string& shorter = i >= src_lines.size() ? src_name : tgt_name;
      const std::string& longer = i >= src_lines.size() ? tgt_name : src_name;
      throw ParseError(shorter + " ends at line " + std::to_string(line_no) + " but " + longer +
                       " continues (document " + std::to_string(corpus.documents.size() + 1) +
                       ")");
    }
    const bool src_blank = is_blank(src_lines[i]);
    const bool tgt_blank = is_blank(tgt_lines[i]);
    if (src_blank != tgt_blank) {
      const std::string& blank_side = src_blank ? src_name : tgt_name;
      throw ParseError("document boundary mismatch at line " + std::to_string(line_no) + ": " +
                       blank_side + " ends document " +
                       std::to_string(corpus.documents.size() + 1) +
                       " but the other side continues");
    }
    if (src_blank) {
      if (current.pairs.empty()) {
        throw ParseError("empty document at line " + std::to_string(line_no) + " (document " +
                         std::to_string(corpus.documents.size() + 1) + " starting at line " +
                         std::to_string(doc_start_line) + ")");
      }
      corpus.documents.push_back(std::move(current));
      current = Document{};
      doc_start_line = line_no + 1;
      continue;
    }
    SentencePair pair;
    pair.source = tokenize(src_lines[i]);
    pair.target = tokenize(tgt_lines[i]);
    current.pairs.push_back(std::move(pair));
  }
  if (!current.pairs.empty()) corpus.documents.push_back(std::move(current));
  if (corpus.documents.empty()) {
    throw ParseError("no documents found in " + src_name + "/" + tgt_name);
  }
  return corpus;
}

DocumentCorpus parse_parallel(const std::string& src_path, const std::string& tgt_path) {
  return parse_parallel_text(read_file(src_path), read_file(tgt_path), src_path, tgt_path);
}

TokenDocuments parse_documents_text(const std::string& text, const std::string& name) {
  const auto lines = split_lines(text);
  TokenDocuments docs;
  std::vector<std::vector<std::string>> current;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) {
      if (current.empty()) {
        throw ParseError(name + ": empty document at line " + std::to_string(i + 1));
      }
      docs.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(tokenize(lines[i]));
    }
  }
  if (!current.empty()) docs.push_back(std::move(current));
  if (docs.empty()) throw ParseError(name + ": no documents found");
  return docs;
}

TokenDocuments parse_documents_file(const std::string& path) {
  return parse_documents_text(read_file(path), path);
}

std::string serialize_documents(const TokenDocuments& docs) {
  std::string out;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (d) out += '\n';
    for (const auto& sentence : docs[d]) {
      for (std::size_t t = 0; t < sentence.size(); ++t) {
        if (t) out += ' ';
        out += sentence[t];
      }
      out += '\n';
    }
  }
  return out;
}

TokenDocuments corpus_side(const DocumentCorpus& corpus, Side side) {
  TokenDocuments docs;
  docs.reserve(corpus.documents.size());
  for (const auto& doc : corpus.documents) {
    std::vector<std::vector<std::string>> sentences;
    sentences.reserve(doc.pairs.size());
    for (const auto& pair : doc.pairs) {
      sentences.push_back(side == Side::kSource ? pair.source : pair.target);
    }
    docs.push_back(std::move(sentences));
  }
  return docs;
}

std::string serialize_side(const DocumentCorpus& corpus, Side side) {
  return serialize_documents(corpus_side(corpus, side));
}

std::vector<std::vector<std::string>> side_sentences(const DocumentCorpus& corpus, Side side) {
  std::vector<std::vector<std::string>> out;
  out.reserve(corpus.sentence_count());
  for (const auto& doc : corpus.documents) {
    for (const auto& pair : doc.pairs) {
      out.push_back(side == Side::kSource ? pair.source : pair.target);
    }
  }
  return out;
}

std::vector<TrainingExample> make_examples(const DocumentCorpus& corpus,
                                           const Vocabulary& src_vocab,
                                           const Vocabulary& tgt_vocab, std::size_t window_size,
                                           std::size_t max_len, ExampleStats* stats) {
  if (max_len == 0) throw ConfigError("max_len must be positive");
  std::vector<TrainingExample> examples;
  ExampleStats local;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    const Document& doc = corpus.documents[d];
    std::vector<std::vector<int>> history;  // every source sentence, truncated
    history.reserve(doc.pairs.size());
    for (std::size_t s = 0; s < doc.pairs.size(); ++s) {
      const SentencePair& pair = doc.pairs[s];
      std::vector<int> src_ids = src_vocab.encode(pair.source);
      const bool in_length = pair.source.size() <= max_len && pair.target.size() <= max_len;
      if (in_length) {
        TrainingExample ex;
        ex.source = src_ids;
        ex.target.reserve(pair.target.size() + 2);
        ex.target.push_back(Vocabulary::kBos);
        for (int id : tgt_vocab.encode(pair.target)) ex.target.push_back(id);
        ex.target.push_back(Vocabulary::kEos);
        const std::size_t take = std::min(window_size, s);
        ex.window.assign(history.end() - static_cast<std::ptrdiff_t>(take), history.end());
        ex.doc_index = d;
        ex.sent_index = s;
        examples.push_back(std::move(ex));
        ++local.kept;
      } else {
        ++local.dropped_overlength;
      }
      if (src_ids.size() > max_len) src_ids.resize(max_len);
      history.push_back(std::move(src_ids));
    }
  }
  if (stats != nullptr) *stats = local;
  return examples;
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size,
                                                       Rng& rng) {
  if (n == 0) throw ContractError("shuffled_batches: no examples");
  if (batch_size == 0) throw ContractError("shuffled_batches: batch_size must be positive");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

namespace {

// Lays out one padded id plane: step t, item b.
void fill_steps(std::vector<StepIds>& steps, std::size_t batch, std::size_t max_steps) {
  steps.assign(max_steps, StepIds{});
  for (auto& s : steps) {
    s.ids.assign(batch, Vocabulary::kPad);
    s.mask.assign(batch, 0);
    s.full = false;
  }
}

void finalize_full_flags(std::vector<StepIds>& steps) {
  for (auto& s : steps) {
    s.full = std::all_of(s.mask.begin(), s.mask.end(), [](std::uint8_t m) { return m != 0; });
  }
}

}  // namespace

SeqBatch single_sequence(const std::vector<int>& ids) {
  if (ids.empty()) throw ContractError("single_sequence: empty sentence");
  SeqBatch sb;
  sb.lengths = {ids.size() + 1};
  sb.steps.resize(ids.size() + 1);
  for (std::size_t t = 0; t <= ids.size(); ++t) {
    sb.steps[t].ids = {t < ids.size() ? ids[t] : Vocabulary::kEos};
    sb.steps[t].mask = {1};
    sb.steps[t].full = true;
  }
  return sb;
}

PaddedBatch pad_batch(const std::vector<TrainingExample>& examples,
                      const std::vector<std::size_t>& indices, std::size_t window_size) {
  if (indices.empty()) throw ContractError("pad_batch: empty batch");
  const std::size_t B = indices.size();
  PaddedBatch pb;
  pb.batch = B;

  // Source: tokens plus eos, right-padded.
  std::size_t max_src = 0;
  for (std::size_t b = 0; b < B; ++b) {
    max_src = std::max(max_src, examples[indices[b]].source.size() + 1);
  }
  fill_steps(pb.source.steps, B, max_src);
  pb.source.lengths.assign(B, 0);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& src = examples[indices[b]].source;
    pb.source.lengths[b] = src.size() + 1;
    for (std::size_t t = 0; t <= src.size(); ++t) {
      pb.source.steps[t].ids[b] = t < src.size() ? src[t] : Vocabulary::kEos;
      pb.source.steps[t].mask[b] = 1;
    }
  }
  finalize_full_flags(pb.source.steps);

  // Window: right-aligned so slot K-1 is the most recent predecessor and
  // leading empty slots hold the document RNN at its zero start state.
  pb.window.slots.resize(window_size);
  for (std::size_t j = 0; j < window_size; ++j) {
    WindowSlot& slot = pb.window.slots[j];
    slot.active.assign(B, 0);
    std::size_t max_len = 0;
    for (std::size_t b = 0; b < B; ++b) {
      const auto& win = examples[indices[b]].window;
      if (win.size() > window_size) {
        throw ContractError("pad_batch: example window exceeds the configured window size");
      }
      if (j >= window_size - win.size()) {
        slot.active[b] = 1;
        const auto& sent = win[j - (window_size - win.size())];
        max_len = std::max(max_len, sent.size() + 1);
      }
    }
    slot.any = std::any_of(slot.active.begin(), slot.active.end(),
                           [](std::uint8_t a) { return a != 0; });
    slot.all = std::all_of(slot.active.begin(), slot.active.end(),
                           [](std::uint8_t a) { return a != 0; });
    if (!slot.any) continue;
    fill_steps(slot.steps, B, max_len);
    for (std::size_t b = 0; b < B; ++b) {
      if (!slot.active[b]) continue;
      const auto& win = examples[indices[b]].window;
      const auto& sent = win[j - (window_size - win.size())];
      for (std::size_t t = 0; t <= sent.size(); ++t) {
        slot.steps[t].ids[b] = t < sent.size() ? sent[t] : Vocabulary::kEos;
        slot.steps[t].mask[b] = 1;
      }
    }
    finalize_full_flags(slot.steps);
  }

  // Target: framed as bos..y_T on the input side, y_1..eos on the loss side.
  std::size_t max_tgt = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto& tgt = examples[indices[b]].target;
    if (tgt.size() < 2 || tgt.front() != Vocabulary::kBos || tgt.back() != Vocabulary::kEos) {
      throw ContractError("pad_batch: target must be bos...eos framed");
    }
    max_tgt = std::max(max_tgt, tgt.size() - 1);
  }
  fill_steps(pb.target.in_steps, B, max_tgt);
  fill_steps(pb.target.out_steps, B, max_tgt);
  pb.target.token_count = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto& tgt = examples[indices[b]].target;
    const std::size_t steps = tgt.size() - 1;
    pb.target.token_count += steps;
    for (std::size_t t = 0; t < steps; ++t) {
      pb.target.in_steps[t].ids[b] = tgt[t];
      pb.target.in_steps[t].mask[b] = 1;
      pb.target.out_steps[t].ids[b] = tgt[t + 1];
      pb.target.out_steps[t].mask[b] = 1;
    }
  }
  finalize_full_flags(pb.target.in_steps);
  finalize_full_flags(pb.target.out_steps);
  return pb;
}

}  // namespace ctxnmt
