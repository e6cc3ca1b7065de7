#include "ctxnmt/vocab.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ctxnmt/error.hpp"

namespace ctxnmt {

namespace {
const char* kReservedTokens[Vocabulary::kReserved] = {"<pad>", "<unk>", "<s>", "</s>"};
}

Vocabulary::Vocabulary() {
  for (const char* t : kReservedTokens) append(t);
}

void Vocabulary::append(const std::string& token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary::BuildResult Vocabulary::build(const std::vector<std::vector<std::string>>& sentences,
                                          std::size_t cap) {
  if (cap < static_cast<std::size_t>(kReserved) + 1) {
    throw ConfigError("vocabulary cap must be at least " + std::to_string(kReserved + 1));
  }
  // std::map gives the lexicographic order needed for deterministic ties.
  std::map<std::string, std::size_t> freq;
  std::size_t total = 0;
  for (const auto& sentence : sentences) {
    for (const auto& tok : sentence) {
      bool reserved = false;
      for (const char* r : kReservedTokens) reserved = reserved || tok == r;
      if (reserved) continue;  // reserved spellings cannot be re-added
      ++freq[tok];
      ++total;
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  BuildResult result;
  result.total_tokens = total;
  std::size_t kept_tokens = 0;
  const std::size_t keep = cap - kReserved;
  for (std::size_t i = 0; i < ranked.size() && i < keep; ++i) {
    result.vocab.append(ranked[i].first);
    kept_tokens += ranked[i].second;
  }
  result.coverage = total == 0 ? 1.0 : static_cast<double>(kept_tokens) / static_cast<double>(total);
  return result;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("vocabulary id " + std::to_string(id) + " out of range (size " +
                        std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file '" + path + "'");
  // Reserved entries are implicit: the file starts at id 4.
  for (std::size_t i = kReserved; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
  if (!out) throw IoError("failed while writing vocabulary file '" + path + "'");
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary file '" + path + "'");
  Vocabulary v;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      throw ParseError("vocabulary file '" + path + "': empty line " + std::to_string(line_no));
    }
    if (line.find(' ') != std::string::npos || line.find('\t') != std::string::npos) {
      throw ParseError("vocabulary file '" + path + "': whitespace inside token at line " +
                       std::to_string(line_no));
    }
    if (v.index_.count(line)) {
      throw ParseError("vocabulary file '" + path + "': duplicate token at line " +
                       std::to_string(line_no));
    }
    v.append(line);
  }
  return v;
}

std::string Vocabulary::file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary file '" + path + "'");
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a 64-bit
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace ctxnmt
