#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace ctxnmt {

// Closed token vocabulary with four reserved entries. Construction keeps the
// most frequent tokens up to the cap, breaking frequency ties toward the
// lexicographically smaller token, so the same corpus always produces the
// same ids.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kReserved = 4;

  struct BuildResult;  // defined after the class; it carries a Vocabulary

  // sentences: flat view over one corpus side.
  static BuildResult build(const std::vector<std::vector<std::string>>& sentences,
                           std::size_t cap);

  Vocabulary();  // reserved entries only

  int id(const std::string& token) const;  // kUnk for unknown tokens
  const std::string& token(int id) const;  // throws ContractError out of range
  std::size_t size() const { return tokens_.size(); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  // FNV-1a over the saved file bytes; recorded in model containers so a
  // model can refuse mismatched vocabularies at translation time.
  static std::string file_hash(const std::string& path);

 private:
  void append(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct Vocabulary::BuildResult {
  Vocabulary vocab;
  double coverage = 0.0;  // fraction of running tokens kept in-vocab
  std::size_t total_tokens = 0;
};

}  // namespace ctxnmt
