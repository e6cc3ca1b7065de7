#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "ctxnmt/model.hpp"
#include "ctxnmt/strategy.hpp"

namespace ctxnmt {

// Experiment settings as a flat key = value text file with # comments. The
// model size defaults follow the full-scale recipe (600-dim embeddings,
// 1000-dim hidden layers, batches of 80, 35K vocabularies, three-sentence
// windows); toy runs override them. Serialization emits keys in one fixed
// order so configs diff cleanly.
struct RunConfig {
  std::string strategy = "baseline";
  std::size_t window = 3;
  std::size_t emb_dim = 600;
  std::size_t enc_hidden = 1000;
  std::size_t dec_hidden = 1000;
  std::size_t ctx_dim = 1000;
  std::size_t attn_dim = 0;     // 0 falls back to dec_hidden
  std::size_t readout_dim = 0;  // 0 falls back to dec_hidden
  std::size_t src_vocab_cap = 35000;
  std::size_t tgt_vocab_cap = 35000;
  std::size_t max_len = 80;

  std::size_t batch_size = 80;
  double lr = 0.001;
  double clip_norm = 5.0;
  std::size_t epochs = 30;
  std::size_t patience = 3;
  std::size_t beam = 1;
  std::uint64_t seed = 1;
  std::string precision = "double";  // "float" or "double"

  void validate() const;  // ConfigError on out-of-range settings

  StrategyConfig strategy_config() const;
  ModelConfig model_config(std::size_t src_vocab, std::size_t tgt_vocab) const;
};

// Parsing starts from `defaults`, so callers can pre-seed values (for
// instance from an environment override) that the file may then overwrite.
RunConfig parse_config(const std::string& text, const std::string& name = "config",
                       const RunConfig& defaults = RunConfig());
RunConfig load_config(const std::string& path, const RunConfig& defaults = RunConfig());
std::string serialize_config(const RunConfig& config);

}  // namespace ctxnmt
