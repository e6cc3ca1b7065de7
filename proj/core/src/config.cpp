#include "ctxnmt/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "ctxnmt/error.hpp"

namespace ctxnmt {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::uint64_t parse_u64(const std::string& value, const std::string& where) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(value, &used);
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected a non-negative integer, got '" + value + "'");
  }
  if (used != value.size() || value[0] == '-') {
    throw ConfigError(where + ": expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

double parse_double(const std::string& value, const std::string& where) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected a number, got '" + value + "'");
  }
  if (used != value.size()) {
    throw ConfigError(where + ": expected a number, got '" + value + "'");
  }
  return out;
}

// Trim a fixed-point rendering to the shortest form that reads back exactly.
std::string format_double(double v) {
  for (int prec = 1; prec <= 17; ++prec) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::stod(buf) == v) return buf;
  }
  return std::to_string(v);
}

}  // namespace

void RunConfig::validate() const {
  strategy_config().validate();
  if (max_len == 0) throw ConfigError("max_len must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (beam == 0) throw ConfigError("beam must be positive");
  if (src_vocab_cap <= Vocabulary::kReserved || tgt_vocab_cap <= Vocabulary::kReserved) {
    throw ConfigError("vocabulary caps must exceed the reserved entries");
  }
  if (precision != "float" && precision != "double") {
    throw ConfigError("precision must be 'float' or 'double', got '" + precision + "'");
  }
}

StrategyConfig RunConfig::strategy_config() const {
  StrategyConfig sc;
  sc.strategy = parse_strategy(strategy);
  sc.window = window;
  sc.emb_dim = emb_dim;
  sc.enc_hidden = enc_hidden;
  sc.dec_hidden = dec_hidden;
  sc.ctx_dim = ctx_dim;
  return sc;
}

ModelConfig RunConfig::model_config(std::size_t src_vocab, std::size_t tgt_vocab) const {
  ModelConfig mc;
  mc.strategy = strategy_config();
  mc.src_vocab = src_vocab;
  mc.tgt_vocab = tgt_vocab;
  mc.attn_dim = attn_dim;
  mc.readout_dim = readout_dim;
  mc.max_len = max_len;
  return mc;
}

RunConfig parse_config(const std::string& text, const std::string& name,
                       const RunConfig& defaults) {
  RunConfig config = defaults;
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>>
      setters{
          {"strategy", [&](const std::string& v, const std::string&) { config.strategy = v; }},
          {"window", [&](const std::string& v, const std::string& w) { config.window = parse_u64(v, w); }},
          {"emb_dim", [&](const std::string& v, const std::string& w) { config.emb_dim = parse_u64(v, w); }},
          {"enc_hidden", [&](const std::string& v, const std::string& w) { config.enc_hidden = parse_u64(v, w); }},
          {"dec_hidden", [&](const std::string& v, const std::string& w) { config.dec_hidden = parse_u64(v, w); }},
          {"ctx_dim", [&](const std::string& v, const std::string& w) { config.ctx_dim = parse_u64(v, w); }},
          {"attn_dim", [&](const std::string& v, const std::string& w) { config.attn_dim = parse_u64(v, w); }},
          {"readout_dim", [&](const std::string& v, const std::string& w) { config.readout_dim = parse_u64(v, w); }},
          {"src_vocab_cap", [&](const std::string& v, const std::string& w) { config.src_vocab_cap = parse_u64(v, w); }},
          {"tgt_vocab_cap", [&](const std::string& v, const std::string& w) { config.tgt_vocab_cap = parse_u64(v, w); }},
          {"max_len", [&](const std::string& v, const std::string& w) { config.max_len = parse_u64(v, w); }},
          {"batch_size", [&](const std::string& v, const std::string& w) { config.batch_size = parse_u64(v, w); }},
          {"lr", [&](const std::string& v, const std::string& w) { config.lr = parse_double(v, w); }},
          {"clip_norm", [&](const std::string& v, const std::string& w) { config.clip_norm = parse_double(v, w); }},
          {"epochs", [&](const std::string& v, const std::string& w) { config.epochs = parse_u64(v, w); }},
          {"patience", [&](const std::string& v, const std::string& w) { config.patience = parse_u64(v, w); }},
          {"beam", [&](const std::string& v, const std::string& w) { config.beam = parse_u64(v, w); }},
          {"seed", [&](const std::string& v, const std::string& w) { config.seed = parse_u64(v, w); }},
          {"precision", [&](const std::string& v, const std::string&) { config.precision = v; }},
      };

  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = name + " line " + std::to_string(line_no);

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": missing key");
    if (value.empty()) throw ConfigError(where + ": missing value for '" + key + "'");

    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    it->second(value, where);
  }
  return config;
}

RunConfig load_config(const std::string& path, const RunConfig& defaults) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path, defaults);
}

std::string serialize_config(const RunConfig& config) {
  std::ostringstream out;
  out << "strategy = " << config.strategy << "\n";
  out << "window = " << config.window << "\n";
  out << "emb_dim = " << config.emb_dim << "\n";
  out << "enc_hidden = " << config.enc_hidden << "\n";
  out << "dec_hidden = " << config.dec_hidden << "\n";
  out << "ctx_dim = " << config.ctx_dim << "\n";
  out << "attn_dim = " << config.attn_dim << "\n";
  out << "readout_dim = " << config.readout_dim << "\n";
  out << "src_vocab_cap = " << config.src_vocab_cap << "\n";
  out << "tgt_vocab_cap = " << config.tgt_vocab_cap << "\n";
  out << "max_len = " << config.max_len << "\n";
  out << "batch_size = " << config.batch_size << "\n";
  out << "lr = " << format_double(config.lr) << "\n";
  out << "clip_norm = " << format_double(config.clip_norm) << "\n";
  out << "epochs = " << config.epochs << "\n";
  out << "patience = " << config.patience << "\n";
  out << "beam = " << config.beam << "\n";
  out << "seed = " << config.seed << "\n";
  out << "precision = " << config.precision << "\n";
  return out.str();
}

}  // namespace ctxnmt
