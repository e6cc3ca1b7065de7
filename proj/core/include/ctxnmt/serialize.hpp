#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ctxnmt/error.hpp"
#include "ctxnmt/model.hpp"
#include "ctxnmt/strategy.hpp"

namespace ctxnmt {

// Model container layout:
//   8-byte magic "CTXNMT01"
//   u64 LE metadata byte count, then that many bytes of key=value lines
//   per parameter, in store registration order:
//     u64 LE name length, name bytes,
//     u64 LE rank, u64 LE extent per axis,
//     row-major IEEE-754 32-bit LE values
// No trailing bytes. Values round-trip losslessly at 32-bit precision.

inline constexpr char kModelMagic[8] = {'C', 'T', 'X', 'N', 'M', 'T', '0', '1'};

struct ModelMeta {
  ModelConfig config;
  unsigned long long seed = 0;
  std::string src_vocab_hash;
  std::string tgt_vocab_hash;
};

namespace detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  static_assert(sizeof bits == sizeof v);
  __builtin_memcpy(&bits, &v, sizeof bits);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

class ContainerReader {
 public:
  ContainerReader(std::istream& in, const std::string& path) : in_(in), path_(path) {}

  std::uint64_t offset() const { return offset_; }

  void bytes(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw ParseError("model file '" + path_ + "' is truncated at byte offset " +
                       std::to_string(offset_ + static_cast<std::uint64_t>(in_.gcount())) +
                       " while reading " + what);
    }
    offset_ += n;
  }

  std::uint64_t u64(const char* what) {
    unsigned char b[8];
    bytes(b, 8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  float f32(const char* what) {
    unsigned char b[4];
    bytes(b, 4, what);
    std::uint32_t bits = 0;
    for (int i = 3; i >= 0; --i) bits = (bits << 8) | b[i];
    float v;
    __builtin_memcpy(&v, &bits, sizeof v);
    return v;
  }

  bool at_end() {
    return in_.peek() == std::char_traits<char>::eof();
  }

 private:
  std::istream& in_;
  std::string path_;
  std::uint64_t offset_ = 0;
};

inline std::map<std::string, std::string> parse_meta(const std::string& text,
                                                     const std::string& path) {
  std::map<std::string, std::string> kv;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("model file '" + path + "': malformed metadata line '" + line + "'");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline const std::string& meta_get(const std::map<std::string, std::string>& kv,
                                   const std::string& key, const std::string& path) {
  auto it = kv.find(key);
  if (it == kv.end()) {
    throw ParseError("model file '" + path + "': metadata is missing '" + key + "'");
  }
  return it->second;
}

inline std::uint64_t meta_u64(const std::map<std::string, std::string>& kv,
                              const std::string& key, const std::string& path) {
  const std::string& s = meta_get(kv, key, path);
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("model file '" + path + "': metadata '" + key + "' is not a number: '" +
                     s + "'");
  }
}

}  // namespace detail

template <typename T>
void save_model(const std::string& path, const TranslationModel<T>& model,
                const std::string& src_vocab_hash, const std::string& tgt_vocab_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file '" + path + "'");
  out.write(kModelMagic, sizeof kModelMagic);

  const ModelConfig& cfg = model.config();
  std::string meta;
  auto put = [&meta](const std::string& k, const std::string& v) {
    meta += k;
    meta += '=';
    meta += v;
    meta += '\n';
  };
  put("strategy", strategy_name(cfg.strategy.strategy));
  put("window", std::to_string(cfg.strategy.window));
  put("emb_dim", std::to_string(cfg.strategy.emb_dim));
  put("enc_hidden", std::to_string(cfg.strategy.enc_hidden));
  put("dec_hidden", std::to_string(cfg.strategy.dec_hidden));
  put("ctx_dim", std::to_string(cfg.strategy.ctx_dim));
  put("attn_dim", std::to_string(cfg.attention_dim()));
  put("readout_dim", std::to_string(cfg.readout_width()));
  put("max_len", std::to_string(cfg.max_len));
  put("src_vocab", std::to_string(cfg.src_vocab));
  put("tgt_vocab", std::to_string(cfg.tgt_vocab));
  put("seed", std::to_string(model.seed()));
  put("src_vocab_hash", src_vocab_hash);
  put("tgt_vocab_hash", tgt_vocab_hash);
  detail::write_u64(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));

  const ParameterStore<T>& store = model.store();
  for (std::size_t e = 0; e < store.size(); ++e) {
    const auto& entry = store.entry(e);
    detail::write_u64(out, entry.name.size());
    out.write(entry.name.data(), static_cast<std::streamsize>(entry.name.size()));
    detail::write_u64(out, entry.value.rank());
    for (std::size_t extent : entry.value.shape) detail::write_u64(out, extent);
    for (T v : entry.value.data) detail::write_f32(out, static_cast<float>(v));
  }
  if (!out) throw IoError("failed while writing model file '" + path + "'");
}

template <typename T>
struct LoadedModel {
  TranslationModel<T> model;
  ModelMeta meta;
};

template <typename T>
LoadedModel<T> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read model file '" + path + "'");
  detail::ContainerReader r(in, path);

  char magic[8];
  r.bytes(magic, sizeof magic, "magic");
  for (std::size_t i = 0; i < sizeof magic; ++i) {
    if (magic[i] != kModelMagic[i]) {
      throw ParseError("model file '" + path + "' has a bad magic header");
    }
  }

  const std::uint64_t meta_len = r.u64("metadata length");
  std::string meta_text(meta_len, '\0');
  r.bytes(meta_text.data(), meta_len, "metadata block");
  const auto kv = detail::parse_meta(meta_text, path);

  ModelMeta meta;
  meta.config.strategy.strategy = parse_strategy(detail::meta_get(kv, "strategy", path));
  meta.config.strategy.window = detail::meta_u64(kv, "window", path);
  meta.config.strategy.emb_dim = detail::meta_u64(kv, "emb_dim", path);
  meta.config.strategy.enc_hidden = detail::meta_u64(kv, "enc_hidden", path);
  meta.config.strategy.dec_hidden = detail::meta_u64(kv, "dec_hidden", path);
  meta.config.strategy.ctx_dim = detail::meta_u64(kv, "ctx_dim", path);
  meta.config.attn_dim = detail::meta_u64(kv, "attn_dim", path);
  meta.config.readout_dim = detail::meta_u64(kv, "readout_dim", path);
  meta.config.max_len = detail::meta_u64(kv, "max_len", path);
  meta.config.src_vocab = detail::meta_u64(kv, "src_vocab", path);
  meta.config.tgt_vocab = detail::meta_u64(kv, "tgt_vocab", path);
  meta.seed = detail::meta_u64(kv, "seed", path);
  meta.src_vocab_hash = detail::meta_get(kv, "src_vocab_hash", path);
  meta.tgt_vocab_hash = detail::meta_get(kv, "tgt_vocab_hash", path);

  LoadedModel<T> loaded{TranslationModel<T>(meta.config, meta.seed), meta};
  ParameterStore<T>& store = loaded.model.store();
  for (std::size_t e = 0; e < store.size(); ++e) {
    auto& entry = store.entry(e);
    const std::uint64_t name_len = r.u64("parameter name length");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "parameter name");
    if (name != entry.name) {
      throw ParseError("model file '" + path + "': expected parameter '" + entry.name +
                       "' but found '" + name + "'");
    }
    const std::uint64_t rank = r.u64("parameter rank");
    if (rank != entry.value.rank()) {
      throw ParseError("model file '" + path + "': parameter '" + name + "' has rank " +
                       std::to_string(rank) + ", expected " +
                       std::to_string(entry.value.rank()));
    }
    for (std::size_t a = 0; a < rank; ++a) {
      const std::uint64_t extent = r.u64("parameter extent");
      if (extent != entry.value.shape[a]) {
        throw ParseError("model file '" + path + "': parameter '" + name +
                         "' extent mismatch on axis " + std::to_string(a));
      }
    }
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      entry.value.data[i] = static_cast<T>(r.f32("parameter values"));
    }
  }
  if (!r.at_end()) {
    throw ParseError("model file '" + path + "' has trailing bytes at offset " +
                     std::to_string(r.offset()));
  }
  return loaded;
}

}  // namespace ctxnmt
