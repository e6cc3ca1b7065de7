#include "ctxnmt/strategy.hpp"

#include "ctxnmt/error.hpp"

namespace ctxnmt {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kBaseline: return "baseline";
    case Strategy::kInitEnc: return "init-enc";
    case Strategy::kInitDec: return "init-dec";
    case Strategy::kInitBoth: return "init-both";
    case Strategy::kAux: return "aux";
    case Strategy::kGatedAux: return "gated-aux";
    case Strategy::kInitBothGatedAux: return "init-both-gated-aux";
  }
  throw ContractError("strategy_name: unknown strategy value");
}

Strategy parse_strategy(const std::string& name) {
  for (Strategy s : kAllStrategies) {
    if (name == strategy_name(s)) return s;
  }
  throw ConfigError("unknown strategy '" + name + "'");
}

void StrategyConfig::validate() const {
  if (emb_dim == 0 || enc_hidden == 0 || dec_hidden == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (uses_context()) {
    if (ctx_dim == 0) throw ConfigError("ctx_dim must be positive when context is used");
    if (window == 0) {
      throw ConfigError("strategy '" + std::string(strategy_name(strategy)) +
                        "' needs a context window of at least 1");
    }
  }
  if (init_encoder() && ctx_dim != enc_hidden) {
    throw ConfigError("encoder initialization needs ctx_dim == enc_hidden (got " +
                      std::to_string(ctx_dim) + " vs " + std::to_string(enc_hidden) + ")");
  }
}

}  // namespace ctxnmt
