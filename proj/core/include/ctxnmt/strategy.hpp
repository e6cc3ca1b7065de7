#pragma once

#include <cstddef>
#include <string>

namespace ctxnmt {

// How the document context vector D enters the translation model.
//   kBaseline          no document context at all
//   kInitEnc           D initializes both encoder directions
//   kInitDec           D joins the decoder state initialization
//   kInitBoth          both of the above
//   kAux               D is appended to every decoder input
//   kGatedAux          as kAux, but D is scaled by a learned gate first
//   kInitBothGatedAux  kInitBoth and kGatedAux combined
enum class Strategy {
  kBaseline,
  kInitEnc,
  kInitDec,
  kInitBoth,
  kAux,
  kGatedAux,
  kInitBothGatedAux,
};

inline constexpr Strategy kAllStrategies[] = {
    Strategy::kBaseline, Strategy::kInitEnc,  Strategy::kInitDec,
    Strategy::kInitBoth, Strategy::kAux,      Strategy::kGatedAux,
    Strategy::kInitBothGatedAux,
};

const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);  // throws ConfigError

// Model dimensions plus the chosen integration strategy. ctx_dim is the
// width of the context summary D; strategies that initialize recurrent
// states with D require it to match the state width they feed.
struct StrategyConfig {
  Strategy strategy = Strategy::kBaseline;
  std::size_t window = 3;       // previous source sentences summarized into D
  std::size_t emb_dim = 600;
  std::size_t enc_hidden = 1000;
  std::size_t dec_hidden = 1000;
  std::size_t ctx_dim = 1000;

  bool uses_context() const { return strategy != Strategy::kBaseline; }
  bool init_encoder() const {
    return strategy == Strategy::kInitEnc || strategy == Strategy::kInitBoth ||
           strategy == Strategy::kInitBothGatedAux;
  }
  bool init_decoder() const {
    return strategy == Strategy::kInitDec || strategy == Strategy::kInitBoth ||
           strategy == Strategy::kInitBothGatedAux;
  }
  bool aux_context() const {
    return strategy == Strategy::kAux || strategy == Strategy::kGatedAux ||
           strategy == Strategy::kInitBothGatedAux;
  }
  bool gated() const {
    return strategy == Strategy::kGatedAux || strategy == Strategy::kInitBothGatedAux;
  }

  void validate() const;  // throws ConfigError on bad combinations
};

}  // namespace ctxnmt
