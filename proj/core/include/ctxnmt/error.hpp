#pragma once

#include <stdexcept>
#include <string>

namespace ctxnmt {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor dimension disagreement (names both shapes in the message).
struct ShapeError : Error {
  using Error::Error;
};

// API misuse: a precondition stated by a function contract was violated.
struct ContractError : Error {
  using Error::Error;
};

// NaN/Inf or other numeric breakdown during computation.
struct NumericError : Error {
  using Error::Error;
};

// Invalid configuration value or combination.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input file (corpus, vocabulary, config, answer key).
struct ParseError : Error {
  using Error::Error;
};

// Filesystem / serialization failure (missing file, corrupt model container).
struct IoError : Error {
  using Error::Error;
};

}  // namespace ctxnmt
