#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxnmt/error.hpp"
#include "ctxnmt/rng.hpp"
#include "ctxnmt/tensor.hpp"

namespace ctxnmt {

enum class Init {
  kZero,
  kUniform,     // uniform in [-0.08, 0.08]
  kOrthogonal,  // square matrices only; Gram-Schmidt on a Gaussian draw
};

// Owns every trainable tensor of a model, keyed by a unique name, together
// with a same-shaped gradient accumulator. Registration order is preserved
// and defines the serialization order, so models built the same way always
// produce byte-identical containers.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
  };

  explicit ParameterStore(std::uint64_t seed) : rng_(seed), seed_(seed) {}

  Tensor<T>& add(const std::string& name, std::vector<std::size_t> shape, Init init) {
    if (index_.count(name)) {
      throw ContractError("parameter '" + name + "' registered twice");
    }
    Entry e;
    e.name = name;
    e.value = Tensor<T>(shape);
    e.grad = Tensor<T>(std::move(shape));
    switch (init) {
      case Init::kZero:
        break;
      case Init::kUniform:
        for (T& v : e.value.data) v = static_cast<T>(rng_.uniform(-0.08, 0.08));
        break;
      case Init::kOrthogonal:
        init_orthogonal(e.value);
        break;
    }
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
    return entries_.back().value;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T>& value(const std::string& name) { return locate(name).value; }
  const Tensor<T>& value(const std::string& name) const { return locate(name).value; }
  Tensor<T>& grad(const std::string& name) { return locate(name).grad; }
  const Tensor<T>& grad(const std::string& name) const { return locate(name).grad; }

  std::size_t size() const { return entries_.size(); }
  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const Entry& e : entries_) n += e.value.size();
    return n;
  }

  void zero_grads() {
    for (Entry& e : entries_) e.grad.fill(T{});
  }

  // Euclidean norm over all gradients, accumulated in double.
  double grad_norm() const {
    double s = 0.0;
    for (const Entry& e : entries_) {
      for (T g : e.grad.data) {
        const double d = static_cast<double>(g);
        s += d * d;
      }
    }
    return std::sqrt(s);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  Entry& locate(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return entries_[it->second];
  }
  const Entry& locate(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return entries_[it->second];
  }

  // Modified Gram-Schmidt on the columns of a square Gaussian matrix. The
  // result has orthonormal columns (checked by tests rather than here).
  void init_orthogonal(Tensor<T>& m) {
    if (m.rank() != 2 || m.shape[0] != m.shape[1]) {
      throw ContractError("orthogonal init needs a square matrix, got " +
                          shape_string(m.shape));
    }
    const std::size_t n = m.shape[0];
    std::vector<double> a(n * n);
    for (double& v : a) v = rng_.gaussian();
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < j; ++k) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += a[i * n + k] * a[i * n + j];
        for (std::size_t i = 0; i < n; ++i) a[i * n + j] -= dot * a[i * n + k];
      }
      double norm = 0.0;
      for (std::size_t i = 0; i < n; ++i) norm += a[i * n + j] * a[i * n + j];
      norm = std::sqrt(norm);
      if (norm < 1e-12) {
        throw NumericError("orthogonal init: degenerate column " + std::to_string(j));
      }
      for (std::size_t i = 0; i < n; ++i) a[i * n + j] /= norm;
    }
    for (std::size_t i = 0; i < n * n; ++i) m.data[i] = static_cast<T>(a[i]);
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  Rng rng_;
  std::uint64_t seed_;
};

}  // namespace ctxnmt
