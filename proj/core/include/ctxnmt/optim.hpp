#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ctxnmt/error.hpp"
#include "ctxnmt/param_store.hpp"

namespace ctxnmt {

// Adam with global gradient-norm clipping. step() consumes the gradients
// accumulated in the store (clip, update, zero), so one optimizer step
// pairs with one or more backward() calls.
template <typename T>
class AdamOptimizer {
 public:
  AdamOptimizer(double learning_rate, double clip_norm, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8)
      : lr_(learning_rate), clip_(clip_norm), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
    if (!(lr_ > 0.0)) throw ConfigError("Adam: learning rate must be positive");
    if (!(clip_ > 0.0)) throw ConfigError("Adam: clip norm must be positive");
    if (!(beta1_ >= 0.0 && beta1_ < 1.0) || !(beta2_ >= 0.0 && beta2_ < 1.0)) {
      throw ConfigError("Adam: betas must lie in [0, 1)");
    }
  }

  // Scales all gradients so the global norm is at most clip_norm.
  // Exposed separately so tests can check the clipped norm.
  static void clip_gradients(ParameterStore<T>& store, double clip_norm) {
    const double norm = store.grad_norm();
    if (norm <= clip_norm || norm == 0.0) return;
    const T factor = static_cast<T>(clip_norm / norm);
    for (std::size_t i = 0; i < store.size(); ++i) {
      for (T& g : store.entry(i).grad.data) g *= factor;
    }
  }

  void step(ParameterStore<T>& store) {
    if (m_.empty()) {
      m_.reserve(store.size());
      v_.reserve(store.size());
      for (std::size_t i = 0; i < store.size(); ++i) {
        m_.push_back(Tensor<T>(store.entry(i).value.shape));
        v_.push_back(Tensor<T>(store.entry(i).value.shape));
      }
    } else if (m_.size() != store.size()) {
      throw ContractError("Adam: parameter count changed between steps");
    }
    clip_gradients(store, clip_);
    ++t_;
    const T c1 = static_cast<T>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
    const T c2 = static_cast<T>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T lr = static_cast<T>(lr_), eps = static_cast<T>(eps_);
    for (std::size_t i = 0; i < store.size(); ++i) {
      auto& entry = store.entry(i);
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      for (std::size_t j = 0; j < entry.value.size(); ++j) {
        const T g = entry.grad.data[j];
        m.data[j] = b1 * m.data[j] + (T(1) - b1) * g;
        v.data[j] = b2 * v.data[j] + (T(1) - b2) * g * g;
        const T mhat = m.data[j] / c1;
        const T vhat = v.data[j] / c2;
        entry.value.data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
    store.zero_grads();
  }

  std::int64_t steps() const { return t_; }

 private:
  double lr_, clip_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace ctxnmt
