#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "ctxnmt/param_store.hpp"
#include "ctxnmt/tape.hpp"

namespace ctxnmt {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;    // "name[i]" of the worst element
  std::size_t checked = 0;    // number of scalar parameters compared
};

// Compares tape gradients against central finite differences for every
// scalar in the store. `build_loss` must construct the same scalar loss on
// any tape it is handed; it is re-run twice per parameter element with that
// element nudged by +/-epsilon.
//
// The relative error of element x is |a - n| / max(|a| + |n|, 1e-4). The
// floor makes the comparison absolute for tiny gradients: a finite
// difference of a loss of size ~10 in double carries roundoff noise around
// 1e-10, so gradients below the floor are checked to that absolute level
// rather than to a meaningless ratio.
template <typename T>
GradCheckReport check_gradients(ParameterStore<T>& store,
                                const std::function<TapeVal(Tape<T>&)>& build_loss,
                                double epsilon = 1e-5) {
  static_assert(sizeof(T) >= 8, "finite differences need double precision");

  store.zero_grads();
  {
    Tape<T> tape(true);
    TapeVal loss = build_loss(tape);
    tape.backward(loss);
  }

  auto eval = [&]() -> double {
    Tape<T> tape(false);
    TapeVal loss = build_loss(tape);
    return static_cast<double>(tape.value(loss).data[0]);
  };

  GradCheckReport report;
  for (std::size_t e = 0; e < store.size(); ++e) {
    auto& entry = store.entry(e);
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      const T saved = entry.value.data[i];
      entry.value.data[i] = saved + static_cast<T>(epsilon);
      const double up = eval();
      entry.value.data[i] = saved - static_cast<T>(epsilon);
      const double down = eval();
      entry.value.data[i] = saved;

      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = static_cast<double>(entry.grad.data[i]);
      const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-4);
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = entry.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  store.zero_grads();
  return report;
}

}  // namespace ctxnmt
