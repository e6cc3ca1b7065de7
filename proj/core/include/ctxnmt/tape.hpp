#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctxnmt/error.hpp"
#include "ctxnmt/param_store.hpp"
#include "ctxnmt/tensor.hpp"

namespace ctxnmt {

// Handle to a value on a Tape. Only meaningful for the tape that issued it.
struct TapeVal {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Dynamic reverse-mode tape. Every operation appends a node holding the
// forward value and a closure that scatters the node's gradient into its
// inputs. backward() runs the closures in reverse creation order and then
// adds parameter gradients into the owning ParameterStore, so calling it
// twice doubles the accumulated gradients. The tape is intended to be built,
// differentiated and discarded per example or batch.
//
// Forward results and backward gradients are checked for NaN/Inf as they are
// produced; a failure names the operation and node index.
template <typename T>
class Tape {
 public:
  explicit Tape(bool grads_enabled = true) : grads_enabled_(grads_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t node_count() const { return nodes_.size(); }

  const Tensor<T>& value(TapeVal v) const { return node(v).value; }

  // Gradient of the most recent backward() pass w.r.t. any node. Zero-shaped
  // tensors mean the node did not participate.
  const Tensor<T>& grad_of(TapeVal v) const { return node(v).grad; }

  // --- graph construction -------------------------------------------------

  TapeVal leaf(Tensor<T> value, bool requires_grad = false) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = grads_enabled_ && requires_grad;
    n.op = "leaf";
    return push(std::move(n));
  }

  TapeVal zeros(std::vector<std::size_t> shape) { return leaf(Tensor<T>(std::move(shape))); }

  // Tracked view of a stored parameter. Repeated requests for the same name
  // return the same node.
  TapeVal param(ParameterStore<T>& store, const std::string& name) {
    if (store_ != nullptr && store_ != &store) {
      throw ContractError("tape already bound to a different parameter store");
    }
    store_ = &store;
    auto it = param_vals_.find(name);
    if (it != param_vals_.end()) return it->second;
    Node n;
    n.value = store.value(name);  // copy; the store stays the optimizer's master
    n.requires_grad = grads_enabled_;
    n.op = "param";
    n.param_name = name;
    TapeVal v = push(std::move(n));
    param_vals_[name] = v;
    return v;
  }

  // C[m x n] = A[m x k] * B[k x n]
  TapeVal matmul(TapeVal a, TapeVal b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0]) {
      throw ShapeError("matmul: incompatible shapes " + shape_string(A.shape) +
                       " and " + shape_string(B.shape));
    }
    const std::size_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
    Tensor<T> out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const T aip = A.data[i * k + p];
        for (std::size_t j = 0; j < n; ++j) {
          out.data[i * n + j] += aip * B.data[p * n + j];
        }
      }
    }
    return push_op("matmul", std::move(out), {a, b}, [this, a, b, m, k, n](Node& nd) {
      const Tensor<T>& A = value(a);
      const Tensor<T>& B = value(b);
      if (wants_grad(a)) {
        Tensor<T>& ga = grad_ref(a);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            T s{};
            for (std::size_t j = 0; j < n; ++j) {
              s += nd.grad.data[i * n + j] * B.data[p * n + j];
            }
            ga.data[i * k + p] += s;
          }
        }
      }
      if (wants_grad(b)) {
        Tensor<T>& gb = grad_ref(b);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const T aip = A.data[i * k + p];
            for (std::size_t j = 0; j < n; ++j) {
              gb.data[p * n + j] += aip * nd.grad.data[i * n + j];
            }
          }
        }
      }
    });
  }

  TapeVal add(TapeVal a, TapeVal b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    require_same_shape("add", A, B);
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
    return push_op("add", std::move(out), {a, b}, [this, a, b](Node& nd) {
      accumulate_same(a, nd.grad);
      accumulate_same(b, nd.grad);
    });
  }

  // a[B x d] + row vector b[d]; b is added to every row.
  TapeVal add_broadcast(TapeVal a, TapeVal b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    if (A.rank() != 2 || B.rows() != 1 || B.cols() != A.shape[1]) {
      throw ShapeError("add_broadcast: incompatible shapes " + shape_string(A.shape) +
                       " and " + shape_string(B.shape));
    }
    const std::size_t rows = A.shape[0], d = A.shape[1];
    Tensor<T> out = A;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < d; ++c) out.data[r * d + c] += B.data[c];
    }
    return push_op("add_broadcast", std::move(out), {a, b}, [this, a, b, rows, d](Node& nd) {
      if (wants_grad(a)) accumulate_same(a, nd.grad);
      if (wants_grad(b)) {
        Tensor<T>& gb = grad_ref(b);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < d; ++c) gb.data[c] += nd.grad.data[r * d + c];
        }
      }
    });
  }

  TapeVal sub(TapeVal a, TapeVal b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    require_same_shape("sub", A, B);
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= B.data[i];
    return push_op("sub", std::move(out), {a, b}, [this, a, b](Node& nd) {
      accumulate_same(a, nd.grad);
      if (wants_grad(b)) {
        Tensor<T>& gb = grad_ref(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] -= nd.grad.data[i];
      }
    });
  }

  // Elementwise product of same-shaped tensors.
  TapeVal mul(TapeVal a, TapeVal b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    require_same_shape("mul", A, B);
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= B.data[i];
    return push_op("mul", std::move(out), {a, b}, [this, a, b](Node& nd) {
      const Tensor<T>& A = value(a);
      const Tensor<T>& B = value(b);
      if (wants_grad(a)) {
        Tensor<T>& ga = grad_ref(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += nd.grad.data[i] * B.data[i];
      }
      if (wants_grad(b)) {
        Tensor<T>& gb = grad_ref(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += nd.grad.data[i] * A.data[i];
      }
    });
  }

  // Rows of a[B x d] scaled by per-row factors m[B] (or [B x 1]).
  TapeVal scale_rows(TapeVal a, TapeVal m) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& M = value(m);
    if (A.rank() != 2 || M.size() != A.shape[0]) {
      throw ShapeError("scale_rows: incompatible shapes " + shape_string(A.shape) +
                       " and " + shape_string(M.shape));
    }
    const std::size_t rows = A.shape[0], d = A.shape[1];
    Tensor<T> out = A;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < d; ++c) out.data[r * d + c] *= M.data[r];
    }
    return push_op("scale_rows", std::move(out), {a, m}, [this, a, m, rows, d](Node& nd) {
      const Tensor<T>& A = value(a);
      const Tensor<T>& M = value(m);
      if (wants_grad(a)) {
        Tensor<T>& ga = grad_ref(a);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < d; ++c) ga.data[r * d + c] += nd.grad.data[r * d + c] * M.data[r];
        }
      }
      if (wants_grad(m)) {
        Tensor<T>& gm = grad_ref(m);
        for (std::size_t r = 0; r < rows; ++r) {
          T s{};
          for (std::size_t c = 0; c < d; ++c) s += nd.grad.data[r * d + c] * A.data[r * d + c];
          gm.data[r] += s;
        }
      }
    });
  }

  TapeVal scale(TapeVal a, T factor) {
    Tensor<T> out = value(a);
    for (T& v : out.data) v *= factor;
    return push_op("scale", std::move(out), {a}, [this, a, factor](Node& nd) {
      if (!wants_grad(a)) return;
      Tensor<T>& ga = grad_ref(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += nd.grad.data[i] * factor;
    });
  }

  TapeVal one_minus(TapeVal a) {
    Tensor<T> out = value(a);
    for (T& v : out.data) v = T(1) - v;
    return push_op("one_minus", std::move(out), {a}, [this, a](Node& nd) {
      if (!wants_grad(a)) return;
      Tensor<T>& ga = grad_ref(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] -= nd.grad.data[i];
    });
  }

  TapeVal sigmoid(TapeVal a) {
    Tensor<T> out = value(a);
    for (T& v : out.data) {
      const T x = v;
      if (x >= T(0)) {
        v = T(1) / (T(1) + std::exp(-x));
      } else {
        const T e = std::exp(x);
        v = e / (T(1) + e);
      }
    }
    TapeVal r = push_op("sigmoid", std::move(out), {a}, [this, a](Node& nd) {
      if (!wants_grad(a)) return;
      Tensor<T>& ga = grad_ref(a);
      for (std::size_t i = 0; i < ga.size(); ++i) {
        const T y = nd.value.data[i];
        ga.data[i] += nd.grad.data[i] * y * (T(1) - y);
      }
    });
    return r;
  }

  TapeVal tanh_act(TapeVal a) {
    Tensor<T> out = value(a);
    for (T& v : out.data) v = std::tanh(v);
    return push_op("tanh", std::move(out), {a}, [this, a](Node& nd) {
      if (!wants_grad(a)) return;
      Tensor<T>& ga = grad_ref(a);
      for (std::size_t i = 0; i < ga.size(); ++i) {
        const T y = nd.value.data[i];
        ga.data[i] += nd.grad.data[i] * (T(1) - y * y);
      }
    });
  }

  // Horizontal concatenation of rank-2 pieces with a common row count.
  TapeVal concat_cols(const std::vector<TapeVal>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const std::size_t rows = value(parts[0]).rows();
    std::size_t total = 0;
    for (TapeVal p : parts) {
      const Tensor<T>& t = value(p);
      if (t.rank() != 2 || t.shape[0] != rows) {
        throw ShapeError("concat_cols: row mismatch, first is " +
                         shape_string(value(parts[0]).shape) + ", got " +
                         shape_string(t.shape));
      }
      total += t.shape[1];
    }
    Tensor<T> out({rows, total});
    std::size_t off = 0;
    for (TapeVal p : parts) {
      const Tensor<T>& t = value(p);
      const std::size_t d = t.shape[1];
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) out.data[r * total + off + c] = t.data[r * d + c];
      }
      off += d;
    }
    return push_op("concat_cols", std::move(out), parts, [this, parts, rows, total](Node& nd) {
      std::size_t off = 0;
      for (TapeVal p : parts) {
        const std::size_t d = value(p).shape[1];
        if (wants_grad(p)) {
          Tensor<T>& gp = grad_ref(p);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < d; ++c) gp.data[r * d + c] += nd.grad.data[r * total + off + c];
          }
        }
        off += d;
      }
    });
  }

  // Gathers rows of an embedding table: out[b] = table[ids[b]].
  TapeVal rows_lookup(TapeVal table, const std::vector<int>& ids) {
    const Tensor<T>& Tb = value(table);
    if (Tb.rank() != 2) {
      throw ShapeError("rows_lookup: table must be rank 2, got " + shape_string(Tb.shape));
    }
    const std::size_t rows = Tb.shape[0], d = Tb.shape[1];
    Tensor<T> out({ids.size(), d});
    for (std::size_t b = 0; b < ids.size(); ++b) {
      const int id = ids[b];
      if (id < 0 || static_cast<std::size_t>(id) >= rows) {
        throw ContractError("rows_lookup: token id " + std::to_string(id) +
                            " outside table of " + std::to_string(rows) + " rows");
      }
      for (std::size_t c = 0; c < d; ++c) out.data[b * d + c] = Tb.data[static_cast<std::size_t>(id) * d + c];
    }
    return push_op("rows_lookup", std::move(out), {table}, [this, table, ids, d](Node& nd) {
      if (!wants_grad(table)) return;
      Tensor<T>& gt = grad_ref(table);
      for (std::size_t b = 0; b < ids.size(); ++b) {
        const std::size_t row = static_cast<std::size_t>(ids[b]);
        for (std::size_t c = 0; c < d; ++c) gt.data[row * d + c] += nd.grad.data[b * d + c];
      }
    });
  }

  // Per-row gather across time steps: out[b] = value(steps[idx[b]])[b].
  // All steps must be [B x d] with B == idx.size().
  TapeVal select_time(const std::vector<TapeVal>& steps, const std::vector<std::size_t>& idx) {
    if (steps.empty()) throw ContractError("select_time: no steps");
    const Tensor<T>& first = value(steps[0]);
    if (first.rank() != 2 || first.shape[0] != idx.size()) {
      throw ShapeError("select_time: steps are " + shape_string(first.shape) + " but " +
                       std::to_string(idx.size()) + " rows were requested");
    }
    const std::size_t B = idx.size(), d = first.shape[1];
    for (TapeVal s : steps) {
      if (!value(s).same_shape(first)) {
        throw ShapeError("select_time: step shape mismatch " + shape_string(value(s).shape));
      }
    }
    Tensor<T> out({B, d});
    for (std::size_t b = 0; b < B; ++b) {
      if (idx[b] >= steps.size()) {
        throw ContractError("select_time: index " + std::to_string(idx[b]) +
                            " beyond " + std::to_string(steps.size()) + " steps");
      }
      const Tensor<T>& src = value(steps[idx[b]]);
      for (std::size_t c = 0; c < d; ++c) out.data[b * d + c] = src.data[b * d + c];
    }
    return push_op("select_time", std::move(out), steps, [this, steps, idx, d](Node& nd) {
      for (std::size_t b = 0; b < idx.size(); ++b) {
        TapeVal s = steps[idx[b]];
        if (!wants_grad(s)) continue;
        Tensor<T>& gs = grad_ref(s);
        for (std::size_t c = 0; c < d; ++c) gs.data[b * d + c] += nd.grad.data[b * d + c];
      }
    });
  }

  // Row-wise softmax with max subtraction.
  TapeVal softmax_rows(TapeVal a) {
    const Tensor<T>& A = value(a);
    if (A.rank() != 2) {
      throw ShapeError("softmax_rows: need rank 2, got " + shape_string(A.shape));
    }
    const std::size_t rows = A.shape[0], n = A.shape[1];
    Tensor<T> out = A;
    for (std::size_t r = 0; r < rows; ++r) {
      T m = out.data[r * n];
      for (std::size_t c = 1; c < n; ++c) m = std::max(m, out.data[r * n + c]);
      T sum{};
      for (std::size_t c = 0; c < n; ++c) {
        const T e = std::exp(out.data[r * n + c] - m);
        out.data[r * n + c] = e;
        sum += e;
      }
      for (std::size_t c = 0; c < n; ++c) out.data[r * n + c] /= sum;
    }
    return push_op("softmax_rows", std::move(out), {a}, [this, a, rows, n](Node& nd) {
      if (!wants_grad(a)) return;
      Tensor<T>& ga = grad_ref(a);
      for (std::size_t r = 0; r < rows; ++r) {
        T dot{};
        for (std::size_t c = 0; c < n; ++c) dot += nd.grad.data[r * n + c] * nd.value.data[r * n + c];
        for (std::size_t c = 0; c < n; ++c) {
          ga.data[r * n + c] += nd.value.data[r * n + c] * (nd.grad.data[r * n + c] - dot);
        }
      }
    });
  }

  // Weighted sum of per-step annotations: out[b] = sum_j w[b,j] * ann_j[rb]
  // where rb = b when annotations are batched and 0 when they carry a single
  // row shared by the whole batch (used when one encoded sentence feeds
  // several decoding hypotheses).
  TapeVal attention_mix(TapeVal weights, const std::vector<TapeVal>& annotations) {
    const Tensor<T>& W = value(weights);
    if (W.rank() != 2) {
      throw ShapeError("attention_mix: weights must be rank 2, got " + shape_string(W.shape));
    }
    const std::size_t B = W.shape[0], N = W.shape[1];
    if (annotations.size() != N) {
      throw ShapeError("attention_mix: " + std::to_string(N) + " weights vs " +
                       std::to_string(annotations.size()) + " annotations");
    }
    const std::size_t ab = value(annotations[0]).rows();
    const std::size_t d = value(annotations[0]).cols();
    if (ab != B && ab != 1) {
      throw ShapeError("attention_mix: annotation rows " + std::to_string(ab) +
                       " incompatible with batch " + std::to_string(B));
    }
    for (TapeVal a : annotations) {
      if (value(a).rows() != ab || value(a).cols() != d) {
        throw ShapeError("attention_mix: annotation shape mismatch " +
                         shape_string(value(a).shape));
      }
    }
    Tensor<T> out({B, d});
    for (std::size_t j = 0; j < N; ++j) {
      const Tensor<T>& A = value(annotations[j]);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t rb = (ab == 1) ? 0 : b;
        const T w = W.data[b * N + j];
        for (std::size_t c = 0; c < d; ++c) out.data[b * d + c] += w * A.data[rb * d + c];
      }
    }
    std::vector<TapeVal> ins = annotations;
    ins.push_back(weights);
    return push_op("attention_mix", std::move(out), ins,
                   [this, weights, annotations, B, N, d, ab](Node& nd) {
      const Tensor<T>& W = value(weights);
      for (std::size_t j = 0; j < N; ++j) {
        const Tensor<T>& A = value(annotations[j]);
        const bool want_a = wants_grad(annotations[j]);
        const bool want_w = wants_grad(weights);
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t rb = (ab == 1) ? 0 : b;
          if (want_w) {
            T s{};
            for (std::size_t c = 0; c < d; ++c) s += nd.grad.data[b * d + c] * A.data[rb * d + c];
            grad_ref(weights).data[b * N + j] += s;
          }
          if (want_a) {
            Tensor<T>& ga = grad_ref(annotations[j]);
            const T w = W.data[b * N + j];
            for (std::size_t c = 0; c < d; ++c) ga.data[rb * d + c] += w * nd.grad.data[b * d + c];
          }
        }
      }
    });
  }

  TapeVal sum_all(TapeVal a) {
    const Tensor<T>& A = value(a);
    T s{};
    for (T v : A.data) s += v;
    return push_op("sum_all", Tensor<T>::scalar(s), {a}, [this, a](Node& nd) {
      if (!wants_grad(a)) return;
      Tensor<T>& ga = grad_ref(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += nd.grad.data[0];
    });
  }

  // Masked negative log-likelihood of target ids under row-wise softmax of
  // the logits, summed over the batch: sum_b mask[b] * (lse_b - x[b,t_b]).
  // The fused form keeps the log-softmax numerically stable.
  TapeVal pick_nll(TapeVal logits, const std::vector<int>& targets, const std::vector<T>& mask) {
    const Tensor<T>& X = value(logits);
    if (X.rank() != 2 || targets.size() != X.shape[0] || mask.size() != X.shape[0]) {
      throw ShapeError("pick_nll: logits " + shape_string(X.shape) + " vs " +
                       std::to_string(targets.size()) + " targets, " +
                       std::to_string(mask.size()) + " mask entries");
    }
    const std::size_t B = X.shape[0], V = X.shape[1];
    Tensor<T> probs({B, V});
    T total{};
    for (std::size_t b = 0; b < B; ++b) {
      const int t = targets[b];
      if (t < 0 || static_cast<std::size_t>(t) >= V) {
        throw ContractError("pick_nll: target id " + std::to_string(t) +
                            " outside vocabulary of " + std::to_string(V));
      }
      T m = X.data[b * V];
      for (std::size_t c = 1; c < V; ++c) m = std::max(m, X.data[b * V + c]);
      T sum{};
      for (std::size_t c = 0; c < V; ++c) {
        const T e = std::exp(X.data[b * V + c] - m);
        probs.data[b * V + c] = e;
        sum += e;
      }
      for (std::size_t c = 0; c < V; ++c) probs.data[b * V + c] /= sum;
      const T lse = m + std::log(sum);
      total += mask[b] * (lse - X.data[b * V + static_cast<std::size_t>(t)]);
    }
    return push_op("pick_nll", Tensor<T>::scalar(total), {logits},
                   [this, logits, targets, mask, probs, B, V](Node& nd) {
      if (!wants_grad(logits)) return;
      Tensor<T>& gx = grad_ref(logits);
      const T g0 = nd.grad.data[0];
      for (std::size_t b = 0; b < B; ++b) {
        const T coef = g0 * mask[b];
        if (coef == T(0)) continue;
        for (std::size_t c = 0; c < V; ++c) gx.data[b * V + c] += coef * probs.data[b * V + c];
        gx.data[b * V + static_cast<std::size_t>(targets[b])] -= coef;
      }
    });
  }

  // --- differentiation ----------------------------------------------------

  // Reverse sweep from a scalar loss. Parameter gradients are added into the
  // bound ParameterStore; zeroing them between steps is the caller's job.
  void backward(TapeVal loss) {
    const Tensor<T>& L = value(loss);
    if (L.size() != 1) {
      throw ContractError("backward: loss must be scalar, got " + shape_string(L.shape));
    }
    Node& ln = node(loss);
    if (!ln.requires_grad) return;  // loss independent of any tracked value

    std::vector<char> needed(nodes_.size(), 0);
    needed[static_cast<std::size_t>(loss.id)] = 1;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (!needed[i]) continue;
      for (int in : nodes_[i].inputs) {
        if (nodes_[static_cast<std::size_t>(in)].requires_grad) needed[static_cast<std::size_t>(in)] = 1;
      }
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (needed[i]) {
        nodes_[i].grad = Tensor<T>(nodes_[i].value.shape);
      } else {
        nodes_[i].grad = Tensor<T>();
      }
    }
    node(loss).grad.data[0] = T(1);

    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (!needed[i] || !n.backward) continue;
      if (!n.grad.all_finite()) {
        throw NumericError("non-finite gradient at op '" + std::string(n.op) +
                           "' (node " + std::to_string(i) + ")");
      }
      n.backward(n);
    }

    if (store_ != nullptr) {
      for (const auto& [name, val] : param_vals_) {
        const Node& pn = node(val);
        if (pn.grad.size() == 0) continue;
        Tensor<T>& g = store_->grad(name);
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += pn.grad.data[i];
      }
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<int> inputs;
    std::function<void(Node&)> backward;
    const char* op = "leaf";
    std::string param_name;
    bool requires_grad = false;
  };

  Node& node(TapeVal v) {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw ContractError("invalid tape handle");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& node(TapeVal v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw ContractError("invalid tape handle");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  bool wants_grad(TapeVal v) const { return node(v).requires_grad; }

  static void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) {
      throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape) +
                       " vs " + shape_string(b.shape));
    }
  }

  Tensor<T>& grad_ref(TapeVal v) { return node(v).grad; }

  void accumulate_same(TapeVal v, const Tensor<T>& g) {
    if (!wants_grad(v)) return;
    Tensor<T>& dst = grad_ref(v);
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += g.data[i];
  }

  TapeVal push(Node n) {
    nodes_.push_back(std::move(n));
    return TapeVal{static_cast<int>(nodes_.size() - 1)};
  }

  TapeVal push_op(const char* op, Tensor<T> out, const std::vector<TapeVal>& inputs,
                  std::function<void(Node&)> back) {
    if (!out.all_finite()) {
      throw NumericError("non-finite value from op '" + std::string(op) + "' (node " +
                         std::to_string(nodes_.size()) + ")");
    }
    Node n;
    n.value = std::move(out);
    n.op = op;
    bool req = false;
    n.inputs.reserve(inputs.size());
    for (TapeVal v : inputs) {
      n.inputs.push_back(v.id);
      req = req || wants_grad(v);
    }
    n.requires_grad = grads_enabled_ && req;
    if (n.requires_grad) n.backward = std::move(back);
    return push(std::move(n));
  }

  std::deque<Node> nodes_;  // deque: node references stay valid as the graph grows
  std::unordered_map<std::string, TapeVal> param_vals_;
  ParameterStore<T>* store_ = nullptr;
  bool grads_enabled_ = true;
};

}  // namespace ctxnmt
