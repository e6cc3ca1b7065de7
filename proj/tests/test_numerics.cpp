#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ctxnmt/gradcheck.hpp"
#include "ctxnmt/optim.hpp"
#include "ctxnmt/param_store.hpp"
#include "ctxnmt/rng.hpp"
#include "ctxnmt/tape.hpp"
#include "ctxnmt/tensor.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ctxnmt;

// ---------------------------------------------------------------------------
// Independent oracles, written against the math rather than the tape code.
// ---------------------------------------------------------------------------

// Per-element inner-product loop. Each output element accumulates over k in
// increasing order, the same summation order the tape's matmul must use, so
// results are required to agree exactly, not just approximately.
template <typename T>
Tensor<T> matmul_oracle(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc{};
      for (std::size_t p = 0; p < k; ++p) acc += a.data[i * k + p] * b.data[p * n + j];
      out.data[i * n + j] = acc;
    }
  }
  return out;
}

// Plain log-sum-exp based NLL, computed without the tape.
static double nll_oracle(const Tensor<double>& logits, const std::vector<int>& targets,
                         const std::vector<double>& mask) {
  const std::size_t B = logits.shape[0], V = logits.shape[1];
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    double m = logits.data[b * V];
    for (std::size_t c = 1; c < V; ++c) m = std::max(m, logits.data[b * V + c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < V; ++c) sum += std::exp(logits.data[b * V + c] - m);
    total += mask[b] * (m + std::log(sum) - logits.data[b * V + targets[b]]);
  }
  return total;
}

// Runs a finite-difference comparison over every parameter in the store.
static void expect_grads_match(ParameterStore<double>& store,
                               const std::function<TapeVal(Tape<double>&)>& build,
                               double tolerance = 1e-6) {
  GradCheckReport report = check_gradients<double>(store, build, 1e-5);
  CAPTURE(report.worst_param);
  CHECK(report.checked > 0);
  CHECK(report.max_rel_error <= tolerance);
}

// ---------------------------------------------------------------------------

TEST_CASE("matmul matches hand-checked products") {
  Tape<float> tape;
  auto i2 = tape.leaf(Tensor<float>::from({2, 2}, {1, 0, 0, 1}));
  auto a = tape.leaf(Tensor<float>::from({2, 2}, {1, 2, 3, 4}));
  auto prod = tape.matmul(i2, a);
  CHECK(testutil::bitwise_equal(tape.value(prod), tape.value(a)));

  auto row = tape.leaf(Tensor<float>::from({1, 2}, {1, 2}));
  auto col = tape.leaf(Tensor<float>::from({2, 1}, {3, 4}));
  auto s = tape.matmul(row, col);
  CHECK(tape.value(s).data[0] == 11.0f);
}

TEST_CASE("matmul equals the per-element loop oracle exactly") {
  Rng rng(99);
  SUBCASE("float") {
    auto a = testutil::random_tensor<float>({3, 4}, rng);
    auto b = testutil::random_tensor<float>({4, 2}, rng);
    Tape<float> tape;
    auto r = tape.matmul(tape.leaf(a), tape.leaf(b));
    CHECK(testutil::bitwise_equal(tape.value(r), matmul_oracle(a, b)));
  }
  SUBCASE("double") {
    auto a = testutil::random_tensor<double>({3, 4}, rng);
    auto b = testutil::random_tensor<double>({4, 2}, rng);
    Tape<double> tape;
    auto r = tape.matmul(tape.leaf(a), tape.leaf(b));
    CHECK(testutil::bitwise_equal(tape.value(r), matmul_oracle(a, b)));
  }
}

TEST_CASE("matmul reports both shapes on a mismatch") {
  Tape<float> tape;
  auto a = tape.leaf(Tensor<float>({2, 3}));
  auto b = tape.leaf(Tensor<float>({2, 2}));
  try {
    tape.matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2 x 3]") != std::string::npos);
    CHECK(msg.find("[2 x 2]") != std::string::npos);
  }
}

TEST_CASE("gradient of a plain sum is all ones") {
  ParameterStore<double> store(1);
  store.add("W", {2, 3}, Init::kUniform);
  Tape<double> tape;
  tape.backward(tape.sum_all(tape.param(store, "W")));
  for (double g : store.grad("W").data) CHECK(g == 1.0);
}

TEST_CASE("gradient of sum of squares doubles the values") {
  ParameterStore<double> store(1);
  store.add("W", {1, 2}, Init::kZero);
  store.value("W").data = {1.0, 2.0};
  auto build = [&](Tape<double>& t) {
    auto w = t.param(store, "W");
    return t.sum_all(t.mul(w, w));
  };
  {
    Tape<double> tape;
    tape.backward(build(tape));
  }
  CHECK(store.grad("W").data[0] == 2.0);
  CHECK(store.grad("W").data[1] == 4.0);

  // A second backward pass without resetting accumulates.
  {
    Tape<double> tape;
    tape.backward(build(tape));
  }
  CHECK(store.grad("W").data[0] == 4.0);
  CHECK(store.grad("W").data[1] == 8.0);
}

TEST_CASE("backward rejects a non-scalar loss") {
  ParameterStore<double> store(1);
  store.add("W", {2, 2}, Init::kUniform);
  Tape<double> tape;
  auto w = tape.param(store, "W");
  CHECK_THROWS_AS(tape.backward(w), ContractError);
}

TEST_CASE("non-finite forward values name the offending op") {
  ParameterStore<float> store(1);
  store.add("W", {1, 2}, Init::kZero);
  store.value("W").data[0] = std::numeric_limits<float>::infinity();
  Tape<float> tape;
  auto w = tape.param(store, "W");
  try {
    tape.scale(w, 2.0f);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("scale") != std::string::npos);
  }
}

TEST_CASE("every op's backward matches finite differences") {
  Rng rng(7);
  auto fresh = [&](std::vector<std::size_t> shape) {
    return testutil::random_tensor<double>(std::move(shape), rng, -0.9, 0.9);
  };

  SUBCASE("add, sub, mul, scale, one_minus chain") {
    ParameterStore<double> store(3);
    store.add("A", {2, 3}, Init::kUniform);
    store.add("B", {2, 3}, Init::kUniform);
    expect_grads_match(store, [&](Tape<double>& t) {
      auto a = t.param(store, "A");
      auto b = t.param(store, "B");
      auto x = t.mul(t.add(a, b), t.sub(a, b));
      return t.sum_all(t.scale(t.one_minus(x), 1.7));
    });
  }

  SUBCASE("matmul with bias broadcast and tanh") {
    ParameterStore<double> store(4);
    store.add("X", {3, 2}, Init::kUniform);
    store.add("W", {2, 4}, Init::kUniform);
    store.add("b", {4}, Init::kUniform);
    expect_grads_match(store, [&](Tape<double>& t) {
      auto h = t.tanh_act(t.add_broadcast(t.matmul(t.param(store, "X"), t.param(store, "W")),
                                          t.param(store, "b")));
      return t.sum_all(h);
    });
  }

  SUBCASE("sigmoid") {
    ParameterStore<double> store(5);
    store.add("X", {2, 5}, Init::kUniform);
    expect_grads_match(store, [&](Tape<double>& t) {
      return t.sum_all(t.sigmoid(t.scale(t.param(store, "X"), 3.0)));
    });
  }

  SUBCASE("scale_rows") {
    ParameterStore<double> store(6);
    store.add("A", {3, 4}, Init::kUniform);
    store.add("m", {3}, Init::kUniform);
    expect_grads_match(store, [&](Tape<double>& t) {
      return t.sum_all(t.tanh_act(t.scale_rows(t.param(store, "A"), t.param(store, "m"))));
    });
  }

  SUBCASE("concat_cols") {
    ParameterStore<double> store(8);
    store.add("A", {2, 2}, Init::kUniform);
    store.add("B", {2, 3}, Init::kUniform);
    store.add("W", {5, 2}, Init::kUniform);
    expect_grads_match(store, [&](Tape<double>& t) {
      auto cat = t.concat_cols({t.param(store, "A"), t.param(store, "B")});
      return t.sum_all(t.tanh_act(t.matmul(cat, t.param(store, "W"))));
    });
  }

  SUBCASE("rows_lookup with a repeated id") {
    ParameterStore<double> store(9);
    store.add("E", {5, 3}, Init::kUniform);
    expect_grads_match(store, [&](Tape<double>& t) {
      auto rows = t.rows_lookup(t.param(store, "E"), {4, 1, 4});
      return t.sum_all(t.sigmoid(rows));
    });
  }

  SUBCASE("select_time routes rows to their chosen step") {
    ParameterStore<double> store(10);
    store.add("S0", {2, 3}, Init::kUniform);
    store.add("S1", {2, 3}, Init::kUniform);
    expect_grads_match(store, [&](Tape<double>& t) {
      auto out = t.select_time({t.param(store, "S0"), t.param(store, "S1")}, {1, 0});
      return t.sum_all(t.tanh_act(out));
    });
  }

  SUBCASE("softmax_rows") {
    ParameterStore<double> store(11);
    store.add("X", {2, 4}, Init::kUniform);
    store.add("W", {4, 1}, Init::kUniform);
    expect_grads_match(store, [&](Tape<double>& t) {
      auto p = t.softmax_rows(t.scale(t.param(store, "X"), 2.0));
      return t.sum_all(t.matmul(p, t.param(store, "W")));
    });
  }

  SUBCASE("attention_mix, batched annotations") {
    ParameterStore<double> store(12);
    store.add("W", {2, 3}, Init::kUniform);
    store.add("A0", {2, 4}, Init::kUniform);
    store.add("A1", {2, 4}, Init::kUniform);
    store.add("A2", {2, 4}, Init::kUniform);
    expect_grads_match(store, [&](Tape<double>& t) {
      auto w = t.softmax_rows(t.param(store, "W"));
      auto mix = t.attention_mix(
          w, {t.param(store, "A0"), t.param(store, "A1"), t.param(store, "A2")});
      return t.sum_all(t.tanh_act(mix));
    });
  }

  SUBCASE("attention_mix, single shared annotation row") {
    ParameterStore<double> store(13);
    store.add("W", {3, 2}, Init::kUniform);
    store.add("A0", {1, 4}, Init::kUniform);
    store.add("A1", {1, 4}, Init::kUniform);
    expect_grads_match(store, [&](Tape<double>& t) {
      auto w = t.softmax_rows(t.param(store, "W"));
      return t.sum_all(t.attention_mix(w, {t.param(store, "A0"), t.param(store, "A1")}));
    });
  }

  SUBCASE("pick_nll through a matmul") {
    ParameterStore<double> store(14);
    store.add("X", {2, 3}, Init::kUniform);
    store.add("W", {3, 6}, Init::kUniform);
    expect_grads_match(store, [&](Tape<double>& t) {
      auto logits = t.matmul(t.param(store, "X"), t.param(store, "W"));
      return t.pick_nll(logits, {2, 5}, {1.0, 1.0});
    });
  }

  SUBCASE("pick_nll with a masked row") {
    ParameterStore<double> store(15);
    store.add("L", {3, 5}, Init::kUniform);
    expect_grads_match(store, [&](Tape<double>& t) {
      return t.pick_nll(t.scale(t.param(store, "L"), 4.0), {0, 3, 2}, {1.0, 0.0, 1.0});
    });
  }

  (void)fresh;
}

TEST_CASE("masked pick_nll rows contribute nothing") {
  Rng rng(21);
  auto logits = testutil::random_tensor<double>({3, 5}, rng, -2, 2);
  Tape<double> tape;
  auto l = tape.leaf(logits);
  auto full = tape.pick_nll(l, {1, 2, 3}, {1.0, 1.0, 0.0});
  auto partial = tape.pick_nll(l, {1, 2, 0}, {1.0, 1.0, 0.0});
  // Row 2 is masked out, so its target id cannot matter.
  CHECK(tape.value(full).data[0] == tape.value(partial).data[0]);
  CHECK(tape.value(full).data[0] ==
        doctest::Approx(nll_oracle(logits, {1, 2, 9}, {1.0, 1.0, 0.0})).epsilon(1e-12));
}

TEST_CASE("pick_nll equals the log-sum-exp oracle and handles uniform logits") {
  Rng rng(31);
  auto logits = testutil::random_tensor<double>({4, 7}, rng, -3, 3);
  std::vector<int> targets = {0, 6, 3, 2};
  std::vector<double> mask = {1, 1, 1, 1};
  Tape<double> tape;
  auto v = tape.pick_nll(tape.leaf(logits), targets, mask);
  CHECK(tape.value(v).data[0] == doctest::Approx(nll_oracle(logits, targets, mask)).epsilon(1e-12));

  Tensor<double> uniform({1, 12});
  auto u = tape.pick_nll(tape.leaf(uniform), {5}, {1.0});
  CHECK(tape.value(u).data[0] == doctest::Approx(std::log(12.0)).epsilon(1e-12));
}

TEST_CASE("softmax rows are normalized and shift-invariant") {
  Rng rng(17);
  auto x = testutil::random_tensor<double>({3, 6}, rng, -4, 4);
  Tensor<double> shifted = x;
  for (double& v : shifted.data) v += 1000.0;
  Tape<double> tape;
  auto p = tape.value(tape.softmax_rows(tape.leaf(x)));
  auto q = tape.value(tape.softmax_rows(tape.leaf(shifted)));
  for (std::size_t r = 0; r < 3; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 6; ++c) sum += p.at(r, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(testutil::max_abs_diff(p, q) <= 1e-12);
}

TEST_CASE("rows_lookup rejects ids outside the table") {
  Tape<float> tape;
  auto e = tape.leaf(Tensor<float>({4, 2}));
  CHECK_THROWS_AS(tape.rows_lookup(e, {0, 4}), ContractError);
  CHECK_THROWS_AS(tape.rows_lookup(e, {-1}), ContractError);
}

TEST_CASE("gradients are bitwise reproducible across identical runs") {
  auto run = [](std::uint64_t seed) {
    ParameterStore<float> store(seed);
    store.add("E", {6, 4}, Init::kUniform);
    store.add("W", {4, 6}, Init::kUniform);
    Tape<float> tape;
    auto x = tape.rows_lookup(tape.param(store, "E"), {3, 1});
    auto logits = tape.matmul(x, tape.param(store, "W"));
    auto loss = tape.pick_nll(logits, {2, 5}, {1.0f, 1.0f});
    tape.backward(loss);
    return std::make_pair(store.grad("E"), store.grad("W"));
  };
  auto [e1, w1] = run(123);
  auto [e2, w2] = run(123);
  CHECK(testutil::bitwise_equal(e1, e2));
  CHECK(testutil::bitwise_equal(w1, w2));
}

TEST_CASE("Adam first step moves a unit-gradient parameter by about lr") {
  ParameterStore<double> store(1);
  store.add("w", {1}, Init::kZero);
  store.value("w").data[0] = 1.0;
  store.grad("w").data[0] = 1.0;
  AdamOptimizer<double> opt(0.1, 1.0);
  opt.step(store);
  CHECK(store.value("w").data[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(store.grad("w").data[0] == 0.0);  // gradients consumed
}

TEST_CASE("Adam leaves parameters with zero gradient untouched") {
  ParameterStore<double> store(5);
  store.add("a", {2, 2}, Init::kUniform);
  store.add("b", {3}, Init::kUniform);
  const Tensor<double> a0 = store.value("a");
  store.grad("b").data = {1.0, -2.0, 0.5};
  AdamOptimizer<double> opt(0.01, 10.0);
  opt.step(store);
  CHECK(testutil::bitwise_equal(store.value("a"), a0));
  CHECK(store.value("b").data[0] != doctest::Approx(0.0));
}

TEST_CASE("gradient clipping caps the global norm and keeps direction") {
  ParameterStore<double> store(5);
  store.add("w", {2}, Init::kZero);
  store.grad("w").data = {6.0, 8.0};  // norm 10
  AdamOptimizer<double>::clip_gradients(store, 1.0);
  CHECK(store.grad_norm() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(store.grad("w").data[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(store.grad("w").data[1] == doctest::Approx(0.8).epsilon(1e-12));

  store.grad("w").data = {0.3, 0.4};  // norm 0.5, already within bounds
  AdamOptimizer<double>::clip_gradients(store, 1.0);
  CHECK(store.grad("w").data[0] == 0.3);
  CHECK(store.grad("w").data[1] == 0.4);
}

TEST_CASE("optimizer rejects non-positive hyperparameters") {
  CHECK_THROWS_AS(AdamOptimizer<double>(0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(AdamOptimizer<double>(0.1, -1.0), ConfigError);
}

TEST_CASE("parameter initialization is seeded, bounded, and orthogonal where asked") {
  ParameterStore<double> s1(42), s2(42), s3(43);
  s1.add("u", {8, 8}, Init::kUniform);
  s2.add("u", {8, 8}, Init::kUniform);
  s3.add("u", {8, 8}, Init::kUniform);
  CHECK(testutil::bitwise_equal(s1.value("u"), s2.value("u")));
  CHECK(!testutil::bitwise_equal(s1.value("u"), s3.value("u")));
  for (double v : s1.value("u").data) {
    CHECK(v >= -0.08);
    CHECK(v <= 0.08);
  }

  s1.add("q", {6, 6}, Init::kOrthogonal);
  const Tensor<double>& q = s1.value("q");
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      double dot = 0.0;
      for (std::size_t r = 0; r < 6; ++r) dot += q.at(r, i) * q.at(r, j);
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
    }
  }

  CHECK_THROWS_AS(s1.add("bad", {2, 3}, Init::kOrthogonal), ContractError);
  CHECK_THROWS_AS(s1.add("q", {2, 2}, Init::kZero), ContractError);  // duplicate name
}

TEST_CASE("rng is deterministic, bounded, and shuffles into permutations") {
  Rng a(7), b(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(u == b.uniform());
  }
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t x = a.below(13);
    CHECK(x < 13);
  }
  CHECK_THROWS_AS(a.below(0), ContractError);

  std::vector<int> v1 = {0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<int> v2 = v1;
  Rng r1(5), r2(5);
  r1.shuffle(v1);
  r2.shuffle(v2);
  CHECK(v1 == v2);
  std::vector<int> sorted = v1;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>({0, 1, 2, 3, 4, 5, 6, 7}));
}
