#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/finite_diff.hpp"
#include "tagcc/common.hpp"
#include "tagcc/tensor.hpp"

using namespace tagcc;
using tagcc::testing::central_difference;
using tagcc::testing::grad_close;

namespace {

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (double& v : t.values) v = (2.0 * rng.next_double() - 1.0) * scale;
  return t;
}

// Scalar probe loss sum(out .* weights) so gradients are non-uniform.
double weighted_probe(const Tensor& out_weights, Tape& tape, Var out) {
  Var w = tape.constant(out_weights);
  Var loss = tape.sum_all(tape.mul(out, w));
  return tape.value(loss).scalar_value();
}

// Finite-difference check of `forward` w.r.t. every entry of `input`.
void check_gradients(Tensor input, const std::function<Var(Tape&, Var)>& forward,
                     std::uint64_t seed) {
  Rng rng(seed);
  Tape probe_tape;
  Var in0 = probe_tape.leaf(input);
  Var out0 = forward(probe_tape, in0);
  const Tensor weights =
      random_tensor(probe_tape.value(out0).rows(), probe_tape.value(out0).cols(), rng);

  Tape tape;
  Var in = tape.leaf(input);
  Var out = forward(tape, in);
  Var w = tape.constant(weights);
  Var loss = tape.sum_all(tape.mul(out, w));
  tape.backward(loss);
  const Tensor analytic = tape.grad(in);

  auto eval = [&]() {
    Tape t;
    Var i = t.leaf(input, false);
    Var o = forward(t, i);
    return weighted_probe(weights, t, o);
  };
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double numeric = central_difference(eval, input.values[i]);
    CAPTURE(i);
    CHECK(grad_close(analytic.values[i], numeric));
  }
}

}  // namespace

TEST_CASE("matmul identity and hand-multiplied product") {
  Tape tape;
  Var eye = tape.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  Var m = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  CHECK(tape.value(tape.matmul(eye, m)).values == std::vector<double>{1, 2, 3, 4});

  Var a = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  Var b = tape.constant(Tensor::from_rows({{5, 6}, {7, 8}}));
  const Tensor prod = tape.value(tape.matmul(a, b));
  CHECK(prod.values == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tape tape;
  Var a = tape.constant(Tensor(2, 3));
  Var b = tape.constant(Tensor(2, 2));
  CHECK_THROWS_AS(tape.matmul(a, b), std::invalid_argument);
}

TEST_CASE("matmul gradient matches finite differences on random 3x3") {
  Rng rng(11);
  Tensor a = random_tensor(3, 3, rng);
  Tensor b = random_tensor(3, 3, rng);

  // gradient w.r.t. a with b fixed
  check_gradients(a, [&](Tape& t, Var in) { return t.matmul(in, t.constant(b)); }, 21);
  // gradient w.r.t. b with a fixed
  check_gradients(b, [&](Tape& t, Var in) { return t.matmul(t.constant(a), in); }, 22);
}

TEST_CASE("relu forward sign cases and gradient mask") {
  Tape tape;
  Var x = tape.leaf(Tensor::from_rows({{-1, 0, 2}}));
  Var y = tape.relu(x);
  CHECK(tape.value(y).values == std::vector<double>{0, 0, 2});

  Var loss = tape.sum_all(y);
  tape.backward(loss);
  CHECK(tape.grad(x).values == std::vector<double>{0, 0, 1});

  Tape t2;
  Var pos = t2.constant(Tensor::from_rows({{0.5, 3.0, 7.25}}));
  CHECK(t2.value(t2.relu(pos)).values == t2.value(pos).values);
}

TEST_CASE("relu gradient matches finite differences away from zero") {
  Rng rng(5);
  Tensor x = random_tensor(2, 4, rng);
  for (double& v : x.values) {
    if (std::abs(v) < 1e-2) v += 0.1;  // keep away from the kink
  }
  check_gradients(x, [](Tape& t, Var in) { return t.relu(in); }, 31);
}

TEST_CASE("l2_normalize_rows 3-4-5 row and idempotence") {
  Tape tape;
  Var x = tape.constant(Tensor::from_rows({{3, 4}}));
  const Tensor z = tape.value(tape.l2_normalize_rows(x));
  CHECK(z.values[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(z.values[1] == doctest::Approx(0.8).epsilon(1e-12));

  Var unit = tape.constant(z);
  const Tensor z2 = tape.value(tape.l2_normalize_rows(unit));
  for (std::size_t i = 0; i < z.size(); ++i) {
    CHECK(std::abs(z2.values[i] - z.values[i]) < 1e-9);
  }
}

TEST_CASE("l2_normalize_rows rejects near-zero rows") {
  Tape tape;
  Var x = tape.constant(Tensor::from_rows({{1e-13, 0.0}}));
  CHECK_THROWS_AS(tape.l2_normalize_rows(x), std::invalid_argument);
}

TEST_CASE("l2_normalize_rows gradient matches finite differences") {
  Rng rng(7);
  Tensor x = random_tensor(2, 4, rng);
  for (double& v : x.values) v += v >= 0 ? 0.5 : -0.5;  // safe norms
  check_gradients(x, [](Tape& t, Var in) { return t.l2_normalize_rows(in); }, 41);
}

TEST_CASE("softmax_rows symmetry, direct value, shift invariance") {
  Tape tape;
  Var a = tape.constant(Tensor::from_rows({{0, 0}}));
  const Tensor sym = tape.value(tape.softmax_rows(a));
  CHECK(sym.values[0] == doctest::Approx(0.5).epsilon(1e-12));

  Var b = tape.constant(Tensor::from_rows({{1, 0}}));
  const Tensor direct = tape.value(tape.softmax_rows(b));
  CHECK(direct.values[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(direct.values[1] == doctest::Approx(0.2689).epsilon(1e-4));

  for (double c : {-100.0, 0.0, 3.5, 1e6}) {
    Var shifted = tape.constant(Tensor::from_rows({{c + 1, c}}));
    const Tensor s = tape.value(tape.softmax_rows(shifted));
    CHECK(s.values[0] == direct.values[0]);  // bit-identical via max subtraction
    CHECK(s.values[1] == direct.values[1]);
  }
}

TEST_CASE("softmax_rows rows sum to one on random inputs") {
  Rng rng(13);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor x = random_tensor(4, 6, rng, 30.0);
    Tape tape;
    const Tensor p = tape.value(tape.softmax_rows(tape.constant(x)));
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < p.cols(); ++c) {
        CHECK(p.at(r, c) >= 0.0);
        s += p.at(r, c);
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("softmax and logsumexp gradients match finite differences") {
  Rng rng(17);
  Tensor x = random_tensor(3, 4, rng, 2.0);
  check_gradients(x, [](Tape& t, Var in) { return t.softmax_rows(in); }, 51);
  check_gradients(x, [](Tape& t, Var in) { return t.logsumexp_rows(in); }, 52);
}

TEST_CASE("gather_rows lookup, duplicates, empty list") {
  Tape tape;
  Var table = tape.leaf(Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}}));

  Var first = tape.gather_rows(table, {0});
  CHECK(tape.value(first).values == std::vector<double>{1, 2});

  Var dup = tape.gather_rows(table, {1, 1});
  CHECK(tape.value(dup).values == std::vector<double>{3, 4, 3, 4});
  Var loss = tape.sum_all(dup);
  tape.backward(loss);
  CHECK(tape.grad(table).values == std::vector<double>{0, 0, 2, 2, 0, 0});

  Var empty = tape.gather_rows(table, {});
  CHECK(tape.value(empty).rows() == 0);
  CHECK(tape.value(empty).cols() == 2);
}

TEST_CASE("gather_rows rejects out-of-range indices") {
  Tape tape;
  Var table = tape.constant(Tensor(3, 2));
  CHECK_THROWS_AS(tape.gather_rows(table, {3}), std::out_of_range);
  CHECK_THROWS_AS(tape.gather_rows(table, {-1}), std::out_of_range);
}

TEST_CASE("gather_rows gradient matches finite differences on the table") {
  Rng rng(19);
  Tensor table = random_tensor(4, 3, rng);
  check_gradients(table,
                  [](Tape& t, Var in) { return t.gather_rows(in, {0, 2, 2, 1}); }, 61);
}

TEST_CASE("backward on linear and quadratic losses") {
  Tape tape;
  Var w = tape.leaf(Tensor::from_rows({{1.5, -2.0, 0.25}}));
  tape.backward(tape.sum_all(w));
  CHECK(tape.grad(w).values == std::vector<double>{1, 1, 1});

  Tape t2;
  Var w2 = t2.leaf(Tensor::from_rows({{1.5, -2.0, 0.25}}));
  t2.backward(t2.sum_all(t2.mul(w2, w2)));
  CHECK(t2.grad(w2).values == std::vector<double>{3.0, -4.0, 0.5});
}

TEST_CASE("backward requires a scalar loss") {
  Tape tape;
  Var w = tape.leaf(Tensor(2, 2, 1.0));
  CHECK_THROWS_AS(tape.backward(w), std::invalid_argument);
}

TEST_CASE("backward is deterministic and resets accumulators between calls") {
  Rng rng(23);
  Tensor a = random_tensor(4, 4, rng);
  Tensor b = random_tensor(4, 4, rng);

  auto run = [&]() {
    Tape tape;
    Var va = tape.leaf(a);
    Var vb = tape.leaf(b);
    Var out = tape.relu(tape.matmul(va, vb));
    Var loss = tape.mean_all(tape.mul(out, out));
    tape.backward(loss);
    Tensor g1 = tape.grad(va);
    tape.backward(loss);  // second pass must give identical results
    Tensor g2 = tape.grad(va);
    CHECK(g1.values == g2.values);
    return g1;
  };
  const Tensor first = run();
  const Tensor second = run();
  CHECK(first.values == second.values);  // bit-identical across tapes
}

TEST_CASE("shared subexpressions accumulate gradients once per path") {
  // y = x*x + x  =>  dy/dx = 2x + 1
  Tape tape;
  Var x = tape.leaf(Tensor::from_rows({{3.0, -0.5}}));
  Var y = tape.add(tape.mul(x, x), x);
  tape.backward(tape.sum_all(y));
  CHECK(tape.grad(x).values == std::vector<double>{7.0, 0.0});
}

TEST_CASE("forward ops preserve finiteness on finite inputs") {
  Rng rng(29);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor a = random_tensor(3, 5, rng, 50.0);
    Tape tape;
    Var v = tape.constant(a);
    CHECK(tape.value(tape.softmax_rows(v)).all_finite());
    CHECK(tape.value(tape.logsumexp_rows(v)).all_finite());
    CHECK(tape.value(tape.relu(v)).all_finite());
    CHECK(tape.value(tape.log_floor(tape.softmax_rows(v))).all_finite());
  }
}

TEST_CASE("concat, diag, col_mean, transpose gradients match finite differences") {
  Rng rng(31);
  Tensor x = random_tensor(3, 3, rng);
  check_gradients(x, [](Tape& t, Var in) { return t.diag(in); }, 71);
  check_gradients(x, [](Tape& t, Var in) { return t.col_mean(in); }, 72);
  check_gradients(x, [](Tape& t, Var in) { return t.transpose(in); }, 73);
  check_gradients(
      x, [](Tape& t, Var in) { return t.concat_cols({in, t.scale(in, 2.0)}); }, 74);
  check_gradients(
      x,
      [](Tape& t, Var in) {
        Var b = t.leaf(Tensor::from_rows({{0.5, -1.0, 2.0}}), false);
        return t.add_rowvec(in, b);
      },
      75);
}

TEST_CASE("frozen leaves receive exactly zero gradient") {
  Tape tape;
  Var frozen = tape.leaf(Tensor::from_rows({{1, 2}, {3, 4}}), false);
  Var live = tape.leaf(Tensor::from_rows({{1, 1}, {1, 1}}));
  Var loss = tape.sum_all(tape.matmul(frozen, live));
  tape.backward(loss);
  CHECK(tape.grad(frozen).values == std::vector<double>{0, 0, 0, 0});
  bool live_has_grad = false;
  for (double g : tape.grad(live).values) live_has_grad |= g != 0.0;
  CHECK(live_has_grad);
}
