/* Copyright 2026 The TReID Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "treid/rng.hpp"
#include "treid/tensor.hpp"

using namespace treid;

namespace {

Tensor<double> rand_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t = Tensor<double>::zeros(std::move(shape));
  for (auto& v : t.value()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and known 2x2 product") {
  Tensor<double> eye = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  Tensor<double> a = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  Tensor<double> out = ops::matmul<double>(nullptr, eye, a);
  CHECK(out.value()[0] == 1);
  CHECK(out.value()[1] == 2);
  CHECK(out.value()[2] == 3);
  CHECK(out.value()[3] == 4);

  Tensor<double> b = Tensor<double>::from({2, 2}, {5, 6, 7, 8});
  Tensor<double> ab = ops::matmul<double>(nullptr, a, b);
  CHECK(ab.value()[0] == 19);
  CHECK(ab.value()[1] == 22);
  CHECK(ab.value()[2] == 43);
  CHECK(ab.value()[3] == 50);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor<double> a = Tensor<double>::zeros({2, 3});
  Tensor<double> b = Tensor<double>::zeros({2, 3});
  try {
    ops::matmul<double>(nullptr, a, b);
    FAIL("expected DimError");
  } catch (const DimError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
  }
}

TEST_CASE("matmul backward matches finite differences") {
  Rng rng(42);
  Tensor<double> b = rand_tensor({3, 3}, rng);
  auto f = [&b](Tape<double>* tape, const Tensor<double>& a) {
    return ops::sum_all(tape, ops::matmul(tape, a, b));
  };
  Tensor<double> point = rand_tensor({3, 3}, rng);
  auto rep = finite_difference_check<double>(f, point, 1e-4);
  CHECK(rep.max_err <= 1e-6);

  // And w.r.t. the second operand.
  Tensor<double> a = rand_tensor({3, 3}, rng);
  auto g = [&a](Tape<double>* tape, const Tensor<double>& x) {
    return ops::sum_all(tape, ops::matmul(tape, a, x));
  };
  rep = finite_difference_check<double>(g, rand_tensor({3, 3}, rng), 1e-4);
  CHECK(rep.max_err <= 1e-6);
}

TEST_CASE("conv2d 1x1 identity kernel") {
  Rng rng(1);
  Tensor<double> x = rand_tensor({4, 5, 1}, rng);
  Tensor<double> k = Tensor<double>::from({1, 1, 1, 1}, {1.0});
  Tensor<double> y = ops::conv2d<double>(nullptr, x, k, 1, 0);
  REQUIRE(y.shape() == Shape{4, 5, 1});
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(y.value()[i] == doctest::Approx(x.value()[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d all-ones overlap counting") {
  Tensor<double> x = Tensor<double>::full({3, 3, 1}, 1.0);
  Tensor<double> k = Tensor<double>::full({3, 3, 1, 1}, 1.0);
  Tensor<double> y = ops::conv2d<double>(nullptr, x, k, 1, 1);
  REQUIRE(y.shape() == Shape{3, 3, 1});
  // Corners see 4 input cells, edge centers 6, the center all 9.
  CHECK(y.value()[0] == 4);
  CHECK(y.value()[1] == 6);
  CHECK(y.value()[2] == 4);
  CHECK(y.value()[3] == 6);
  CHECK(y.value()[4] == 9);
  CHECK(y.value()[5] == 6);
  CHECK(y.value()[6] == 4);
  CHECK(y.value()[7] == 6);
  CHECK(y.value()[8] == 4);
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(7);
  Tensor<double> x = rand_tensor({5, 5, 2}, rng);
  auto f = [&x](Tape<double>* tape, const Tensor<double>& k) {
    return ops::sum_all(tape, ops::conv2d(tape, x, k, 1, 1));
  };
  auto rep =
      finite_difference_check<double>(f, rand_tensor({3, 3, 2, 2}, rng), 1e-5);
  CHECK(rep.max_err <= 1e-6);

  // Input gradient, strided case.
  Tensor<double> k = rand_tensor({3, 3, 2, 2}, rng);
  auto g = [&k](Tape<double>* tape, const Tensor<double>& xin) {
    return ops::sum_all(tape, ops::conv2d(tape, xin, k, 2, 1));
  };
  rep = finite_difference_check<double>(g, rand_tensor({5, 5, 2}, rng), 1e-5);
  CHECK(rep.max_err <= 1e-6);
}

TEST_CASE("conv2d nonpositive output size errors") {
  Tensor<double> x = Tensor<double>::zeros({2, 2, 1});
  Tensor<double> k = Tensor<double>::zeros({5, 5, 1, 1});
  CHECK_THROWS_AS(ops::conv2d<double>(nullptr, x, k, 1, 0), DimError);
}

TEST_CASE("elementwise basics") {
  Tensor<double> z = Tensor<double>::scalar(0.0);
  CHECK(ops::sigmoid<double>(nullptr, z).item() == doctest::Approx(0.5));

  Tensor<double> neg = Tensor<double>::scalar(-3.0, true);
  Tape<double> tape;
  Tensor<double> r = ops::relu(&tape, neg);
  CHECK(r.item() == 0.0);
  tape.backward(r);
  CHECK(neg.grad()[0] == 0.0);

  // tanh gradient at random points equals 1 - tanh^2.
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    Tensor<double> x = Tensor<double>::scalar(rng.uniform(-2, 2), true);
    Tape<double> t2;
    Tensor<double> y = ops::tanh(&t2, x);
    t2.backward(y);
    const double expected = 1.0 - y.item() * y.item();
    CHECK(x.grad()[0] == doctest::Approx(expected).epsilon(1e-7));
  }
}

TEST_CASE("elementwise shape mismatch") {
  Tensor<double> a = Tensor<double>::zeros({2});
  Tensor<double> b = Tensor<double>::zeros({3});
  CHECK_THROWS_AS(ops::add<double>(nullptr, a, b), DimError);
  CHECK_THROWS_AS(ops::mul<double>(nullptr, a, b), DimError);
  CHECK_THROWS_AS(ops::sub<double>(nullptr, a, b), DimError);
}

TEST_CASE("reduce_mean values and exact gradient") {
  Tensor<double> v = Tensor<double>::from({3}, {1, 2, 3});
  CHECK(ops::reduce_mean<double>(nullptr, v, 0).item() == 2.0);

  // Length-1 axis drops without changing values.
  Tensor<double> m = Tensor<double>::from({1, 3}, {4, 5, 6});
  Tensor<double> r = ops::reduce_mean<double>(nullptr, m, 0);
  REQUIRE(r.shape() == Shape{3});
  CHECK(r.value()[0] == 4);
  CHECK(r.value()[2] == 6);

  Tensor<double> x = Tensor<double>::from({4}, {1, 2, 3, 4}, true);
  Tape<double> tape;
  Tensor<double> mean = ops::reduce_mean(&tape, x, 0);
  tape.backward(mean);
  for (double g : x.grad()) CHECK(g == 0.25);

  CHECK_THROWS_AS(ops::reduce_mean<double>(nullptr, v, 1), DimError);
}

TEST_CASE("backward basics and accumulation") {
  // loss = x for scalar x.
  Tensor<double> x = Tensor<double>::scalar(5.0, true);
  Tape<double> tape;
  tape.backward(x);
  CHECK(x.grad()[0] == 1.0);

  // loss = sum(x^2) at [1, 2].
  Tensor<double> v = Tensor<double>::from({2}, {1, 2}, true);
  Tape<double> t2;
  Tensor<double> loss = ops::sum_all(&t2, ops::mul(&t2, v, v));
  t2.backward(loss);
  CHECK(v.grad()[0] == 2.0);
  CHECK(v.grad()[1] == 4.0);

  // Repeated calls accumulate leaf gradients.
  t2.backward(loss);
  CHECK(v.grad()[0] == 4.0);
  CHECK(v.grad()[1] == 8.0);

  // Non-scalar loss is a contract violation.
  Tape<double> t3;
  Tensor<double> vec = Tensor<double>::from({2}, {1, 2}, true);
  Tensor<double> y = ops::scale(&t3, vec, 2.0);
  CHECK_THROWS_AS(t3.backward(y), ContractError);
}

TEST_CASE("zeroed gradients are exactly zero") {
  Tensor<double> v = Tensor<double>::from({3}, {1, 2, 3}, true);
  Tape<double> tape;
  tape.backward(ops::sum_all(&tape, ops::mul(&tape, v, v)));
  v.zero_grad();
  for (double g : v.grad()) CHECK(g == 0.0);
}

TEST_CASE("finite_difference_check on x^2 and constants") {
  auto square = [](Tape<double>* tape, const Tensor<double>& x) {
    return ops::sum_all(tape, ops::mul(tape, x, x));
  };
  Tensor<double> p = Tensor<double>::scalar(3.0);
  auto rep = finite_difference_check<double>(square, p, 1e-4);
  CHECK(rep.max_err <= 1e-6);
  CHECK(rep.analytic_at_worst == doctest::Approx(6.0));

  auto constant = [](Tape<double>* tape, const Tensor<double>& x) {
    return ops::scale(tape, ops::sum_all(tape, x), 0.0);
  };
  rep = finite_difference_check<double>(constant, p, 1e-4);
  CHECK(rep.max_err == 0.0);

  CHECK_THROWS_AS(finite_difference_check<double>(square, p, 0.0),
                  ContractError);
}

TEST_CASE("finite_difference_check rejects nonfinite values") {
  auto bad = [](Tape<double>* tape, const Tensor<double>& x) {
    Tensor<double> big = ops::scale(tape, x, 1e308);
    return ops::sum_all(tape, ops::mul(tape, big, big));
  };
  CHECK_THROWS_AS(
      finite_difference_check<double>(bad, Tensor<double>::scalar(2.0), 1.0),
      NumericError);
}

// Property: every differentiable operation passes an FD check at random
// points in 64-bit mode.
TEST_CASE("finite differences across the op set at random points") {
  Rng rng(2024);
  const double tol = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<double> other = rand_tensor({2, 3}, rng);
    auto check = [&](auto fn) {
      auto rep =
          finite_difference_check<double>(fn, rand_tensor({2, 3}, rng), 1e-5);
      CHECK(rep.max_err <= tol);
    };
    check([&](Tape<double>* t, const Tensor<double>& x) {
      return ops::sum_all(t, ops::mul(t, ops::add(t, x, other), x));
    });
    check([&](Tape<double>* t, const Tensor<double>& x) {
      return ops::sum_all(t, ops::sigmoid(t, ops::sub(t, x, other)));
    });
    check([&](Tape<double>* t, const Tensor<double>& x) {
      return ops::sum_all(t, ops::tanh(t, ops::scale(t, x, 1.7)));
    });
    check([&](Tape<double>* t, const Tensor<double>& x) {
      // Keep clear of the ReLU kink.
      Tensor<double> shifted =
          ops::add(t, x, Tensor<double>::full({2, 3}, 3.0));
      return ops::sum_all(t, ops::relu(t, shifted));
    });
    check([&](Tape<double>* t, const Tensor<double>& x) {
      return ops::reduce_mean(
          t, ops::reshape(t, ops::reduce_mean(t, x, 1), {2}), 0);
    });
    check([&](Tape<double>* t, const Tensor<double>& x) {
      Tensor<double> row = ops::select0(t, x, 1);
      Tensor<double> sl = ops::slice1d(t, row, 1, 2);
      return ops::sum_all(t, ops::concat1d(t, {sl, row}));
    });
    check([&](Tape<double>* t, const Tensor<double>& x) {
      Tensor<double> s = ops::select0(t, ops::select0(t, x, 0), 0);
      return ops::sum_all(t, ops::add_scalar(t, ops::mul_scalar(t, x, s), s));
    });
    check([&](Tape<double>* t, const Tensor<double>& x) {
      std::vector<Tensor<double>> rows = {ops::select0(t, x, 0),
                                          ops::select0(t, x, 1)};
      return ops::sum_all(t, ops::stack0(t, rows));
    });
    check([&](Tape<double>* t, const Tensor<double>& x) {
      Tensor<double> b = ops::select0(t, x, 0);
      Tensor<double> img = ops::reshape(t, x, {2, 1, 3});
      return ops::sum_all(t, ops::bias_add_hwc(t, img, b));
    });
  }
  // maxpool at generic points (no ties).
  for (int trial = 0; trial < 10; ++trial) {
    auto rep = finite_difference_check<double>(
        [](Tape<double>* t, const Tensor<double>& x) {
          return ops::sum_all(t, ops::maxpool2(t, x));
        },
        rand_tensor({4, 4, 2}, rng), 1e-6);
    CHECK(rep.max_err <= tol);
  }
}

TEST_CASE("forward evaluation is deterministic") {
  Rng rng(5);
  Tensor<double> a = rand_tensor({4, 4}, rng);
  Tensor<double> b = rand_tensor({4, 4}, rng);
  Tensor<double> first = ops::matmul<double>(nullptr, a, b);
  Tensor<double> second = ops::matmul<double>(nullptr, a, b);
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first.value()[i] == second.value()[i]);  // bit-identical
  }
}

TEST_CASE("maxpool2 picks maxima and requires even dims") {
  Tensor<double> x =
      Tensor<double>::from({2, 4, 1}, {1, 5, 2, 0, 3, 4, 1, 7});
  Tensor<double> y = ops::maxpool2<double>(nullptr, x);
  REQUIRE(y.shape() == Shape{1, 2, 1});
  CHECK(y.value()[0] == 5);
  CHECK(y.value()[1] == 7);
  CHECK_THROWS_AS(
      ops::maxpool2<double>(nullptr, Tensor<double>::zeros({3, 4, 1})),
      DimError);
}

TEST_CASE("tensor invariants") {
  Tensor<double> t = Tensor<double>::zeros({2, 3}, true);
  CHECK(t.size() == 6);
  CHECK(t.grad().size() == t.value().size());
  CHECK_THROWS_AS(Tensor<double>::from({2, 2}, {1, 2, 3}), DimError);
  CHECK_THROWS_AS(Tensor<double>::zeros({0, 2}), DimError);

  // Scalar (rank 0) tensors hold exactly one element.
  Tensor<double> s = Tensor<double>::scalar(4.0);
  CHECK(s.rank() == 0);
  CHECK(s.size() == 1);
  CHECK(s.item() == 4.0);
}

TEST_CASE("rng substreams are stable and independent") {
  Rng a = substream(99, "init/layer0");
  Rng b = substream(99, "init/layer0");
  Rng c = substream(99, "init/layer1");
  const double va = a.normal(), vb = b.normal(), vc = c.normal();
  CHECK(va == vb);
  CHECK(va != vc);

  // Gaussian moments sanity.
  Rng d = substream(1, "moments");
  double sum = 0, sq = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double v = d.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}
