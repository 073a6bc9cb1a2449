#include <cmath>
#include <numbers>

#include "denseformer/accumulator.hpp"
#include "denseformer/grad_check.hpp"
#include "denseformer/ops.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace denseformer::ag;
using dft::random_tensor;

namespace {

std::vector<double> values(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

// Builds f from a list of parameter tensors and checks every coordinate.
double check(const std::function<Tensor<double>(Tape<double>&, std::vector<Tensor<double>>&)>& f,
             std::vector<Tensor<double>> params, std::size_t max_coords = 0) {
  GradCheckOptions opt;
  opt.max_coords_per_param = max_coords;
  auto report = grad_check([&](Tape<double>& tape) { return f(tape, params); }, params, opt);
  return report.max_rel_error;
}

}  // namespace

TEST_CASE("tensor construction and shape checks") {
  auto t = Tensor<float>::zeros({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK_THROWS_AS(Tensor<float>::zeros({1, 2, 3, 4}), ShapeError);
  CHECK_THROWS_AS(Tensor<float>::from({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_FALSE(t.has_grad());
  CHECK_THROWS_AS(t.grad(), TapeError);
  auto c = Tensor<double>::from({2}, {1.5, -2.0}, true).clone();
  CHECK(c.requires_grad());
  CHECK(values(c) == std::vector<double>{1.5, -2.0});
}

TEST_CASE("tensor buffers are 64-byte aligned") {
  for (std::size_t n : {1, 3, 17, 1000}) {
    auto t = Tensor<float>::zeros({n});
    CHECK(reinterpret_cast<std::uintptr_t>(t.data().data()) % kBufferAlign == 0);
    auto g = t.mutable_grad();
    CHECK(reinterpret_cast<std::uintptr_t>(g.data()) % kBufferAlign == 0);
  }
}

TEST_CASE("matmul examples") {
  Tape<double> tape;
  auto a = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor<double>::from({2, 2}, {5, 6, 7, 8});
  CHECK(values(matmul(tape, a, b)) == std::vector<double>{19, 22, 43, 50});
  auto eye = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  CHECK(values(matmul(tape, eye, b)) == values(b));
  CHECK(values(matmul(tape, a, b, Transpose::Yes)) == std::vector<double>{17, 23, 39, 53});
  CHECK_THROWS_AS(matmul(tape, a, Tensor<double>::zeros({3, 2})), ShapeError);
}

TEST_CASE("matmul gradient of sum(A.B) matches finite differences") {
  std::mt19937_64 rng(1);
  auto f = [](Tape<double>& tape, std::vector<Tensor<double>>& p) { return sum(tape, matmul(tape, p[0], p[1])); };
  CHECK(check(f, {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng)}) < 1e-6);
  auto g = [](Tape<double>& tape, std::vector<Tensor<double>>& p) {
    return dft::project(tape, matmul(tape, p[0], p[1], Transpose::Yes), 7);
  };
  CHECK(check(g, {random_tensor({2, 3, 4}, rng), random_tensor({5, 4}, rng)}) < 1e-6);
  auto h = [](Tape<double>& tape, std::vector<Tensor<double>>& p) {
    return dft::project(tape, bmm(tape, p[0], p[1], Transpose::Yes), 8);
  };
  CHECK(check(h, {random_tensor({2, 3, 4}, rng), random_tensor({2, 5, 4}, rng)}) < 1e-6);
}

TEST_CASE("softmax_causal examples") {
  Tape<double> tape;
  SUBCASE("zero scores give uniform rows over the unmasked prefix") {
    auto p = softmax_causal(tape, Tensor<double>::zeros({4, 4}));
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        const double expected = c <= r ? 1.0 / static_cast<double>(r + 1) : 0.0;
        CHECK(p.data()[r * 4 + c] == doctest::Approx(expected).epsilon(1e-15));
      }
    }
  }
  SUBCASE("saturation") {
    auto s = Tensor<double>::zeros({3, 3});
    s.data()[2 * 3 + 1] = 1e9;
    auto p = softmax_causal(tape, s);
    CHECK(p.data()[2 * 3 + 1] == doctest::Approx(1.0));
    CHECK(p.data()[2 * 3 + 0] == 0.0);
  }
  SUBCASE("random input: masked entries exactly 0 and rows sum to 1") {
    std::mt19937_64 rng(3);
    auto s = random_tensor<float>({2, 6, 6}, rng, 5.0, false);
    auto inference = Tape<float>::inference();
    auto p = softmax_causal(inference, s);
    for (std::size_t m = 0; m < 2; ++m) {
      for (std::size_t r = 0; r < 6; ++r) {
        double total = 0;
        for (std::size_t c = 0; c < 6; ++c) {
          const float v = p.data()[(m * 6 + r) * 6 + c];
          if (c > r) CHECK(v == 0.0f);
          total += v;
        }
        CHECK(std::fabs(total - 1.0) <= 1e-6);
      }
    }
  }
  CHECK_THROWS_AS(softmax_causal(tape, Tensor<double>::zeros({3, 4})), ShapeError);
}

TEST_CASE("softmax_causal gradient") {
  std::mt19937_64 rng(4);
  auto f = [](Tape<double>& tape, std::vector<Tensor<double>>& p) {
    return dft::project(tape, softmax_causal(tape, p[0], 0.7), 11);
  };
  CHECK(check(f, {random_tensor({2, 5, 5}, rng)}) < 1e-5);
}

TEST_CASE("layer_norm examples and gradient") {
  Tape<double> tape;
  auto gain = Tensor<double>::full({4}, 1.0);
  auto bias = Tensor<double>::zeros({4});
  auto out = layer_norm(tape, Tensor<double>::full({2, 4}, 3.25), gain, bias);
  for (double v : out.data()) CHECK(v == 0.0);
  auto two = layer_norm(tape, Tensor<double>::from({2}, {1, -1}), Tensor<double>::full({2}, 1.0),
                        Tensor<double>::zeros({2}), 0.0);
  CHECK(two.data()[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(two.data()[1] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_THROWS_AS(layer_norm(tape, Tensor<double>::zeros({2, 3}), gain, bias), ShapeError);

  std::mt19937_64 rng(5);
  auto f = [](Tape<double>& tape, std::vector<Tensor<double>>& p) {
    return dft::project(tape, layer_norm(tape, p[0], p[1], p[2]), 12);
  };
  CHECK(check(f, {random_tensor({2, 3, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)}) < 1e-5);
}

TEST_CASE("rope_rotate examples") {
  Tape<double> tape;
  std::mt19937_64 rng(6);
  SUBCASE("position 0 is the identity") {
    auto x = random_tensor({1, 4}, rng, 1.0, false);
    std::vector<std::size_t> pos{0};
    CHECK(values(rope_rotate(tape, x, pos)) == values(x));
  }
  SUBCASE("unit pair rotates to (cos, sin)") {
    // head_dim 2: the single pair rotates by pos * base^0 = pos radians.
    auto x = Tensor<double>::from({1, 2}, {1.0, 0.0});
    std::vector<std::size_t> pos{3};
    auto y = rope_rotate(tape, x, pos);
    CHECK(y.data()[0] == doctest::Approx(std::cos(3.0)).epsilon(1e-15));
    CHECK(y.data()[1] == doctest::Approx(std::sin(3.0)).epsilon(1e-15));
  }
  SUBCASE("second pair uses base^(-2/hd)") {
    auto x = Tensor<double>::from({1, 4}, {0.0, 0.0, 1.0, 0.0});
    std::vector<std::size_t> pos{5};
    auto y = rope_rotate(tape, x, pos);
    const double theta = 5.0 * std::pow(10000.0, -2.0 / 4.0);
    CHECK(y.data()[2] == doctest::Approx(std::cos(theta)).epsilon(1e-14));
    CHECK(y.data()[3] == doctest::Approx(std::sin(theta)).epsilon(1e-14));
  }
  SUBCASE("scores depend only on relative position") {
    for (int trial = 0; trial < 20; ++trial) {
      auto q = random_tensor({1, 8}, rng, 1.0, false);
      auto k = random_tensor({1, 8}, rng, 1.0, false);
      std::uniform_int_distribution<std::size_t> pick(0, 50);
      const std::size_t p1 = pick(rng), p2 = pick(rng), s = pick(rng);
      auto dot = [&](std::size_t a, std::size_t b) {
        std::vector<std::size_t> pa{a}, pb{b};
        auto rq = rope_rotate(tape, q, pa);
        auto rk = rope_rotate(tape, k, pb);
        double d = 0;
        for (std::size_t i = 0; i < 8; ++i) d += rq.data()[i] * rk.data()[i];
        return d;
      };
      CHECK(std::fabs(dot(p1, p2) - dot(p1 + s, p2 + s)) <= 1e-5);
    }
  }
  SUBCASE("odd head_dim is rejected") {
    std::vector<std::size_t> pos{0};
    CHECK_THROWS_AS(rope_rotate(tape, Tensor<double>::zeros({1, 3}), pos), ShapeError);
  }
  SUBCASE("gradient") {
    std::vector<std::size_t> pos{0, 1, 2};
    auto f = [&](Tape<double>& t, std::vector<Tensor<double>>& p) {
      return dft::project(t, rope_rotate(t, p[0], pos), 13);
    };
    CHECK(check(f, {random_tensor({2, 3, 4}, rng)}) < 1e-5);
  }
}

TEST_CASE("cross_entropy examples and gradient") {
  Tape<double> tape;
  std::vector<std::int32_t> targets{0, 17, 255};
  auto loss = cross_entropy(tape, Tensor<double>::zeros({3, 256}), targets);
  CHECK(loss.item() == doctest::Approx(std::log(256.0)).epsilon(1e-14));
  CHECK(std::log(256.0) == doctest::Approx(5.545).epsilon(1e-3));

  auto logits = Tensor<double>::zeros({1, 4});
  logits.data()[2] = 1e9;
  std::vector<std::int32_t> t2{2};
  CHECK(cross_entropy(tape, logits, t2).item() == doctest::Approx(0.0));

  std::vector<std::int32_t> bad{4};
  CHECK_THROWS_AS(cross_entropy(tape, Tensor<double>::zeros({1, 4}), bad), std::out_of_range);

  SUBCASE("gradient equals (softmax - one_hot) / N") {
    std::mt19937_64 rng(7);
    auto x = random_tensor({3, 5}, rng);
    std::vector<std::int32_t> tg{1, 4, 0};
    Tape<double> t;
    auto l = cross_entropy(t, x, tg);
    t.backward(l);
    for (std::size_t r = 0; r < 3; ++r) {
      double z = 0;
      for (std::size_t c = 0; c < 5; ++c) z += std::exp(x.data()[r * 5 + c]);
      for (std::size_t c = 0; c < 5; ++c) {
        const double expected =
            (std::exp(x.data()[r * 5 + c]) / z - (static_cast<std::int32_t>(c) == tg[r] ? 1.0 : 0.0)) / 3.0;
        CHECK(std::fabs(x.grad()[r * 5 + c] - expected) <= 1e-6);
      }
    }
    auto f = [&](Tape<double>& tp, std::vector<Tensor<double>>& p) { return cross_entropy(tp, p[0], tg); };
    CHECK(check(f, {x.clone()}) < 1e-6);
  }
}

TEST_CASE("weighted_sum examples") {
  Tape<double> tape;
  std::mt19937_64 rng(8);
  SUBCASE("one-hot last weight returns the last input bitwise") {
    std::vector<Tensor<float>> xs;
    for (int i = 0; i < 4; ++i) xs.push_back(random_tensor<float>({2, 3}, rng, 1.0, false));
    Tape<float> tf;
    auto y = weighted_sum<float>(tf, xs, Tensor<float>::from({4}, {0, 0, 0, 1}));
    for (std::size_t i = 0; i < 6; ++i) CHECK(y.data()[i] == xs[3].data()[i]);
  }
  SUBCASE("equal halves of one tensor") {
    auto x = Tensor<double>::from({2}, {0.3, -7.25});
    std::vector<Tensor<double>> xs{x, x};
    CHECK(values(weighted_sum<double>(tape, xs, Tensor<double>::from({2}, {0.5, 0.5}))) == values(x));
  }
  SUBCASE("hand-checkable") {
    std::vector<Tensor<double>> xs{Tensor<double>::from({2}, {1, 2}), Tensor<double>::from({2}, {3, 4})};
    CHECK(values(weighted_sum<double>(tape, xs, Tensor<double>::from({2}, {2, -1}))) == std::vector<double>{-1, 0});
  }
  SUBCASE("errors") {
    std::vector<Tensor<double>> none;
    CHECK_THROWS(weighted_sum<double>(tape, none, Tensor<double>::zeros({1})));
    std::vector<Tensor<double>> mixed{Tensor<double>::zeros({2}), Tensor<double>::zeros({3})};
    CHECK_THROWS_AS(weighted_sum<double>(tape, mixed, Tensor<double>::zeros({2})), ShapeError);
  }
  SUBCASE("gradient: d xs_j = w_j dY, d w_j = <xs_j, dY>") {
    auto f = [](Tape<double>& t, std::vector<Tensor<double>>& p) {
      std::vector<Tensor<double>> xs{p[0], p[1], p[2]};
      return dft::project(t, weighted_sum<double>(t, xs, p[3]), 14);
    };
    CHECK(check(f, {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng), random_tensor({2, 3}, rng),
                    random_tensor({3}, rng)}) < 1e-6);
  }
}

TEST_CASE("remaining ops pass gradient checks") {
  std::mt19937_64 rng(9);
  auto unary = [&](auto op, Shape shape, std::uint64_t seed) {
    auto f = [&](Tape<double>& t, std::vector<Tensor<double>>& p) { return dft::project(t, op(t, p[0]), seed); };
    return check(f, {random_tensor(shape, rng)});
  };
  CHECK(unary([](Tape<double>& t, const Tensor<double>& x) { return gelu(t, x); }, {3, 7}, 20) < 1e-5);
  CHECK(unary([](Tape<double>& t, const Tensor<double>& x) { return exp(t, x); }, {3, 4}, 21) < 1e-5);
  CHECK(unary([](Tape<double>& t, const Tensor<double>& x) { return scale(t, x, -1.75); }, {5}, 22) < 1e-6);
  CHECK(unary([](Tape<double>& t, const Tensor<double>& x) { return split_heads(t, x, 2, 1, 3); }, {2, 3, 12}, 23) <
        1e-6);
  CHECK(unary([](Tape<double>& t, const Tensor<double>& x) { return merge_heads(t, x, 2); }, {4, 3, 5}, 24) < 1e-6);

  auto binary = [&](auto op, Shape sa, Shape sb, std::uint64_t seed) {
    auto f = [&](Tape<double>& t, std::vector<Tensor<double>>& p) { return dft::project(t, op(t, p[0], p[1]), seed); };
    return check(f, {random_tensor(sa, rng), random_tensor(sb, rng)});
  };
  CHECK(binary([](Tape<double>& t, const auto& a, const auto& b) { return add(t, a, b); }, {2, 3}, {2, 3}, 25) < 1e-6);
  CHECK(binary([](Tape<double>& t, const auto& a, const auto& b) { return mul(t, a, b); }, {2, 3}, {2, 3}, 26) < 1e-6);
  CHECK(binary([](Tape<double>& t, const auto& a, const auto& b) { return scale_by(t, a, b); }, {2, 3}, {1}, 27) <
        1e-6);

  std::vector<std::int32_t> ids{3, 0, 3, 1, 2, 2};
  auto emb = [&](Tape<double>& t, std::vector<Tensor<double>>& p) {
    return dft::project(t, embedding(t, p[0], ids, 2, 3), 28);
  };
  CHECK(check(emb, {random_tensor({4, 5}, rng)}) < 1e-6);
  Tape<double> tape;
  std::vector<std::int32_t> bad{4};
  CHECK_THROWS_AS(embedding(tape, Tensor<double>::zeros({4, 2}), bad, 1, 1), std::out_of_range);

  std::vector<std::size_t> slots{0, 2};
  auto ws = [&](Tape<double>& t, std::vector<Tensor<double>>& p) {
    return dft::project(t, weighted_sum_slots(t, p[0], p[1], slots, Shape{2, 2}), 29);
  };
  CHECK(check(ws, {random_tensor({3, 2, 2}, rng), random_tensor({2}, rng)}) < 1e-6);
}

TEST_CASE("gelu uses the exact erf form") {
  Tape<double> tape;
  auto y = gelu(tape, Tensor<double>::from({3}, {-1.0, 0.0, 2.0}));
  for (std::size_t i = 0; i < 3; ++i) {
    const double x = std::array<double, 3>{-1.0, 0.0, 2.0}[i];
    CHECK(y.data()[i] == doctest::Approx(0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2))).epsilon(1e-14));
  }
}

TEST_CASE("forward ops reject non-finite results") {
  Tape<double> tape;
  auto x = Tensor<double>::from({2}, {1.0, 1000.0});
  CHECK_THROWS_AS(exp(tape, x), NonFiniteError);
  auto nan = Tensor<double>::from({1}, {std::nan("")});
  CHECK_THROWS_AS(scale(tape, nan, 2.0), NonFiniteError);
}

TEST_CASE("backward examples") {
  SUBCASE("sum of squares gives 2x") {
    Tape<double> tape;
    auto x = Tensor<double>::from({3}, {1.0, -2.0, 0.5}, true);
    auto loss = sum(tape, mul(tape, x, x));
    tape.backward(loss);
    CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{2.0, -4.0, 1.0});
  }
  SUBCASE("fan-out accumulates") {
    Tape<double> tape;
    auto x = Tensor<double>::from({2}, {3.0, 4.0}, true);
    auto loss = add(tape, sum(tape, x), sum(tape, x));
    tape.backward(loss);
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == 2.0);
  }
  SUBCASE("second backward without reset is an error") {
    Tape<double> tape;
    auto x = Tensor<double>::from({2}, {3.0, 4.0}, true);
    auto loss = sum(tape, x);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), TapeError);
    tape.reset();
  }
  SUBCASE("non-scalar loss is rejected") {
    Tape<double> tape;
    auto x = Tensor<double>::from({2}, {3.0, 4.0}, true);
    auto y = scale(tape, x, 2.0);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);
  }
  SUBCASE("identical programs give bitwise identical gradients") {
    std::mt19937_64 rng(10);
    auto a = random_tensor<float>({8, 16}, rng);
    auto b = random_tensor<float>({16, 4}, rng);
    std::vector<float> first;
    for (int run = 0; run < 2; ++run) {
      a.clear_grad();
      Tape<float> tape;
      auto loss = dft::project(tape, gelu(tape, matmul(tape, a, b)), 3);
      tape.backward(loss);
      std::vector<float> g(a.grad().begin(), a.grad().end());
      if (run == 0) first = g;
      else CHECK(g == first);
    }
  }
}

TEST_CASE("grad_check harness examples") {
  std::mt19937_64 rng(11);
  auto linear = [](Tape<double>& t, std::vector<Tensor<double>>& p) { return dft::project(t, p[0], 5); };
  CHECK(check(linear, {random_tensor({4, 3}, rng)}) < 1e-10);

  auto x = Tensor<double>::from({1}, {0.0}, true);
  std::vector<Tensor<double>> params{x};
  auto report = grad_check([&](Tape<double>& t) { return sum(t, exp(t, params[0])); }, params);
  CHECK(report.worst_analytic == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::fabs(report.worst_numeric - 1.0) < 1e-9);

  auto two = Tensor<double>::from({2}, {0.0, 1.0}, true);
  std::vector<Tensor<double>> p2{two};
  CHECK_THROWS(grad_check([&](Tape<double>& t) { return scale(t, p2[0], 2.0); }, p2));
}

TEST_CASE("slice accumulator") {
  SUBCASE("push at index 0 routes the whole gradient to x") {
    SliceAccumulator<double> acc(3, {2});
    Tape<double> tape;
    auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
    auto view = acc.push(tape, x);
    CHECK(view.shape() == Shape{1, 1, 2});
    auto loss = dft::project(tape, view, 1);
    tape.backward(loss);
    std::mt19937_64 rng(1);
    auto r = random_tensor({1, 1, 2}, rng, 1.0, false);
    CHECK(x.grad()[0] == r.data()[0]);
    CHECK(x.grad()[1] == r.data()[1]);
  }
  SUBCASE("push at index 2 splits g[0:2] to the previous view and g[2] to x") {
    SliceAccumulator<double> acc(4, {2});
    Tape<double> tape;
    auto x0 = Tensor<double>::from({2}, {1, 2}, true);
    auto x1 = Tensor<double>::from({2}, {3, 4}, true);
    auto x2 = Tensor<double>::from({2}, {5, 6}, true);
    acc.push(tape, x0);
    auto v1 = acc.push(tape, x1);
    auto v2 = acc.push(tape, x2);
    CHECK(v2.shape() == Shape{3, 1, 2});
    CHECK(std::vector<double>(v2.data().begin(), v2.data().end()) == std::vector<double>{1, 2, 3, 4, 5, 6});
    // Upstream gradient over 3 slots: g = [10,11 | 20,21 | 30,31].
    auto g = Tensor<double>::from({3, 1, 2}, {10, 11, 20, 21, 30, 31});
    auto loss = sum(tape, mul(tape, v2, g));
    tape.backward(loss);
    CHECK(v1.grad()[0] == 10);
    CHECK(v1.grad()[3] == 21);
    CHECK(x2.grad()[0] == 30);
    CHECK(x2.grad()[1] == 31);
    CHECK(x1.grad()[0] == 20);
    CHECK(x0.grad()[1] == 11);
  }
  SUBCASE("append-only and capacity errors") {
    SliceAccumulator<float> acc(2, {3});
    Tape<float> tape;
    auto x = Tensor<float>::zeros({3});
    CHECK_THROWS_AS(acc.push_at(tape, 1, x), std::logic_error);
    acc.push(tape, x);
    CHECK_THROWS_AS(acc.slot(1), std::out_of_range);
    acc.push(tape, x);
    CHECK_THROWS_AS(acc.push(tape, x), std::out_of_range);
    CHECK_THROWS_AS(acc.push_at(tape, 0, x), std::logic_error);
  }
  SUBCASE("accumulator path equals a plain list path") {
    std::mt19937_64 rng(12);
    std::vector<Tensor<double>> xs;
    for (int i = 0; i < 4; ++i) xs.push_back(random_tensor({2, 3}, rng));
    auto w = random_tensor({4}, rng);
    std::vector<std::size_t> slots{0, 1, 2, 3};

    Tape<double> t1;
    auto y1 = weighted_sum<double>(t1, xs, w);
    auto l1 = dft::project(t1, y1, 2);
    t1.backward(l1);
    std::vector<std::vector<double>> g1;
    for (auto& x : xs) g1.emplace_back(x.grad().begin(), x.grad().end());
    std::vector<double> gw1(w.grad().begin(), w.grad().end());
    for (auto& x : xs) x.clear_grad();
    w.clear_grad();

    Tape<double> t2;
    SliceAccumulator<double> acc(4, {2, 3});
    Tensor<double> view;
    for (auto& x : xs) view = acc.push(t2, x);
    auto y2 = weighted_sum_slots(t2, view, w, slots, Shape{2, 3});
    auto l2 = dft::project(t2, y2, 2);
    t2.backward(l2);
    CHECK(dft::max_rel_diff(y1.data(), y2.data()) <= 1e-6);
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(dft::max_rel_diff(xs[i].grad(), g1[i]) <= 1e-5);
    CHECK(dft::max_rel_diff(w.grad(), gw1) <= 1e-5);
  }
}
