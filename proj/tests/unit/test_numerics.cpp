#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "dprompt/numerics/adam.hpp"
#include "dprompt/numerics/ops.hpp"
#include "dprompt/numerics/tape.hpp"
#include "helpers.hpp"

using namespace dprompt;
using num::Matrix;
using num::NodeId;
using num::Tape;

TEST_CASE("softmax examples") {
  const std::vector<double> a{0.0, 0.0};
  const auto pa = num::softmax<double>(a);
  CHECK(pa[0] == doctest::Approx(0.5));
  CHECK(pa[1] == doctest::Approx(0.5));

  const std::vector<double> b{0.0, std::log(3.0)};
  const auto pb = num::softmax<double>(b);
  CHECK(pb[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(pb[1] == doctest::Approx(0.75).epsilon(1e-12));

  const std::vector<double> c{1000.0, 0.0};
  const auto pc = num::softmax<double>(c);
  CHECK(std::isfinite(pc[0]));
  CHECK(pc[0] == doctest::Approx(1.0));
  CHECK(pc[1] < 1e-300);
  CHECK(pc[1] >= 0.0);
}

TEST_CASE("softmax errors") {
  CHECK_THROWS_AS(num::softmax<double>(std::vector<double>{}), std::invalid_argument);
  const std::vector<double> nan{0.0, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(num::softmax<double>(nan), std::domain_error);
  const std::vector<float> inf{0.0f, std::numeric_limits<float>::infinity()};
  CHECK_THROWS_AS(num::softmax<float>(inf), std::domain_error);
}

TEST_CASE_TEMPLATE("softmax normalization and shift invariance", T, float, double) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 30.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<T> v(1 + rng() % 40);
    for (auto& x : v) x = static_cast<T>(n(rng));
    const auto p = num::softmax<T>(v);
    double sum = 0;
    for (T x : p) {
      CHECK(x >= T{0});
      sum += double(x);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
    if (!std::is_same_v<T, double>) continue;  // shifted float inputs are already rounded differently
    auto shifted = v;
    const T c = static_cast<T>(n(rng));
    for (auto& x : shifted) x += c;
    const auto q = num::softmax<T>(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(double(p[i]) - double(q[i])) <= 1e-6);
  }
}

TEST_CASE("layer_norm examples") {
  const std::vector<double> one{1.0, 1.0, 1.0}, zero{0.0, 0.0, 0.0};
  const std::vector<double> c{4.0, 4.0, 4.0};
  for (double y : num::layer_norm<double>(c, one, zero, 1e-5)) CHECK(y == 0.0);

  const std::vector<double> g2{1.0, 1.0}, b2{0.0, 0.0};
  const auto y1 = num::layer_norm<double>(std::vector<double>{1.0, -1.0}, g2, b2, 1e-12);
  CHECK(y1[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(y1[1] == doctest::Approx(-1.0).epsilon(1e-9));
  const auto y2 = num::layer_norm<double>(std::vector<double>{2.0, 0.0}, g2, b2, 1e-12);
  CHECK(y2[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(y2[1] == doctest::Approx(-1.0).epsilon(1e-9));

  const std::vector<double> g{2.0, 0.5}, b{1.0, -1.0};
  const auto y3 = num::layer_norm<double>(std::vector<double>{3.0, 1.0}, g, b, 1e-12);
  CHECK(y3[0] == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(y3[1] == doctest::Approx(-1.5).epsilon(1e-9));
}

TEST_CASE("layer_norm length mismatch") {
  const std::vector<double> x{1.0, 2.0, 3.0}, g{1.0, 1.0}, b{0.0, 0.0, 0.0};
  CHECK_THROWS_AS(num::layer_norm<double>(x, g, b, 1e-5), std::invalid_argument);
  CHECK_THROWS_AS(num::layer_norm<double>(x, b, g, 1e-5), std::invalid_argument);
}

TEST_CASE("causal_attention examples") {
  const Matrix<double> q(1, 2, std::vector<double>{0.3, -0.7});
  const Matrix<double> k(1, 2, std::vector<double>{1.0, 2.0});
  const Matrix<double> v(1, 3, std::vector<double>{5.0, 6.0, 7.0});
  const auto out = num::causal_attention(q, k, v, 0);
  CHECK(out(0, 0) == 5.0);
  CHECK(out(0, 1) == 6.0);
  CHECK(out(0, 2) == 7.0);

  const Matrix<double> q2(2, 2, std::vector<double>{0.1, 0.2, -0.4, 0.9});
  const Matrix<double> k2(2, 2, std::vector<double>{1.0, 1.0, 1.0, 1.0});
  const Matrix<double> v2(2, 2, std::vector<double>{2.0, 4.0, 6.0, 0.0});
  const auto o2 = num::causal_attention(q2, k2, v2, 0);
  CHECK(o2(1, 0) == doctest::Approx(4.0));
  CHECK(o2(1, 1) == doctest::Approx(2.0));
  CHECK(o2(0, 0) == 2.0);
}

TEST_CASE("causal_attention dimension errors") {
  const Matrix<double> q(2, 2), k(3, 2), v(2, 2), k3(2, 3);
  CHECK_THROWS_AS(num::causal_attention(q, k, v, 0), std::invalid_argument);
  CHECK_THROWS_AS(num::causal_attention(q, k3, v, 0), std::invalid_argument);
}

TEST_CASE("causal_attention rows are convex combinations of permitted values") {
  const std::size_t T = 6, n_prefix = 2;
  const auto q = testing::random_matrix<double>(T, 4, 1);
  const auto k = testing::random_matrix<double>(T, 4, 2);
  Matrix<double> v(T, 1);
  for (std::size_t i = 0; i < T; ++i) v(i, 0) = double(i + 1) * 10;
  const auto out = num::causal_attention(q, k, v, n_prefix);
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t last = std::max(n_prefix, i + 1);  // exclusive
    CHECK(out(i, 0) >= 10.0 - 1e-9);
    CHECK(out(i, 0) <= double(last) * 10 + 1e-9);
  }
}

TEST_CASE("causal_attention non-leakage, exhaustive up to length 8") {
  for (std::size_t T = 1; T <= 8; ++T) {
    for (std::size_t n_prefix = 0; n_prefix <= T; ++n_prefix) {
      const auto q = testing::random_matrix<double>(T, 4, 10 + T);
      const auto k = testing::random_matrix<double>(T, 4, 20 + T);
      const auto v = testing::random_matrix<double>(T, 3, 30 + T);
      const auto base = num::causal_attention(q, k, v, n_prefix);
      for (std::size_t t = 0; t < T; ++t) {
        // Perturb key and value at position t; rows that must not see t stay bit-identical.
        auto k2 = k;
        auto v2 = v;
        for (std::size_t c = 0; c < 4; ++c) k2(t, c) += 0.5;
        for (std::size_t c = 0; c < 3; ++c) v2(t, c) -= 1.25;
        const auto out = num::causal_attention(q, k2, v2, n_prefix);
        for (std::size_t i = 0; i < T; ++i) {
          const bool sees = t < n_prefix || t <= i;
          bool same = true;
          for (std::size_t c = 0; c < 3; ++c) same = same && out(i, c) == base(i, c);
          if (!sees) CHECK(same);
          if (sees) CHECK_FALSE(same);
        }
      }
    }
  }
}

TEST_CASE("cross_entropy examples") {
  CHECK(num::cross_entropy<double>(std::vector<double>{0.5, 0.5}, 0) == doctest::Approx(std::log(2.0)));
  CHECK(num::cross_entropy<double>(std::vector<double>{0.0, 1.0, 0.0}, 1) == 0.0);
  const std::size_t V = 37;
  const std::vector<double> uniform(V, 1.0 / double(V));
  CHECK(num::cross_entropy<double>(uniform, 5) == doctest::Approx(std::log(double(V))));
  const double clamp = -std::log(num::kProbabilityFloor);
  CHECK(num::cross_entropy<double>(std::vector<double>{1.0, 0.0}, 1) == doctest::Approx(clamp));
  CHECK_THROWS_AS(num::cross_entropy<double>(std::vector<double>{0.5, 0.5}, 2), std::out_of_range);
}

TEST_CASE("matmul shape check") {
  CHECK_THROWS_AS(num::matmul(Matrix<double>(2, 3), Matrix<double>(2, 3)), std::invalid_argument);
  const Matrix<double> a(1, 2, std::vector<double>{1, 2}), b(2, 1, std::vector<double>{3, 4});
  CHECK(num::matmul(a, b)(0, 0) == 11.0);
}

TEST_CASE("backward: linear and quadratic") {
  Tape<double> tape;
  const Matrix<double> w(1, 3, std::vector<double>{0.5, -2.0, 3.0});
  const Matrix<double> x(3, 1, std::vector<double>{1.5, 0.25, -4.0});
  const NodeId wn = tape.parameter(w, true);
  const NodeId xn = tape.parameter(x, false);
  const NodeId f = tape.matmul(wn, xn);
  tape.backward(f);
  for (std::size_t i = 0; i < 3; ++i) CHECK(tape.grad(wn)(0, i) == x(i, 0));
  CHECK_FALSE(tape.requires_grad(xn));
  CHECK_THROWS_AS(tape.grad(xn), std::logic_error);

  Tape<double> t2;
  const NodeId w2 = t2.parameter(w, true);
  const NodeId sq = t2.sum(t2.mul(w2, w2));
  t2.backward(sq);
  for (std::size_t i = 0; i < 3; ++i) CHECK(t2.grad(w2)(0, i) == 2 * w(0, i));
}

TEST_CASE("backward preconditions") {
  Tape<double> tape;
  const Matrix<double> wv(2, 2, 1.0), one(1, 1, 2.0);
  const NodeId w = tape.parameter(wv, true);
  CHECK_THROWS_AS(tape.backward(w), std::invalid_argument);  // not 1×1
  CHECK_THROWS(tape.backward(NodeId{99}));                   // not in the record

  Tape<double> frozen;
  const NodeId c = frozen.parameter(one, false);
  const NodeId loss = frozen.mul(c, c);
  CHECK_THROWS_AS(frozen.backward(loss), std::logic_error);  // empty trainable set

  Tape<double> early;
  const NodeId p = early.parameter(one, true);
  CHECK_THROWS_AS(early.grad(p), std::logic_error);  // backward has not run
}

TEST_CASE("trainable leaves unreachable from the loss get a zero gradient") {
  Tape<double> tape;
  const Matrix<double> av(1, 1, 3.0), bv(1, 2, 1.0);
  const NodeId a = tape.parameter(av, true);
  const NodeId b = tape.parameter(bv, true);
  tape.backward(tape.mul(a, a));
  CHECK(tape.grad(a)(0, 0) == 6.0);
  CHECK(tape.grad(b)(0, 0) == 0.0);
  CHECK(tape.grad(b).cols() == 2);
}

// ---- finite differences over every primitive ----------------------------------------------------

namespace {

template <typename T>
using Builder = std::function<NodeId(Tape<T>&, const std::vector<NodeId>&)>;

template <typename T>
double evaluate(const std::vector<Matrix<T>>& leaves, const Builder<T>& build) {
  Tape<T> tape;
  std::vector<NodeId> ids;
  for (const auto& m : leaves) ids.push_back(tape.parameter(m, false));
  return double(tape.value(build(tape, ids))(0, 0));
}

// Largest elementwise |analytic − numeric| / max(|analytic|, |numeric|, floor) over all leaves,
// or with norm_wise, ‖analytic − numeric‖ / ‖numeric‖ per leaf (float rounding in the loss swamps
// single small entries).
template <typename T>
double gradient_error(std::vector<Matrix<T>> leaves, const Builder<T>& build, double h, double floor,
                      bool norm_wise = false) {
  Tape<T> tape;
  std::vector<NodeId> ids;
  for (const auto& m : leaves) ids.push_back(tape.parameter(m, true));
  tape.backward(build(tape, ids));
  double worst = 0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const Matrix<T> analytic = tape.grad(ids[l]);
    double diff2 = 0, ref2 = 0;
    for (std::size_t i = 0; i < leaves[l].size(); ++i) {
      const T saved = leaves[l].values()[i];
      leaves[l].values()[i] = saved + T(h);
      const double up = evaluate(leaves, build);
      leaves[l].values()[i] = saved - T(h);
      const double down = evaluate(leaves, build);
      leaves[l].values()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = double(analytic.values()[i]);
      const double scale = std::max({std::abs(a), std::abs(numeric), floor});
      if (!norm_wise) worst = std::max(worst, std::abs(a - numeric) / scale);
      diff2 += (a - numeric) * (a - numeric);
      ref2 += numeric * numeric;
    }
    if (norm_wise) worst = std::max(worst, std::sqrt(diff2) / std::max(std::sqrt(ref2), floor));
  }
  return worst;
}

// Reduce any node to a scalar with fixed random weights so every output element matters.
template <typename T>
NodeId weighted_sum(Tape<T>& t, NodeId x, std::uint64_t seed) {
  const auto& v = t.value(x);
  return t.sum(t.mul(x, t.constant(testing::random_matrix<T>(v.rows(), v.cols(), seed))));
}

struct Case {
  const char* name;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  std::function<NodeId(Tape<double>&, const std::vector<NodeId>&)> f64;
  std::function<NodeId(Tape<float>&, const std::vector<NodeId>&)> f32;
};

#define BOTH(body)                                                                   \
  [](Tape<double>& t, const std::vector<NodeId>& x) { using T = double; (void)sizeof(T); return body; }, \
  [](Tape<float>& t, const std::vector<NodeId>& x) { using T = float; (void)sizeof(T); return body; }

std::vector<Case> cases() {
  static const std::vector<std::int32_t> rows{2, 0, 3, 2};
  static const std::vector<std::int32_t> targets{1, 4, 0};
  return {
      {"matmul", {{3, 4}, {4, 2}}, BOTH(weighted_sum(t, t.matmul(x[0], x[1]), 1))},
      {"matmul_transposed", {{3, 4}, {5, 4}}, BOTH(weighted_sum(t, t.matmul_transposed(x[0], x[1]), 2))},
      {"add", {{3, 4}, {3, 4}}, BOTH(weighted_sum(t, t.add(x[0], x[1]), 3))},
      {"add_row", {{3, 4}, {1, 4}}, BOTH(weighted_sum(t, t.add_row(x[0], x[1]), 4))},
      {"mul", {{3, 4}, {3, 4}}, BOTH(weighted_sum(t, t.mul(x[0], x[1]), 5))},
      {"scale", {{3, 4}}, BOTH(weighted_sum(t, t.scale(x[0], T(-1.7)), 6))},
      {"gelu", {{3, 4}}, BOTH(weighted_sum(t, t.gelu(x[0]), 7))},
      {"layer_norm", {{3, 5}, {1, 5}, {1, 5}}, BOTH(weighted_sum(t, t.layer_norm(x[0], x[1], x[2], T(1e-5)), 8))},
      {"gather_rows", {{5, 3}}, BOTH(weighted_sum(t, t.gather_rows(x[0], rows), 9))},
      {"slice_rows", {{5, 3}}, BOTH(weighted_sum(t, t.slice_rows(x[0], 1, 3), 10))},
      {"concat_rows", {{2, 3}, {3, 3}}, BOTH(weighted_sum(t, t.concat_rows(x[0], x[1]), 11))},
      {"attention", {{4, 6}, {6, 6}, {6, 6}},
       BOTH(weighted_sum(t, t.attention(x[0], x[1], x[2], num::AttentionShape{2, 3, 2}), 12))},
      {"attention_causal", {{5, 4}, {5, 4}, {5, 4}},
       BOTH(weighted_sum(t, t.attention(x[0], x[1], x[2], num::AttentionShape{1, 0, 0}), 13))},
      {"log_softmax", {{3, 5}}, BOTH(weighted_sum(t, t.log_softmax(x[0]), 14))},
      {"sum", {{3, 5}}, BOTH(t.sum(t.mul(x[0], x[0])))},
      {"nll", {{3, 5}}, BOTH(t.nll(x[0], targets))},
  };
}

#undef BOTH

}  // namespace

TEST_CASE("every primitive matches central differences in 64-bit") {
  for (const auto& c : cases()) {
    std::vector<Matrix<double>> leaves;
    std::uint64_t seed = 100;
    for (auto [r, k] : c.shapes) leaves.push_back(testing::random_matrix<double>(r, k, seed++));
    const double err = gradient_error<double>(leaves, c.f64, 1e-3, 1e-6);
    INFO(std::string(c.name) << " relative error " << err);
    CHECK(err <= 1e-5);
  }
}

TEST_CASE("every primitive matches central differences in 32-bit") {
  for (const auto& c : cases()) {
    std::vector<Matrix<float>> leaves;
    std::uint64_t seed = 200;
    for (auto [r, k] : c.shapes) leaves.push_back(testing::random_matrix<float>(r, k, seed++));
    const double err = gradient_error<float>(leaves, c.f32, 1e-2, 1e-6, true);
    INFO(std::string(c.name) << " relative error " << err);
    CHECK(err <= 1e-3);
  }
}

TEST_CASE("dropout: identity at rate 0, inverted scaling otherwise, exact gradient for a fixed mask") {
  Tape<double> t;
  const auto x = testing::random_matrix<double>(4, 8, 1);
  const NodeId xn = t.parameter(x, true);
  Rng rng(5);
  const NodeId same = t.dropout(xn, 0.0, rng);
  CHECK(t.value(same) == x);

  Rng r1(9);
  const NodeId d = t.dropout(xn, 0.5, r1);
  const Matrix<double> out = t.value(d);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double o = out.values()[i];
    CHECK((o == 0.0 || o == doctest::Approx(2 * x.values()[i])));
  }
  t.backward(t.sum(d));
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(t.grad(xn).values()[i] == (out.values()[i] == 0.0 ? 0.0 : 2.0));
  }
}

TEST_CASE("nll clamps at the probability floor and gives clamped rows no gradient") {
  Tape<double> t;
  Matrix<double> logits(1, 3);
  logits(0, 0) = 0;
  logits(0, 1) = 100;
  logits(0, 2) = -100;
  const NodeId l = t.parameter(logits, true);
  const std::vector<std::int32_t> target{2};
  const NodeId loss = t.nll(l, target);
  CHECK(t.value(loss)(0, 0) == doctest::Approx(-std::log(num::kProbabilityFloor)));
  t.backward(loss);
  for (double g : t.grad(l).values()) CHECK(g == 0.0);
}

TEST_CASE("operations are deterministic") {
  const auto a = testing::random_matrix<float>(17, 33, 1);
  const auto b = testing::random_matrix<float>(33, 9, 2);
  CHECK(num::matmul(a, b) == num::matmul(a, b));
}

TEST_CASE("Adam: lr 0 leaves parameters unchanged; a step moves against the gradient") {
  Matrix<double> p(1, 3, std::vector<double>{1, 2, 3});
  const Matrix<double> g(1, 3, std::vector<double>{0.5, -0.5, 0});
  num::Adam<double> still(num::AdamSettings{0.0});
  still.step({&p}, {&g});
  CHECK(p == Matrix<double>(1, 3, std::vector<double>{1, 2, 3}));

  num::Adam<double> adam(num::AdamSettings{0.1});
  adam.step({&p}, {&g});
  CHECK(p(0, 0) == doctest::Approx(0.9));
  CHECK(p(0, 1) == doctest::Approx(2.1));
  CHECK(p(0, 2) == 3.0);
  CHECK(adam.steps() == 1);
}
