#include <doctest.h>

#include <cmath>

#include "egfn/errors.hpp"
#include "egfn/numnet.hpp"
#include "support.hpp"

using namespace egfn;

namespace {

MlpSpec small_spec() { return MlpSpec{5, {7, 6}, 4}; }

ParamVector random_params(const MlpSpec& spec, std::uint64_t seed, double scale = 1.0) {
  ParamVector p(spec);
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : p.values) v = n(rng);
  return p;
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("parameter count is sum of in*out + out") {
  const MlpSpec s = small_spec();
  CHECK(s.param_count() == 5 * 7 + 7 + 7 * 6 + 6 + 6 * 4 + 4);
  CHECK(ParamVector(s).size() == s.param_count());
  CHECK(ParamLayout::for_spec(s).total_rows() == 7 + 6 + 4);
}

TEST_CASE("zero weights give the bias") {
  MlpSpec s{3, {}, 2};
  ParamVector p(s);
  p.row(0, 0)[3] = 0.25;
  p.row(0, 1)[3] = -1.5;
  const auto out = mlp_forward(s, p, std::vector<double>{4, -2, 9});
  CHECK(out[0] == 0.25);
  CHECK(out[1] == -1.5);
}

TEST_CASE("identity layer passes input through") {
  MlpSpec s{3, {}, 3};
  ParamVector p(s);
  for (std::size_t r = 0; r < 3; ++r) p.row(0, r)[r] = 1.0;
  const std::vector<double> x{0.5, -3, 2};
  CHECK(mlp_forward(s, p, x) == x);
  CHECK(reference::mlp_forward(s, p, x) == x);
}

TEST_CASE("dimension mismatch is a configuration error") {
  const MlpSpec s = small_spec();
  ParamVector p(s);
  CHECK_THROWS_AS(mlp_forward(s, p, std::vector<double>(4)), ConfigError);
  CHECK_THROWS_AS(mlp_backward(s, p, std::vector<double>(5), std::vector<double>(3)), ConfigError);
  ParamVector wrong(MlpSpec{5, {7}, 4});
  CHECK_THROWS_AS(mlp_forward(s, wrong, std::vector<double>(5)), ConfigError);
  CHECK_THROWS_AS(row_views(p, 3), ConfigError);
}

TEST_CASE("batched forward matches the reference and is repeatable") {
  const MlpSpec s = small_spec();
  const ParamVector p = random_params(s, 3);
  Matrix in(37, 5);
  in.data = random_vec(37 * 5, 4);
  const Matrix a = mlp_forward_batch(s, p, in, nullptr, 1);
  const Matrix b = mlp_forward_batch(s, p, in, nullptr, 4);
  CHECK(a.data == b.data);
  CHECK(a.data == mlp_forward_batch(s, p, in).data);
  for (std::size_t r = 0; r < in.rows; ++r) {
    const auto ref = reference::mlp_forward(s, p, in.row(r));
    for (std::size_t c = 0; c < 4; ++c) CHECK(a(r, c) == doctest::Approx(ref[c]).epsilon(1e-13));
  }
}

TEST_CASE("finite input gives finite output") {
  const MlpSpec s = small_spec();
  const ParamVector p = random_params(s, 9, 3.0);
  for (std::uint64_t k = 0; k < 20; ++k) {
    auto x = random_vec(5, 100 + k);
    for (double& v : x) v *= 50;
    for (double y : mlp_forward(s, p, x)) CHECK(std::isfinite(y));
  }
}

TEST_CASE("backward matches central differences") {
  const MlpSpec s = small_spec();
  ParamVector p = random_params(s, 11, 0.7);
  const auto x = random_vec(5, 12);
  const auto up = random_vec(4, 13);
  const ParamVector g = mlp_backward(s, p, x, up);
  const ParamVector gref = reference::mlp_backward(s, p, x, up);
  auto f = [&] {
    const auto y = reference::mlp_forward(s, p, x);
    double acc = 0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += up[i] * y[i];
    return acc;
  };
  const double h = 1e-5;
  double worst = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(g.values[i] == doctest::Approx(gref.values[i]).epsilon(1e-12));
    const double keep = p.values[i];
    p.values[i] = keep + h;
    const double fp = f();
    p.values[i] = keep - h;
    const double fm = f();
    p.values[i] = keep;
    worst = std::max(worst, testsupport::rel_error(g.values[i], (fp - fm) / (2 * h)));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("zero upstream gives zero gradient") {
  const MlpSpec s = small_spec();
  const ParamVector p = random_params(s, 1);
  const ParamVector g = mlp_backward(s, p, random_vec(5, 2), std::vector<double>(4, 0.0));
  for (double v : g.values) CHECK(v == 0.0);
}

TEST_CASE("batched backward accumulates the per-row gradients for any worker count") {
  const MlpSpec s = small_spec();
  const ParamVector p = random_params(s, 21);
  Matrix in(40, 5), up(40, 4);
  in.data = random_vec(in.data.size(), 22);
  up.data = random_vec(up.data.size(), 23);
  std::vector<double> sum(p.size(), 0.0);
  for (std::size_t r = 0; r < 40; ++r) {
    const ParamVector g = reference::mlp_backward(s, p, in.row(r), up.row(r));
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g.values[i];
  }
  std::vector<double> one(p.size(), 0.0), four(p.size(), 0.0);
  ForwardCache c1, c4;
  mlp_forward_batch(s, p, in, &c1, 1);
  mlp_forward_batch(s, p, in, &c4, 4);
  mlp_backward_batch(s, p, c1, up, one, 1);
  mlp_backward_batch(s, p, c4, up, four, 4);
  CHECK(one == four);
  for (std::size_t i = 0; i < sum.size(); ++i) CHECK(one[i] == doctest::Approx(sum[i]).epsilon(1e-11));
}

TEST_CASE("adam: one step with unit gradient moves by lr") {
  std::vector<double> w{2.0};
  AdamState st(1);
  const std::vector<double> g{1.0};
  adam_step(w, g, st, 0.1);
  // m_hat = 1, v_hat = 1, step = 0.1 / (1 + 1e-8)
  CHECK(w[0] == doctest::Approx(2.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(st.step_count == 1);
  adam_step(w, g, st, 0.1);
  CHECK(st.step_count == 2);
  CHECK(w[0] == doctest::Approx(2.0 - 0.2).epsilon(1e-7));
}

TEST_CASE("adam: zero gradient leaves parameters alone, bad gradient names its index") {
  std::vector<double> w{1, 2, 3};
  AdamState st(3);
  adam_step(w, std::vector<double>(3, 0.0), st, 0.01);
  CHECK(w == std::vector<double>{1, 2, 3});
  for (double m : st.first_moment) CHECK(std::isfinite(m));
  const std::vector<double> bad{0.0, std::nan(""), 0.0};
  try {
    adam_step(w, bad, st, 0.01);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("index 1") != std::string::npos);
  }
}

TEST_CASE("adam is deterministic") {
  std::vector<double> a{0.3, -0.2}, b = a;
  AdamState sa(2), sb(2);
  for (int i = 0; i < 5; ++i) {
    const std::vector<double> g{std::sin(i * 1.0), std::cos(i * 1.0)};
    adam_step(a, g, sa, 0.05);
    adam_step(b, g, sb, 0.05);
  }
  CHECK(a == b);
}

TEST_CASE("row views: 4x3 layer has 4 rows of width 4, overwrite round trips") {
  MlpSpec s{3, {4}, 2};
  ParamVector a = random_params(s, 5), b = random_params(s, 6);
  auto rows = row_views(a, 0);
  REQUIRE(rows.size() == 4);
  for (auto& r : rows) CHECK(r.size() == 4);
  const auto brow = row_views(std::as_const(b), 0);
  std::copy(brow[2].begin(), brow[2].end(), rows[2].begin());
  const auto back = row_views(std::as_const(a), 0)[2];
  CHECK(std::equal(back.begin(), back.end(), brow[2].begin()));
}

TEST_CASE("row views partition the parameters") {
  const MlpSpec s = small_spec();
  ParamVector p(s);
  std::vector<int> hits(p.size(), 0);
  for (std::size_t l = 0; l < s.layer_count(); ++l) {
    for (auto r : row_views(p, l)) {
      for (double& v : r) ++hits[static_cast<std::size_t>(&v - p.values.data())];
    }
  }
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("xavier init stays in bounds with zero biases") {
  const MlpSpec s = small_spec();
  ParamVector p(s);
  Rng rng(1);
  xavier_init(p, rng);
  for (std::size_t l = 0; l < s.layer_count(); ++l) {
    const double lim = std::sqrt(6.0 / static_cast<double>(s.layer_inputs(l) + s.layer_outputs(l)));
    for (auto r : row_views(std::as_const(p), l)) {
      for (std::size_t c = 0; c + 1 < r.size(); ++c) CHECK(std::abs(r[c]) <= lim);
      CHECK(r.back() == 0.0);
    }
  }
}
