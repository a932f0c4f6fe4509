#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "gtomo/metric.hpp"

using namespace gtomo;

namespace {

GridPtr<2> disk_grid(int n = 24) {
  return std::make_shared<Grid<2>>(Grid<2>::ball(n, 1.0, 0.25, 4));
}

Mat<2> random_spd(std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 0.4);
  Mat<2> a;
  a << 1 + std::abs(nd(rng)), nd(rng), nd(rng), 1 + std::abs(nd(rng));
  return 0.5 * (a + a.transpose()) + 1.5 * Mat<2>::Identity();
}

}  // namespace

TEST_CASE("inverse_metric: identity field maps to identity") {
  MetricField<2> m(disk_grid());
  auto inv = inverse_metric(m);
  for (std::int64_t i = 0; i < m.grid().size(); ++i)
    REQUIRE((inv.at(i) - Mat<2>::Identity()).norm() == 0.0);
}

TEST_CASE("inverse_metric: constant diagonal") {
  auto g = disk_grid();
  auto m = MetricField<2>::from_function(g, [](const Vec<2>&) {
    Mat<2> d;
    d << 4, 0, 0, 1;
    return d;
  });
  auto inv = inverse_metric(m);
  for (std::int64_t i : g->domain_nodes()) {
    REQUIRE(inv.at(i)(0, 0) == Catch::Approx(0.25).margin(1e-15));
    REQUIRE(inv.at(i)(1, 1) == Catch::Approx(1.0).margin(1e-15));
  }
}

TEST_CASE("inverse_metric: random SPD matches dense solve oracle") {
  auto g = disk_grid();
  std::mt19937_64 rng(91);
  MetricField<2> m(g);
  for (std::int64_t i : g->domain_nodes())
    if (!g->in_collar(i)) m.set(i, random_spd(rng));
  auto inv = inverse_metric(m);
  double worst = 0;
  for (std::int64_t i : g->domain_nodes()) {
    // oracle: dense LU solve of g X = I, independent of the closed-form inverse
    Mat<2> oracle = m.at(i).fullPivLu().solve(Mat<2>::Identity());
    worst = std::max(worst, (inv.at(i) - oracle).template lpNorm<Eigen::Infinity>());
    // product with g recovers the identity
    REQUIRE((m.at(i) * inv.at(i) - Mat<2>::Identity()).norm() < 1e-12);
  }
  REQUIRE(worst < 1e-12);
}

TEST_CASE("inverse_metric: non-SPD node is rejected with its index") {
  auto g = disk_grid();
  MetricField<2> m(g);
  const auto victim = g->interior_nodes()[7];
  Mat<2> bad;
  bad << 1, 2, 2, 1;  // indefinite
  m.set(victim, bad);
  REQUIRE_THROWS_WITH(inverse_metric(m),
                      Catch::Matchers::ContainsSubstring(std::to_string(victim)));
}

TEST_CASE("christoffel: Euclidean metric gives exactly zero") {
  MetricField<2> m(disk_grid());
  auto c = christoffel(m);
  for (double v : c.raw()) REQUIRE(v == 0.0);
}

TEST_CASE("christoffel: polar-coordinate metric on a patch away from r=0") {
  // coordinates (r, theta) on [1,2] x [0,1]; g = dr^2 + r^2 dtheta^2
  auto g = std::make_shared<Grid<2>>(
      Grid<2>::box(41, Vec<2>(1.0, 0.0), Vec<2>(2.0, 1.0), 0.05, 3));
  auto m = MetricField<2>::from_function(g, [](const Vec<2>& x) {
    Mat<2> mm;
    mm << 1, 0, 0, x[0] * x[0];
    return mm;
  });
  auto c = christoffel(m);
  const double h = g->spacing[0];
  for (std::int64_t i : g->interior_nodes()) {
    const double r = g->coords(i)[0];
    // Gamma^r_{theta theta} = -r, Gamma^theta_{r theta} = 1/r
    REQUIRE(christoffel_entry(c, i, 0, 1, 1) == Catch::Approx(-r).margin(h * h));
    REQUIRE(christoffel_entry(c, i, 1, 0, 1) == Catch::Approx(1.0 / r).margin(h * h));
    REQUIRE(std::abs(christoffel_entry(c, i, 0, 0, 0)) < h * h);
  }
}

TEST_CASE("christoffel: conformal metric matches the symbolic formula") {
  auto g = disk_grid(32);
  const double lam0 = 0.1;
  auto m = MetricField<2>::from_function(g, [&](const Vec<2>& x) {
    return Mat<2>(std::exp(2 * lam0 * x[0]) * Mat<2>::Identity());
  });
  auto c = christoffel(m);
  // symbolic: Gamma^k_{ij} = d_j lam delta_ik + d_i lam delta_jk - d_k lam delta_ij
  const Vec<2> dlam(lam0, 0.0);
  const double h = g->spacing[0];
  double worst = 0;
  for (std::int64_t i : g->interior_nodes()) {
    for (int k = 0; k < 2; ++k)
      for (int a = 0; a < 2; ++a)
        for (int b = a; b < 2; ++b) {
          const double exact =
              dlam[b] * (a == k) + dlam[a] * (b == k) - dlam[k] * (a == b);
          worst = std::max(worst, std::abs(christoffel_entry(c, i, k, a, b) - exact));
        }
  }
  REQUIRE(worst < 1.0 * h * h);
}

TEST_CASE("collar identity residual flags (e, 2e)") {
  auto g = disk_grid();
  MetricField<2> e(g);
  auto two = MetricField<2>::from_function(g, [](const Vec<2>&) {
    return Mat<2>(2.0 * Mat<2>::Identity());
  });
  REQUIRE(collar_identity_residual(e) == 0.0);
  REQUIRE(collar_identity_residual(two) == Catch::Approx(1.0));
}

TEST_CASE("ck_sup_norm surrogates on a linear field") {
  auto g = disk_grid();
  ScalarField<2> f(g);
  for (std::int64_t i = 0; i < g->size(); ++i) f(i) = g->coords(i)[0];
  REQUIRE(ck_sup_norm(f, 0) <= 1.0 + 4 * g->spacing[0]);
  REQUIRE(ck_sup_norm(f, 1) >= 1.0 - 1e-12);
  REQUIRE(ck_sup_norm(f, 2) <= 1.0 + 4 * g->spacing[0] + 1e-9);
}

TEST_CASE("metric spline sampler reproduces smooth fields between nodes") {
  auto g = disk_grid(32);
  auto m = MetricField<2>::from_function(g, [](const Vec<2>& x) {
    return Mat<2>((1.0 + 0.05 * std::exp(-x.squaredNorm())) * Mat<2>::Identity());
  });
  MetricSampler<2> s(m);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ud(-0.6, 0.6);
  double worst = 0;
  for (int k = 0; k < 200; ++k) {
    const Vec<2> x(ud(rng), ud(rng));
    const double exact = 1.0 + 0.05 * std::exp(-x.squaredNorm());
    worst = std::max(worst, std::abs(s.metric(x)(0, 0) - exact));
  }
  REQUIRE(worst < 5e-6);  // C^2 interpolation error at h ~ 0.065
}
