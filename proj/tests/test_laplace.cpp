#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "gtomo/laplace.hpp"

using namespace gtomo;

namespace {

GridPtr<2> square_grid(int n = 24) {
  return std::make_shared<Grid<2>>(Grid<2>::box(n, Vec<2>(0, 0), Vec<2>(1, 1), 0.15, 3));
}

MetricField<2> wavy_metric(GridPtr<2> g) {
  return MetricField<2>::from_function(g, [](const Vec<2>& x) {
    Mat<2> m;
    const double a = 0.12 * std::sin(2 * x[0]) * std::cos(x[1]);
    const double b = 0.08 * std::cos(3 * x[1]);
    m << 1.0 + 0.2 * std::exp(-x.squaredNorm()), a + b, a + b, 1.3 - 0.1 * x[0];
    return m;
  });
}

}  // namespace

TEST_CASE("laplace: Euclidean polynomial and harmonic cases") {
  auto g = square_grid(33);
  LaplaceBeltrami<2> L{MetricField<2>(g)};

  ScalarField<2> u(g), v(g);
  for (std::int64_t i = 0; i < g->size(); ++i) {
    u(i) = sq(g->coords(i)[0]);
    v(i) = g->coords(i)[0];
  }
  const auto lu = L.apply(u);
  const auto lv = L.apply(v);
  for (std::int64_t i : g->interior_nodes()) {
    REQUIRE(lu(i) == Catch::Approx(2.0).margin(1e-9));
    REQUIRE(std::abs(lv(i)) < 1e-10);
  }
}

TEST_CASE("laplace: matches an independently assembled dense operator") {
  auto g = square_grid(9);
  auto m = wavy_metric(g);
  LaplaceBeltrami<2> L(m);

  // oracle: dense stiffness assembled cell by cell with its own quadrature code
  const std::int64_t n = g->size();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  const double gp[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
  const double h0 = g->spacing[0], h1 = g->spacing[1];
  for (const auto& cell : g->cells()) {
    std::array<std::int64_t, 4> nodes;
    std::array<Vec<2>, 4> rel;
    int c = 0;
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        auto mi = cell;
        mi[0] += dx;
        mi[1] += dy;
        nodes[c] = g->index(mi);
        rel[c] = Vec<2>(dx, dy);
        ++c;
      }
    for (int qx = 0; qx <= 1; ++qx)
      for (int qy = 0; qy <= 1; ++qy) {
        const double px = gp[qx], py = gp[qy];
        Mat<2> gq = Mat<2>::Zero();
        std::array<double, 4> phi;
        std::array<Vec<2>, 4> dphi;
        for (int k = 0; k < 4; ++k) {
          const double wx = rel[k][0] > 0 ? px : 1 - px;
          const double wy = rel[k][1] > 0 ? py : 1 - py;
          phi[k] = wx * wy;
          dphi[k] = Vec<2>((rel[k][0] > 0 ? 1 : -1) * wy / h0, (rel[k][1] > 0 ? 1 : -1) * wx / h1);
          gq += phi[k] * sym_unpack<2>(m.g.data(nodes[k]));
        }
        const Mat<2> A = (h0 * h1 / 4) * std::sqrt(gq.determinant()) * gq.inverse();
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) K(nodes[a], nodes[b]) += dphi[a].dot(A * dphi[b]);
      }
  }

  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  ScalarField<2> u(g);
  for (std::int64_t i = 0; i < n; ++i) u(i) = nd(rng);
  Eigen::Map<const Eigen::VectorXd> uv(u.raw().data(), n);
  const Eigen::VectorXd ku = K * uv;
  const auto ku2 = L.stiffness(u.raw());
  double worst = 0;
  for (std::int64_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(ku[i] - ku2[i]));
  REQUIRE(worst < 1e-12 * K.cwiseAbs().maxCoeff() * 10);
}

TEST_CASE("laplace: discrete Green identity is exact for random fields") {
  for (bool ball : {false, true}) {
    auto g = ball ? std::make_shared<Grid<2>>(Grid<2>::ball(20, 1.0, 0.25, 3)) : square_grid(20);
    auto m = ball ? MetricField<2>(g) : wavy_metric(g);
    LaplaceBeltrami<2> L(m);
    std::mt19937_64 rng(17);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 3; ++trial) {
      ScalarField<2> w(g), f(g);
      for (std::int64_t i = 0; i < g->size(); ++i) {
        w(i) = nd(rng);
        f(i) = nd(rng);
      }
      const auto parts = L.green_identity_parts(w, f);
      const double scale = std::abs(parts[0]) + std::abs(parts[1]) + std::abs(parts[2]);
      REQUIRE(std::abs(parts[0] + parts[1] + parts[2]) < 1e-10 * std::max(scale, 1.0));
    }
  }
}

TEST_CASE("laplace: curved-metric apply matches dense oracle on random input") {
  auto g = square_grid(9);
  auto m = wavy_metric(g);
  LaplaceBeltrami<2> L(m);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  ScalarField<2> u(g);
  for (std::int64_t i = 0; i < g->size(); ++i) u(i) = nd(rng);
  // reference through stiffness + lumped mass
  const auto ku = L.stiffness(u.raw());
  const auto lap = L.apply(u);
  for (std::int64_t i : g->domain_nodes()) {
    if (L.lumped_mass(i) <= 0) continue;
    REQUIRE(lap(i) == Catch::Approx(-ku[i] / L.lumped_mass(i)).margin(1e-14));
  }
}
