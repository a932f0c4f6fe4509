#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "gtomo/tensor.hpp"

using namespace gtomo;

namespace {

GridPtr<2> disk_grid(int n = 24) {
  return std::make_shared<Grid<2>>(Grid<2>::ball(n, 1.0, 0.25, 4));
}

MetricField<2> perturbed_metric(GridPtr<2> g, double eps = 0.1) {
  return MetricField<2>::from_function(g, [eps](const Vec<2>& x) {
    const double q = x.squaredNorm() / 0.49;
    const double b = q < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - q)) : 0.0;
    Mat<2> m;
    m << 1.0 + eps * b, 0.4 * eps * b, 0.4 * eps * b, 1.0 - 0.5 * eps * b;
    return m;
  });
}

// smooth random vector field vanishing (with the envelope) on the boundary
VectorField<2> random_potential(GridPtr<2> g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  const double kx[3] = {1.1, 2.3, 3.1}, ky[3] = {2.0, 1.3, 2.9};
  double ax[2][3], bx[2][3];
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k < 3; ++k) {
      ax[c][k] = ud(rng);
      bx[c][k] = ud(rng);
    }
  VectorField<2> v(g);
  for (std::int64_t i = 0; i < g->size(); ++i) {
    if (!g->is_interior(i)) continue;  // v = 0 on the discrete boundary
    const Vec<2> x = g->coords(i);
    const double q = x.squaredNorm();
    const double env = q < 1.0 ? std::pow(1.0 - q, 3) : 0.0;
    for (int c = 0; c < 2; ++c) {
      double s = 0;
      for (int k = 0; k < 3; ++k)
        s += ax[c][k] * std::sin(kx[k] * x[0] + ky[k] * x[1]) +
             bx[c][k] * std::cos(ky[k] * x[0] - kx[k] * x[1]);
      v(i, c) = env * s;
    }
  }
  return v;
}

SymField<2> random_tensor(GridPtr<2> g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  SymField<2> t(g);
  double a[3][4];
  for (auto& row : a)
    for (auto& x : row) x = ud(rng);
  for (std::int64_t i : g->domain_nodes()) {
    const Vec<2> x = g->coords(i);
    for (int c = 0; c < 3; ++c)
      t(i, c) = a[c][0] * std::sin(1.7 * x[0]) + a[c][1] * std::cos(2.1 * x[1]) +
                a[c][2] * std::sin(1.1 * x[0] + 0.7 * x[1]) + a[c][3];
  }
  return t;
}

}  // namespace

TEST_CASE("sym_gradient: zero field and Euclidean identity case") {
  auto g = disk_grid();
  MetricField<2> e(g);
  TensorCalculus<2> tc(e);

  VectorField<2> zero(g);
  const auto tz = tc.sym_gradient(zero);
  for (double x : tz.raw()) REQUIRE(x == 0.0);

  VectorField<2> lin(g);
  for (std::int64_t i = 0; i < g->size(); ++i) {
    lin(i, 0) = g->coords(i)[0];
    lin(i, 1) = g->coords(i)[1];
  }
  const auto tl = tc.sym_gradient(lin);
  for (std::int64_t i : g->interior_nodes()) {
    // away from the zero-extension cut, where the stencil sees only v = x
    const auto mi = g->multi(i);
    bool deep = true;
    for (int a = 0; a < 2 && deep; ++a)
      for (int s = -2; s <= 2 && deep; s += 1) {
        auto mm = mi;
        mm[a] += s;
        if (!g->valid(mm) || !g->in_domain(g->index(mm))) deep = false;
      }
    if (!deep) continue;
    REQUIRE(tl(i, 0) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(tl(i, 1) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(std::abs(tl(i, 2)) < 1e-12);
  }
}

TEST_CASE("sym_gradient matches a hand-rolled stencil oracle") {
  auto g = disk_grid(16);
  auto m = perturbed_metric(g);
  TensorCalculus<2> tc(m);
  const auto gamma = christoffel(m);
  const auto v = random_potential(g, 4);
  const auto t = tc.sym_gradient(v);

  auto vat = [&](std::array<int, 2> mi, int c) -> double {
    if (!g->valid(mi) || !g->in_domain(g->index(mi))) return 0.0;
    return v(g->index(mi), c);
  };
  auto d4 = [&](std::array<int, 2> mi, int axis, int comp) {
    auto at = [&](int off) {
      auto mm = mi;
      mm[axis] += off;
      return vat(mm, comp);
    };
    return (8 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12 * g->spacing[axis]);
  };
  double worst = 0;
  for (std::int64_t i : g->domain_nodes()) {
    const auto mi = g->multi(i);
    for (int a = 0; a < 2; ++a)
      for (int b = a; b < 2; ++b) {
        double d = 0.5 * (d4(mi, a, b) + d4(mi, b, a));
        for (int mm = 0; mm < 2; ++mm) d -= christoffel_entry(gamma, i, mm, a, b) * v(i, mm);
        worst = std::max(worst, std::abs(t(i, sym_index<2>(a, b)) - d));
      }
  }
  REQUIRE(worst < 1e-13);
}

TEST_CASE("divergence is the exact adjoint of sym_gradient") {
  auto g = disk_grid(20);
  auto m = perturbed_metric(g);
  TensorCalculus<2> tc(m);
  const auto v = random_potential(g, 9);
  const auto t = random_tensor(g, 10);
  const double lhs = tc.inner_t(tc.sym_gradient(v), t);
  const double rhs = tc.inner_v(v, tc.divergence(t));
  REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("divergence of a constant tensor vanishes away from the boundary (Euclidean)") {
  auto g = disk_grid(24);
  MetricField<2> e(g);
  TensorCalculus<2> tc(e);
  SymField<2> t(g);
  for (std::int64_t i = 0; i < g->size(); ++i) {
    t(i, 0) = 1.0;
    t(i, 1) = -0.5;
    t(i, 2) = 0.25;
  }
  const auto d = tc.divergence(t);
  for (std::int64_t i : g->interior_nodes()) {
    const auto mi = g->multi(i);
    bool deep = true;  // three cells away from any non-interior node
    for (int a = 0; a < 2 && deep; ++a)
      for (int s = -3; s <= 3 && deep; ++s) {
        auto mm = mi;
        mm[a] += s;
        if (!g->valid(mm) || !g->is_interior(g->index(mm))) deep = false;
      }
    if (!deep) continue;
    REQUIRE(std::abs(d(i, 0)) < 1e-12);
    REQUIRE(std::abs(d(i, 1)) < 1e-12);
  }
}

TEST_CASE("solenoidal decomposition") {
  auto g = disk_grid(20);
  auto m = perturbed_metric(g);
  TensorCalculus<2> tc(m);

  SECTION("pure potential input: t_sol is relatively tiny") {
    const auto v0 = random_potential(g, 21);
    const auto t = tc.sym_gradient(v0);
    const auto res = tc.solenoidal_decompose(t, 1e-12);
    REQUIRE(tc.norm_t(res.t_sol) < 1e-6 * tc.norm_t(t));
  }

  SECTION("random tensor: orthogonality, reassembly, idempotence") {
    const auto t = random_tensor(g, 22);
    const auto res = tc.solenoidal_decompose(t, 1e-11);
    REQUIRE(res.orthogonality_residual < 1e-8);

    SymField<2> re(g);
    const auto grad = tc.sym_gradient(res.v);
    for (std::int64_t i : g->domain_nodes())
      for (int c = 0; c < 3; ++c) re(i, c) = res.t_sol(i, c) + grad(i, c) - t(i, c);
    REQUIRE(tc.norm_t(re) < 1e-8 * tc.norm_t(t));

    const auto res2 = tc.solenoidal_decompose(res.t_sol, 1e-11);
    SymField<2> diff(g);
    for (std::int64_t i : g->domain_nodes())
      for (int c = 0; c < 3; ++c) diff(i, c) = res2.t_sol(i, c) - res.t_sol(i, c);
    REQUIRE(tc.norm_t(diff) < 1e-7 * tc.norm_t(t));
  }

  SECTION("already solenoidal input gives negligible v") {
    const auto t = random_tensor(g, 23);
    const auto res = tc.solenoidal_decompose(t, 1e-12);
    const auto res2 = tc.solenoidal_decompose(res.t_sol, 1e-12);
    REQUIRE(std::sqrt(tc.inner_v(res2.v, res2.v)) < 1e-8 * tc.norm_t(res.t_sol));
  }

  SECTION("uniqueness surrogate: two CG starts agree") {
    const auto t = random_tensor(g, 24);
    const auto res_a = tc.solenoidal_decompose(t, 1e-12);
    const auto warm = random_potential(g, 25);
    const auto res_b = tc.solenoidal_decompose(t, 1e-12, 4000, &warm);
    VectorField<2> dv(g);
    for (std::int64_t i : g->domain_nodes())
      for (int c = 0; c < 2; ++c) dv(i, c) = res_a.v(i, c) - res_b.v(i, c);
    REQUIRE(std::sqrt(tc.inner_v(dv, dv)) <
            1e-8 * std::max(1.0, std::sqrt(tc.inner_v(res_a.v, res_a.v))));
  }
}

TEST_CASE("recover_v: trivial and constant cases") {
  auto box = std::make_shared<Grid<2>>(Grid<2>::box(25, Vec<2>(0, 0), Vec<2>(1, 1), 0.1, 3));
  MetricField<2> e(box);
  TensorCalculus<2> tc(e);

  SECTION("zero t_sol gives zero v") {
    SymField<2> z(box);
    const auto v = tc.recover_v(z);
    for (double x : v.raw()) REQUIRE(x == 0.0);
  }

  SECTION("constant t_nn = 1 integrates to v_n = -(x_n - x_n_min)") {
    SymField<2> t(box);
    for (std::int64_t i = 0; i < box->size(); ++i) t(i, sym_index<2>(1, 1)) = 1.0;
    const auto v = tc.recover_v(t);
    for (std::int64_t i : box->domain_nodes()) {
      const double xn = box->coords(i)[1];
      REQUIRE(v(i, 1) == Catch::Approx(-(xn - 0.0)).margin(1e-12));
    }
  }
}

TEST_CASE("recover_v: manufactured potential on a semi-geodesic metric") {
  auto box = std::make_shared<Grid<2>>(Grid<2>::box(41, Vec<2>(0, 0), Vec<2>(1, 1), 0.1, 3));
  // block form: g = diag(1 + 0.3 sin(pi x) sin(pi y), 1) is semi-geodesic
  auto m = MetricField<2>::from_function(box, [](const Vec<2>& x) {
    Mat<2> mm;
    const double in01 = (x[0] > 0 && x[0] < 1 && x[1] > 0 && x[1] < 1)
                            ? std::sin(M_PI * x[0]) * std::sin(M_PI * x[1])
                            : 0.0;
    mm << 1.0 + 0.3 * in01, 0, 0, 1.0;
    return mm;
  });
  TensorCalculus<2> tc(m);

  // manufactured v*, zero on the inflow boundary x_n = 0
  VectorField<2> vstar(box);
  for (std::int64_t i = 0; i < box->size(); ++i) {
    const Vec<2> x = box->coords(i);
    if (x[0] < 0 || x[0] > 1 || x[1] < 0 || x[1] > 1) continue;
    vstar(i, 0) = std::sin(M_PI * x[1]) * x[0] * (1 - x[0]);
    vstar(i, 1) = x[1] * (1 - x[1]) * std::sin(M_PI * x[0]);
  }
  // t_sol with the (4.19) structure: the n-column entries are -(nabla_sym v*)_{kn}
  const auto grad = tc.sym_gradient(vstar);
  SymField<2> t_sol(box);
  for (std::int64_t i : box->domain_nodes()) {
    t_sol(i, sym_index<2>(0, 1)) = -grad(i, sym_index<2>(0, 1));
    t_sol(i, sym_index<2>(1, 1)) = -grad(i, sym_index<2>(1, 1));
  }
  const auto v = tc.recover_v(t_sol);
  double worst = 0, scale = 0;
  for (std::int64_t i : box->domain_nodes()) {
    // skip the outflow row where central stencils touch the extension
    if (box->coords(i)[1] > 1.0 - 1e-9) continue;
    for (int c = 0; c < 2; ++c) {
      worst = std::max(worst, std::abs(v(i, c) - vstar(i, c)));
      scale = std::max(scale, std::abs(vstar(i, c)));
    }
  }
  REQUIRE(worst < 0.08 * scale);  // O(spacing) recovery
}

TEST_CASE("recover_v rejects metrics that are not in semi-geodesic form") {
  auto g = disk_grid(16);
  auto m = perturbed_metric(g, 0.2);
  TensorCalculus<2> tc(m);
  SymField<2> t(g);
  REQUIRE_THROWS_AS(tc.recover_v(t), SolverFailure);
}

TEST_CASE("tensor norms") {
  auto box = std::make_shared<Grid<2>>(Grid<2>::box(21, Vec<2>(0, 0), Vec<2>(1, 1), 0.1, 3));
  MetricField<2> e(box);
  TensorCalculus<2> tc(e);

  SECTION("zero tensor: all norms vanish") {
    SymField<2> z(box);
    for (auto kind : {NormKind::L2, NormKind::C0, NormKind::C2Surrogate, NormKind::H2Surrogate})
      REQUIRE(tc.norm(z, kind) == 0.0);
  }

  SECTION("identity tensor on the unit box: L2 = sqrt(dim * area)") {
    SymField<2> id(box);
    for (std::int64_t i : box->domain_nodes()) {
      id(i, 0) = 1.0;
      id(i, 1) = 1.0;
    }
    REQUIRE(tc.norm(id, NormKind::L2) == Catch::Approx(std::sqrt(2.0)).epsilon(1e-12));
    REQUIRE(tc.norm(id, NormKind::C0) == 1.0);
  }

  SECTION("random tensor L2 matches a dense quadrature oracle") {
    const auto t = random_tensor(box, 31);
    double acc = 0;
    for (std::int64_t i : box->domain_nodes()) {
      const double w = box->volume_weight(i);
      acc += w * (sq(t(i, 0)) + sq(t(i, 1)) + 2 * sq(t(i, 2)));
    }
    REQUIRE(tc.norm(t, NormKind::L2) == Catch::Approx(std::sqrt(acc)).epsilon(1e-12));
  }
}
