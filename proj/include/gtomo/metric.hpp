#ifndef GTOMO_METRIC_HPP
#define GTOMO_METRIC_HPP

#include <optional>

#include "gtomo/grid.hpp"
#include "gtomo/spline.hpp"

namespace gtomo {

// Nodal symmetric positive-definite metric tensor, equal to the Euclidean
// identity on the collar band and outside the domain.
template <int N>
struct MetricField {
  SymField<N> g;
  int smoothness_tag = 2;

  MetricField() = default;
  explicit MetricField(GridPtr<N> grid) : g(std::move(grid)) {
    for (std::int64_t i = 0; i < this->grid().size(); ++i) set(i, Mat<N>::Identity());
  }

  const Grid<N>& grid() const { return g.grid(); }
  GridPtr<N> grid_ptr() const { return g.grid_ptr(); }

  Mat<N> at(std::int64_t node) const { return sym_unpack<N>(g.data(node)); }
  void set(std::int64_t node, const Mat<N>& m) { sym_pack<N>(m, g.data(node)); }

  static MetricField euclidean(GridPtr<N> grid) { return MetricField(std::move(grid)); }

  template <class F>  // F: Vec<N> -> Mat<N>
  static MetricField from_function(GridPtr<N> grid, F&& f) {
    MetricField m(grid);
    for (std::int64_t i = 0; i < grid->size(); ++i) m.set(i, f(grid->coords(i)));
    return m;
  }
};

// relative SPD tolerance: min eigenvalue >= 1e-10 * max eigenvalue
template <int N>
void check_spd(const MetricField<N>& m) {
  const auto& g = m.grid();
  for (std::int64_t i = 0; i < g.size(); ++i) {
    if (!g.in_domain(i)) continue;
    Eigen::SelfAdjointEigenSolver<Mat<N>> es(m.at(i), Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (!(lo > 1e-10 * std::max(hi, 1.0)))
      throw SolverFailure("metric not SPD at node " + std::to_string(i));
  }
}

template <int N>
double collar_identity_residual(const MetricField<N>& m) {
  const auto& g = m.grid();
  double r = 0;
  for (std::int64_t i = 0; i < g.size(); ++i) {
    if (g.in_domain(i) && !g.in_collar(i)) continue;
    r = std::max(r, (m.at(i) - Mat<N>::Identity()).template lpNorm<Eigen::Infinity>());
  }
  return r;
}

template <int N>
MetricField<N> inverse_metric(const MetricField<N>& m) {
  check_spd(m);
  MetricField<N> inv(m.grid_ptr());
  inv.smoothness_tag = m.smoothness_tag;
  for (std::int64_t i = 0; i < m.grid().size(); ++i) inv.set(i, m.at(i).inverse());
  return inv;
}

// Christoffel symbols Gamma^k_{ij} packed as comp = k*sym_size + sym(i,j),
// from 2nd-order central differences of g (identity extension off-grid).
template <int N>
using ChristoffelField = Field<N, N * sym_size(N)>;

namespace detail {

template <int N>
Mat<N> metric_at_offset(const MetricField<N>& m, std::array<int, N> mi, int axis, int step) {
  mi[axis] += step;
  if (!m.grid().valid(mi)) return Mat<N>::Identity();
  return m.at(m.grid().index(mi));
}

}  // namespace detail

template <int N>
ChristoffelField<N> christoffel(const MetricField<N>& m) {
  const auto& g = m.grid();
  ChristoffelField<N> out(m.grid_ptr());
  constexpr int S = sym_size(N);
  for (std::int64_t idx = 0; idx < g.size(); ++idx) {
    const auto mi = g.multi(idx);
    const Mat<N> ginv = m.at(idx).inverse();
    std::array<Mat<N>, N> dg;
    for (int a = 0; a < N; ++a)
      dg[a] = (detail::metric_at_offset<N>(m, mi, a, +1) -
               detail::metric_at_offset<N>(m, mi, a, -1)) /
              (2.0 * g.spacing[a]);
    for (int k = 0; k < N; ++k)
      for (int i = 0; i < N; ++i)
        for (int j = i; j < N; ++j) {
          double s = 0;
          for (int l = 0; l < N; ++l) s += ginv(k, l) * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
          out(idx, k * S + sym_index<N>(i, j)) = 0.5 * s;
        }
  }
  return out;
}

template <int N>
double christoffel_entry(const ChristoffelField<N>& c, std::int64_t node, int k, int i, int j) {
  return c(node, k * sym_size(N) + sym_index<N>(i, j));
}

// sup norms of a field and its central-difference derivatives up to order 2
// (the C^k surrogate; higher k is out of scope)
template <int N, int C>
double ck_sup_norm(const Field<N, C>& f, int order) {
  const auto& g = f.grid();
  auto fetch = [&](std::array<int, N> mi, int c) -> double {
    if (!g.valid(mi)) return 0.0;
    return f(g.index(mi), c);
  };
  double r = 0;
  for (std::int64_t idx = 0; idx < g.size(); ++idx) {
    if (!g.in_domain(idx)) continue;
    const auto mi = g.multi(idx);
    for (int c = 0; c < C; ++c) {
      r = std::max(r, std::abs(f(idx, c)));
      if (order < 1) continue;
      for (int a = 0; a < N; ++a) {
        auto mp = mi, mm = mi;
        mp[a] += 1;
        mm[a] -= 1;
        r = std::max(r, std::abs(fetch(mp, c) - fetch(mm, c)) / (2 * g.spacing[a]));
      }
      if (order < 2) continue;
      for (int a = 0; a < N; ++a)
        for (int b = a; b < N; ++b) {
          double d2;
          if (a == b) {
            auto mp = mi, mm = mi;
            mp[a] += 1;
            mm[a] -= 1;
            d2 = (fetch(mp, c) - 2 * f(idx, c) + fetch(mm, c)) / sq(g.spacing[a]);
          } else {
            auto pp = mi, pm = mi, mp2 = mi, mm = mi;
            pp[a] += 1; pp[b] += 1;
            pm[a] += 1; pm[b] -= 1;
            mp2[a] -= 1; mp2[b] += 1;
            mm[a] -= 1; mm[b] -= 1;
            d2 = (fetch(pp, c) - fetch(pm, c) - fetch(mp2, c) + fetch(mm, c)) /
                 (4 * g.spacing[a] * g.spacing[b]);
          }
          r = std::max(r, std::abs(d2));
        }
    }
  }
  return r;
}

template <int N>
SymField<N> sym_difference(const MetricField<N>& a, const MetricField<N>& b) {
  SymField<N> d(a.grid_ptr());
  for (std::int64_t i = 0; i < a.grid().size(); ++i)
    for (int c = 0; c < sym_size(N); ++c) d(i, c) = a.g(i, c) - b.g(i, c);
  return d;
}

// Smooth (C^2) point evaluation of a nodal metric, with everything the
// Hamiltonian flow needs: g, g^{-1}, d(g^{-1})/dx_a, sqrt(det g).
template <int N>
class MetricSampler {
 public:
  explicit MetricSampler(const MetricField<N>& m) {
    std::array<double, sym_size(N)> amb{};
    for (int i = 0; i < N; ++i) amb[i] = 1.0;
    spline_ = SplineSampler<N, sym_size(N)>(m.g, amb);
    grid_ = m.grid_ptr();
  }

  const Grid<N>& grid() const { return *grid_; }
  GridPtr<N> grid_ptr() const { return grid_; }

  Mat<N> metric(const Vec<N>& x) const {
    double v[sym_size(N)];
    spline_.value(x, v);
    return sym_unpack<N>(v);
  }

  struct Jet {
    Mat<N> g, ginv;
    std::array<Mat<N>, N> dginv;
    double sqrt_det;
  };

  Jet jet(const Vec<N>& x) const {
    double v[sym_size(N)], dv[N * sym_size(N)];
    spline_.value_grad(x, v, dv);
    Jet out;
    out.g = sym_unpack<N>(v);
    out.ginv = out.g.inverse();
    out.sqrt_det = std::sqrt(out.g.determinant());
    for (int a = 0; a < N; ++a) {
      const Mat<N> dg = sym_unpack<N>(dv + a * sym_size(N));
      out.dginv[a] = -out.ginv * dg * out.ginv;
    }
    return out;
  }

  double covector_norm(const Vec<N>& x, const Vec<N>& xi) const {
    return std::sqrt(xi.dot(metric(x).inverse() * xi));
  }

 private:
  SplineSampler<N, sym_size(N)> spline_;
  GridPtr<N> grid_;
};

}  // namespace gtomo

#endif
