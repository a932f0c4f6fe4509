#ifndef GTOMO_GEODESIC_HPP
#define GTOMO_GEODESIC_HPP

#include <functional>

#include "gtomo/metric.hpp"

namespace gtomo {

template <int N>
struct PhasePoint {
  Vec<N> x;
  Vec<N> xi;  // momentum covector
};

template <int N>
struct PathSample {
  double t;
  Vec<N> x, xi, xdot;
};

template <int N>
struct GeodesicPath {
  std::vector<PathSample<N>> samples;
  double exit_time = 0;
  Vec<N> exit_point, exit_xi, exit_xdot;
  double hamiltonian_drift = 0;  // max |H| along the path (H = 0 on the unit cosphere)
};

template <int N>
struct ScatteringRecord {
  PhasePoint<N> entry;
  PhasePoint<N> exit;
  Vec<N> exit_direction;
  double length = 0;
};

namespace detail {

template <int N>
struct PhaseDeriv {
  Vec<N> xdot, xidot;
};

template <int N>
PhaseDeriv<N> hamiltonian_rhs(const MetricSampler<N>& m, const Vec<N>& x, const Vec<N>& xi) {
  const auto jet = m.jet(x);
  PhaseDeriv<N> d;
  d.xdot = jet.ginv * xi;
  for (int k = 0; k < N; ++k) d.xidot[k] = -0.5 * xi.dot(jet.dginv[k] * xi);
  return d;
}

template <int N>
PhasePoint<N> rk4_step(const MetricSampler<N>& m, const PhasePoint<N>& p, double dt,
                       PhaseDeriv<N>* k1_out = nullptr) {
  const auto k1 = hamiltonian_rhs(m, p.x, p.xi);
  const auto k2 = hamiltonian_rhs<N>(m, p.x + 0.5 * dt * k1.xdot, p.xi + 0.5 * dt * k1.xidot);
  const auto k3 = hamiltonian_rhs<N>(m, p.x + 0.5 * dt * k2.xdot, p.xi + 0.5 * dt * k2.xidot);
  const auto k4 = hamiltonian_rhs<N>(m, p.x + dt * k3.xdot, p.xi + dt * k3.xidot);
  PhasePoint<N> q;
  q.x = p.x + (dt / 6.0) * (k1.xdot + 2 * k2.xdot + 2 * k3.xdot + k4.xdot);
  q.xi = p.xi + (dt / 6.0) * (k1.xidot + 2 * k2.xidot + 2 * k3.xidot + k4.xidot);
  if (k1_out) *k1_out = k1;
  return q;
}

// cubic Hermite on one step, u in [0,1]
template <int N>
Vec<N> hermite(const Vec<N>& x0, const Vec<N>& d0, const Vec<N>& x1, const Vec<N>& d1, double dt,
               double u) {
  const double u2 = u * u, u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * x0 + (u3 - 2 * u2 + u) * dt * d0 + (-2 * u3 + 3 * u2) * x1 +
         (u3 - u2) * dt * d1;
}

template <int N>
Vec<N> hermite_deriv(const Vec<N>& x0, const Vec<N>& d0, const Vec<N>& x1, const Vec<N>& d1,
                     double dt, double u) {
  const double u2 = u * u;
  return ((6 * u2 - 6 * u) * x0 + (3 * u2 - 4 * u + 1) * dt * d0 + (-6 * u2 + 6 * u) * x1 +
          (3 * u2 - 2 * u) * dt * d1) /
         dt;
}

}  // namespace detail

template <int N>
double hamiltonian(const MetricSampler<N>& m, const PhasePoint<N>& p) {
  const Mat<N> ginv = m.metric(p.x).inverse();
  return 0.5 * (p.xi.dot(ginv * p.xi) - 1.0);
}

// Fixed-step RK4 on the Hamiltonian system; terminates at the first exit of
// the given signed-distance domain, with the crossing located by bisection
// on the dense output of the crossing step (to 1e-10 of a step).
template <int N>
GeodesicPath<N> integrate_geodesic(const MetricSampler<N>& m, const PhasePoint<N>& p0, double step,
                                   const std::function<double(const Vec<N>&)>& domain_dist,
                                   double max_time) {
  GeodesicPath<N> path;
  PhasePoint<N> p = p0;
  double t = 0;
  auto d0 = detail::hamiltonian_rhs(m, p.x, p.xi);
  path.samples.push_back({t, p.x, p.xi, d0.xdot});
  path.hamiltonian_drift = std::abs(hamiltonian(m, p));
  while (t < max_time) {
    const PhasePoint<N> q = detail::rk4_step(m, p, step);
    const auto d1 = detail::hamiltonian_rhs(m, q.x, q.xi);
    const double t1 = t + step;
    if (domain_dist(q.x) > 0.0) {
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 40; ++it) {
        const double mid = 0.5 * (lo + hi);
        const Vec<N> xm = detail::hermite(p.x, d0.xdot, q.x, d1.xdot, step, mid);
        (domain_dist(xm) > 0.0 ? hi : lo) = mid;
      }
      const double u = 0.5 * (lo + hi);
      path.exit_time = t + u * step;
      path.exit_point = detail::hermite(p.x, d0.xdot, q.x, d1.xdot, step, u);
      path.exit_xi = detail::hermite(p.xi, d0.xidot, q.xi, d1.xidot, step, u);
      path.exit_xdot = detail::hermite_deriv(p.x, d0.xdot, q.x, d1.xdot, step, u);
      path.samples.push_back({path.exit_time, path.exit_point, path.exit_xi, path.exit_xdot});
      return path;
    }
    p = q;
    t = t1;
    d0 = d1;
    path.samples.push_back({t, p.x, p.xi, d0.xdot});
    path.hamiltonian_drift = std::max(path.hamiltonian_drift, std::abs(hamiltonian(m, p)));
  }
  throw TrappedRay("geodesic exceeded the non-trapping time budget");
}

template <int N>
GeodesicPath<N> integrate_geodesic(const MetricSampler<N>& m, const PhasePoint<N>& p0,
                                   double step) {
  const auto& g = m.grid();
  return integrate_geodesic<N>(
      m, p0, step, [&g](const Vec<N>& x) { return g.domain_distance(x); }, 10.0 * g.diameter());
}

// flow map Phi_t (no exit detection; the metric is extended by identity)
template <int N>
PhasePoint<N> geodesic_flow(const MetricSampler<N>& m, PhasePoint<N> p, double t, double step) {
  int nfull = static_cast<int>(std::floor(std::abs(t) / step));
  const double sgn = t >= 0 ? 1.0 : -1.0;
  for (int k = 0; k < nfull; ++k) p = detail::rk4_step(m, p, sgn * step);
  const double rest = std::abs(t) - nfull * step;
  if (rest > 0) p = detail::rk4_step(m, p, sgn * rest);
  return p;
}

template <int N>
ScatteringRecord<N> exit_and_scatter(const MetricSampler<N>& m, const Vec<N>& x, const Vec<N>& xi,
                                     double step) {
  const auto path = integrate_geodesic(m, {x, xi}, step);
  ScatteringRecord<N> rec;
  rec.entry = {x, xi};
  rec.exit = {path.exit_point, path.exit_xi};
  rec.exit_direction = path.exit_xdot;
  rec.length = path.exit_time;
  return rec;
}

template <int N>
Vec<N> exp_map(const MetricSampler<N>& m, const Vec<N>& y, double r, const Vec<N>& theta,
               double step) {
  if (r <= 0) return y;
  PhasePoint<N> p{y, m.metric(y) * theta};  // lower the index; g = e outside the domain anyway
  return geodesic_flow(m, p, r, step).x;
}

// ---------------------------------------------------------------------------
// geodesic polar chart around an external center

template <int N>
struct PolarCoord {
  double r = 0;
  Vec<N - 1> angles = Vec<N - 1>::Zero();
  Vec<N> xdot = Vec<N>::Zero();  // gradient of the distance function, raised
  Vec<N> xi = Vec<N>::Zero();    // covector d(distance)
  bool ok = false;
};

// Shoots unit-speed rays from an external center and inverts the exponential
// map by Newton iteration; also measures the polar volume element from a fan
// of neighboring rays.
template <int N>
class PolarChart {
 public:
  static constexpr int A = N - 1;

  PolarChart(const MetricSampler<N>& m, const Vec<N>& y, double step)
      : m_(&m), y_(y), step_(step) {
    const auto& g = m.grid();
    Vec<N> center = Vec<N>::Zero();
    if (g.kind == DomainKind::Box) center = 0.5 * (g.box_lo + g.box_hi);
    axis_to_center_ = (center - y).normalized();
    // orthonormal frame; in 3-D the chart pole sits perpendicular to the
    // center direction so the domain stays near the equator
    if constexpr (N == 2) {
      frame_[0] = axis_to_center_;
      frame_[1] = Vec<N>(-axis_to_center_[1], axis_to_center_[0]);
    } else {
      frame_[0] = axis_to_center_;
      int k = 0;
      for (int a = 1; a < N; ++a)
        if (std::abs(axis_to_center_[a]) < std::abs(axis_to_center_[k])) k = a;
      Vec<N> u = Vec<N>::Unit(k);
      frame_[1] = (u - u.dot(frame_[0]) * frame_[0]).normalized();
      if constexpr (N == 3) frame_[2] = frame_[0].cross(frame_[1]);
    }
    double rmax = 0;
    for (std::int64_t corner = 0; corner < (1 << N); ++corner) {
      std::array<int, N> mi;
      for (int a = 0; a < N; ++a) mi[a] = (corner & (1 << a)) ? g.shape[a] - 1 : 0;
      rmax = std::max(rmax, (g.coords(mi) - y).norm());
    }
    r_max_ = rmax + 4 * g.h_min();
  }

  const Vec<N>& center() const { return y_; }
  double r_max() const { return r_max_; }

  // 2-D: angle about the center direction.  3-D: (polar b from the chart
  // pole, azimuth c), Euclidean volume element r^2 sin b.
  Vec<N> direction(const Vec<A>& a) const {
    if constexpr (N == 2) {
      return std::cos(a[0]) * frame_[0] + std::sin(a[0]) * frame_[1];
    } else {
      const double b = a[0], c = a[1];
      return std::sin(b) * (std::cos(c) * frame_[0] + std::sin(c) * frame_[2]) +
             std::cos(b) * frame_[1];
    }
  }

  Vec<A> initial_angles(const Vec<N>& x) const {
    const Vec<N> d = (x - y_).normalized();
    if constexpr (N == 2) {
      return Vec<A>(std::atan2(d.dot(frame_[1]), d.dot(frame_[0])));
    } else {
      Vec<A> a;
      a[0] = std::acos(std::clamp(d.dot(frame_[1]), -1.0, 1.0));
      a[1] = std::atan2(d.dot(frame_[2]), d.dot(frame_[0]));
      return a;
    }
  }

  struct Ray {
    std::vector<PathSample<N>> s;
    double step;

    void eval(double r, Vec<N>* x, Vec<N>* xdot = nullptr, Vec<N>* xi = nullptr) const {
      const int k = std::min<int>(static_cast<int>(r / step), static_cast<int>(s.size()) - 2);
      const double u = (r - s[k].t) / step;
      const auto &p = s[k], &q = s[k + 1];
      if (x) *x = detail::hermite(p.x, p.xdot, q.x, q.xdot, step, u);
      if (xdot) *xdot = detail::hermite_deriv(p.x, p.xdot, q.x, q.xdot, step, u);
      if (xi) {
        // xi-dot recovered from neighboring xi samples is below Hermite
        // accuracy needs; linear interpolation suffices for the covector
        *xi = (1 - u) * p.xi + u * q.xi;
      }
    }
  };

  Ray shoot(const Vec<A>& angles) const {
    Ray ray;
    ray.step = step_;
    PhasePoint<N> p{y_, direction(angles)};  // g = e at the external center
    ray.s.push_back({0, p.x, p.xi, p.xi});
    auto d0 = detail::hamiltonian_rhs(*m_, p.x, p.xi);
    ray.s.back().xdot = d0.xdot;
    const int nsteps = static_cast<int>(std::ceil(r_max_ / step_));
    for (int k = 0; k < nsteps; ++k) {
      p = detail::rk4_step(*m_, p, step_);
      d0 = detail::hamiltonian_rhs(*m_, p.x, p.xi);
      ray.s.push_back({(k + 1) * step_, p.x, p.xi, d0.xdot});
    }
    return ray;
  }

  // Newton inversion of x = exp_y(r theta); warm start strongly recommended
  PolarCoord<N> solve(const Vec<N>& x, const PolarCoord<N>* warm = nullptr) const {
    PolarCoord<N> pc;
    Vec<A> a = warm && warm->ok ? warm->angles : initial_angles(x);
    double r = warm && warm->ok ? warm->r : (x - y_).norm();
    const double tol = 1e-10 * std::max(1.0, r_max_);
    const double da = 1e-5;
    for (int it = 0; it < 40; ++it) {
      const Ray ray = shoot(a);
      Vec<N> xr, xd, xic;
      ray.eval(r, &xr, &xd, &xic);
      const Vec<N> f = xr - x;
      if (f.norm() < tol) {
        pc.r = r;
        pc.angles = a;
        pc.xdot = xd;
        pc.xi = xic;
        pc.ok = true;
        return pc;
      }
      Mat<N> J;
      J.col(0) = xd;
      for (int k = 0; k < A; ++k) {
        Vec<A> ap = a;
        ap[k] += da;
        Vec<N> xp;
        shoot(ap).eval(r, &xp);
        J.col(k + 1) = (xp - xr) / da;
      }
      const Vec<N> delta = J.fullPivLu().solve(-f);
      r += delta[0];
      for (int k = 0; k < A; ++k) a[k] += delta[k + 1];
      r = std::clamp(r, 0.0, r_max_);
      if (!std::isfinite(r)) break;
    }
    return pc;  // not ok: caustic / fold at this resolution
  }

  // alpha_g(r,theta): squared volume element in polar coordinates,
  // from a central fan of width dtheta = 1e-3 around the ray
  double alpha(double r, const Vec<A>& angles, double dtheta = 1e-3) const {
    Mat<N> J;
    Vec<N> x0, xd;
    shoot(angles).eval(r, &x0, &xd);
    J.col(0) = xd;
    for (int k = 0; k < A; ++k) {
      Vec<A> ap = angles, am = angles;
      ap[k] += dtheta;
      am[k] -= dtheta;
      Vec<N> xp, xm;
      shoot(ap).eval(r, &xp);
      shoot(am).eval(r, &xm);
      J.col(k + 1) = (xp - xm) / (2 * dtheta);
    }
    const double det = J.determinant();
    if (!(std::abs(det) > 0))
      throw NotSimple("degenerate polar Jacobian (conjugate point?)");
    const double sd = std::sqrt(m_->metric(x0).determinant());
    const double half = sd * std::abs(det);
    return half * half;
  }

 private:
  const MetricSampler<N>* m_;
  Vec<N> y_;
  double step_;
  double r_max_ = 0;
  Vec<N> axis_to_center_;
  std::array<Vec<N>, N> frame_;
};

template <int N>
double volume_element_polar(const MetricSampler<N>& m, const Vec<N>& y, double r,
                            const Vec<N - 1>& angles, double step, double dtheta = 1e-3) {
  PolarChart<N> chart(m, y, step);
  return chart.alpha(r, angles, dtheta);
}

// ---------------------------------------------------------------------------
// semi-geodesic coordinates and metric pullback

template <int N>
struct DiffeoField {
  Field<N, N> psi;          // forward map per node
  Field<N, N * N> jac;      // psi' per node, row-major
  double min_det = 0;

  Mat<N> jacobian(std::int64_t node) const {
    Mat<N> J;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) J(i, j) = jac(node, i * N + j);
    return J;
  }
  Vec<N> map(std::int64_t node) const {
    Vec<N> v;
    for (int i = 0; i < N; ++i) v[i] = psi(node, i);
    return v;
  }
};

// Flows the frame plane x_n = -rho along e_n-directed geodesics and returns
// the map (z, s) -> x_g(z, s) on grid nodes together with its Jacobian.
// The n-th Jacobian column is the exact ray velocity; transverse columns are
// central differences across neighboring columns.
template <int N>
DiffeoField<N> semi_geodesic_map(const MetricField<N>& metric, double step) {
  const MetricSampler<N> m(metric);
  const auto& g = metric.grid();
  DiffeoField<N> out{Field<N, N>(metric.grid_ptr()), Field<N, N * N>(metric.grid_ptr())};
  Field<N, N> xdot_store(metric.grid_ptr());

  double extent = 0;
  for (int a = 0; a < N; ++a)
    extent = std::max(extent, std::max(std::abs(g.origin[a]),
                                       std::abs(g.origin[a] + (g.shape[a] - 1) * g.spacing[a])));
  const double rho = extent + 2 * g.h_min();

  // one ray per transverse column
  std::int64_t ncols = 1;
  for (int a = 0; a < N - 1; ++a) ncols *= g.shape[a];
  const int nz = g.shape[N - 1];
  for (std::int64_t col = 0; col < ncols; ++col) {
    std::array<int, N> mi{};
    std::int64_t rem = col;
    for (int a = N - 2; a >= 0; --a) {
      mi[a] = static_cast<int>(rem % g.shape[a]);
      rem /= g.shape[a];
    }
    mi[N - 1] = 0;
    Vec<N> start = g.coords(mi);
    start[N - 1] = -rho;
    PhasePoint<N> p{start, Vec<N>::Unit(N - 1)};
    const double s_total = g.coords(mi)[N - 1] + (nz - 1) * g.spacing[N - 1] + rho;
    // march the column, landing exactly on each node's arclength
    double s_prev = 0;
    for (int iz = 0; iz < nz; ++iz) {
      mi[N - 1] = iz;
      const double s_here = g.coords(mi)[N - 1] + rho;
      double remaining = s_here - s_prev;
      while (remaining > 1e-14) {
        const double dt = std::min(step, remaining);
        p = detail::rk4_step(m, p, dt);
        remaining -= dt;
      }
      s_prev = s_here;
      const auto idx = g.index(mi);
      const auto d = detail::hamiltonian_rhs(m, p.x, p.xi);
      for (int i = 0; i < N; ++i) {
        out.psi(idx, i) = p.x[i];
        xdot_store(idx, i) = d.xdot[i];
      }
    }
    (void)s_total;
  }

  out.min_det = 1e300;
  for (std::int64_t idx = 0; idx < g.size(); ++idx) {
    const auto mi = g.multi(idx);
    Mat<N> J;
    for (int a = 0; a < N - 1; ++a) {
      // 4th-order transverse stencil; the pullback residual check needs the
      // Jacobian well below the O(h^2) floor
      if (mi[a] >= 2 && mi[a] + 2 < g.shape[a]) {
        auto m1 = mi, m2 = mi, p1 = mi, p2 = mi;
        m1[a] -= 1; m2[a] -= 2; p1[a] += 1; p2[a] += 2;
        for (int i = 0; i < N; ++i)
          J(i, a) = (-out.psi(g.index(p2), i) + 8 * out.psi(g.index(p1), i) -
                     8 * out.psi(g.index(m1), i) + out.psi(g.index(m2), i)) /
                    (12 * g.spacing[a]);
      } else {
        auto mp = mi, mm = mi;
        mp[a] = std::min(mp[a] + 1, g.shape[a] - 1);
        mm[a] = std::max(mm[a] - 1, 0);
        const double dz = (mp[a] - mm[a]) * g.spacing[a];
        for (int i = 0; i < N; ++i)
          J(i, a) = (out.psi(g.index(mp), i) - out.psi(g.index(mm), i)) / dz;
      }
    }
    for (int i = 0; i < N; ++i) J(i, N - 1) = xdot_store(idx, i);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) out.jac(idx, i * N + j) = J(i, j);
    if (g.in_domain(idx)) out.min_det = std::min(out.min_det, J.determinant());
  }
  if (out.min_det <= 0) throw NotSimple("semi-geodesic map not simple at resolution");
  return out;
}

// psi*g = J^T (g o psi) J, sampling g smoothly at the mapped points
template <int N>
MetricField<N> pullback_metric(const MetricField<N>& metric, const DiffeoField<N>& d) {
  const MetricSampler<N> m(metric);
  MetricField<N> out(metric.grid_ptr());
  out.smoothness_tag = std::max(0, metric.smoothness_tag - 1);
  for (std::int64_t idx = 0; idx < metric.grid().size(); ++idx) {
    const Mat<N> J = d.jacobian(idx);
    const Mat<N> G = m.metric(d.map(idx));
    out.set(idx, J.transpose() * G * J);
  }
  return out;
}

// ---------------------------------------------------------------------------
// admissibility of a metric pair, per the definition in the source problem:
// identity collar, small C^k difference, and matching travel time/scattering
// for e_n-directed rays from the incoming boundary part.

template <int N>
struct AdmissibilityReport {
  double collar_residual_1 = 0, collar_residual_2 = 0;
  double c0_difference = 0, c2_difference = 0;
  double max_length_gap = 0, max_exit_point_gap = 0, max_exit_dir_gap = 0;
  int fan_size = 0;
  bool pass = false;
};

template <int N>
AdmissibilityReport<N> admissible_pair_check(const MetricField<N>& g1, const MetricField<N>& g2,
                                             double tol, int n_fan = 16, double step = 2e-3) {
  if (g1.grid_ptr().get() != g2.grid_ptr().get())
    throw SolverFailure("admissible_pair_check: metrics live on different grids");
  AdmissibilityReport<N> rep;
  rep.collar_residual_1 = collar_identity_residual(g1);
  rep.collar_residual_2 = collar_identity_residual(g2);
  const auto diff = sym_difference(g1, g2);
  rep.c0_difference = ck_sup_norm(diff, 0);
  rep.c2_difference = ck_sup_norm(diff, 2);

  const MetricSampler<N> s1(g1), s2(g2);
  const auto& g = g1.grid();
  const Vec<N> en = Vec<N>::Unit(N - 1);
  std::vector<Vec<N>> fan;
  if (g.kind == DomainKind::Ball) {
    for (int k = 0; k < 4 * n_fan; ++k) {
      const double a = -M_PI + (k + 0.5) * (2 * M_PI / (4 * n_fan));
      Vec<N> x = Vec<N>::Zero();
      x[0] = g.radius * std::cos(a);
      x[N - 1] = g.radius * std::sin(a);
      if (g.boundary_normal_at(x).dot(en) < -0.2) fan.push_back(x);
      if (static_cast<int>(fan.size()) == n_fan) break;
    }
  } else {
    for (int k = 0; k < n_fan; ++k) {
      Vec<N> x = 0.5 * (g.box_lo + g.box_hi);
      x[0] = g.box_lo[0] + (k + 0.5) * (g.box_hi[0] - g.box_lo[0]) / n_fan;
      x[N - 1] = g.box_lo[N - 1];
      fan.push_back(x);
    }
  }
  for (const auto& x : fan) {
    const auto r1 = exit_and_scatter(s1, x, en, step);
    const auto r2 = exit_and_scatter(s2, x, en, step);
    rep.max_length_gap = std::max(rep.max_length_gap, std::abs(r1.length - r2.length));
    rep.max_exit_point_gap =
        std::max(rep.max_exit_point_gap, (r1.exit.x - r2.exit.x).norm());
    rep.max_exit_dir_gap =
        std::max(rep.max_exit_dir_gap, (r1.exit_direction - r2.exit_direction).norm());
  }
  rep.fan_size = static_cast<int>(fan.size());
  rep.pass = rep.collar_residual_1 <= tol && rep.collar_residual_2 <= tol &&
             rep.max_length_gap <= tol && rep.max_exit_point_gap <= tol &&
             rep.max_exit_dir_gap <= tol;
  return rep;
}

}  // namespace gtomo

#endif
