#ifndef GTOMO_RAY_TRANSFORM_HPP
#define GTOMO_RAY_TRANSFORM_HPP

#include "gtomo/geodesic.hpp"
#include "gtomo/interp.hpp"
#include "gtomo/tensor.hpp"

namespace gtomo {

template <int N>
struct Ray {
  Vec<N> y;        // entry point on the enlarged boundary
  Vec<N> theta;    // inward unit direction
  double mu = 1;   // |<theta, nu>|
  double weight = 1;  // quadrature weight on the boundary fan (without mu)
};

template <int N>
struct RayBundle {
  std::vector<Ray<N>> rays;
  double launch_radius = 1;

  double pairing(const std::vector<double>& a, const std::vector<double>& b) const {
    double s = 0;
    for (size_t i = 0; i < rays.size(); ++i) s += rays[i].mu * rays[i].weight * a[i] * b[i];
    return s;
  }
  double mu_norm(const std::vector<double>& a) const { return std::sqrt(pairing(a, a)); }
};

// Uniform boundary points x uniform inward directions on the enlarged circle
// (2-D) or sphere (3-D); near-tangential rays with mu < 1e-6 are dropped.
template <int N>
RayBundle<N> make_fan_bundle(const Grid<N>& grid, int n_points, int n_dirs,
                             double r1_factor = 1.08) {
  if (grid.kind != DomainKind::Ball)
    throw SolverFailure("make_fan_bundle expects a ball domain");
  if (n_points < 4 || n_dirs < 4) throw SolverFailure("make_fan_bundle: counts must be >= 4");
  RayBundle<N> b;
  b.launch_radius = grid.radius * r1_factor;
  if constexpr (N == 2) {
    const double dphi = 2 * M_PI / n_points;
    const double dpsi = M_PI / n_dirs;
    for (int p = 0; p < n_points; ++p) {
      const double phi = -M_PI + (p + 0.5) * dphi;
      const Vec<2> y(b.launch_radius * std::cos(phi), b.launch_radius * std::sin(phi));
      const Vec<2> nu = y.normalized();
      for (int q = 0; q < n_dirs; ++q) {
        const double psi = -M_PI / 2 + (q + 0.5) * dpsi;  // angle from the inward normal
        const Vec<2> inward = -nu;
        const Vec<2> tang(-nu[1], nu[0]);
        Ray<2> r;
        r.y = y;
        r.theta = std::cos(psi) * inward + std::sin(psi) * tang;
        r.mu = std::abs(std::cos(psi));
        r.weight = b.launch_radius * dphi * dpsi;
        if (r.mu >= 1e-6) b.rays.push_back(r);
      }
    }
  } else {
    // latitude bands for points, polar caps for directions
    const int np_lat = std::max(2, static_cast<int>(std::sqrt(double(n_points))));
    const int np_lon = np_lat * 2;
    const int nd_pol = std::max(2, static_cast<int>(std::sqrt(double(n_dirs))));
    const int nd_azi = nd_pol * 2;
    const double R = b.launch_radius;
    for (int ip = 0; ip < np_lat; ++ip) {
      const double th = (ip + 0.5) * M_PI / np_lat;
      for (int jp = 0; jp < np_lon; ++jp) {
        const double ph = (jp + 0.5) * 2 * M_PI / np_lon;
        const Vec<3> y(R * std::sin(th) * std::cos(ph), R * std::sin(th) * std::sin(ph),
                       R * std::cos(th));
        const Vec<3> nu = y.normalized();
        Vec<3> t1 = nu.cross(Vec<3>::Unit(std::abs(nu[2]) < 0.9 ? 2 : 0)).normalized();
        Vec<3> t2 = nu.cross(t1);
        const double wy = R * R * std::sin(th) * (M_PI / np_lat) * (2 * M_PI / np_lon);
        for (int id = 0; id < nd_pol; ++id) {
          const double a = (id + 0.5) * (M_PI / 2) / nd_pol;  // angle from inward normal
          for (int jd = 0; jd < nd_azi; ++jd) {
            const double c = (jd + 0.5) * 2 * M_PI / nd_azi;
            Ray<3> r;
            r.y = y;
            r.theta = -std::cos(a) * nu + std::sin(a) * (std::cos(c) * t1 + std::sin(c) * t2);
            r.mu = std::abs(std::cos(a));
            r.weight = wy * std::sin(a) * ((M_PI / 2) / nd_pol) * (2 * M_PI / nd_azi);
            if (r.mu >= 1e-6) b.rays.push_back(r);
          }
        }
      }
    }
  }
  return b;
}

// fan of rays from a single external center, weighted by the direction
// measure d omega; used by the measurement-path pairing
template <int N>
RayBundle<N> probe_fan_bundle(const Grid<N>& grid, const Vec<N>& y, int n_dirs) {
  static_assert(N == 2, "probe fans are two-dimensional in the experiments");
  RayBundle<N> b;
  b.launch_radius = y.norm();
  const double dist = y.norm();
  if (dist <= grid.radius) throw SolverFailure("probe center must be outside the domain");
  const double half = std::asin(grid.radius / dist) * 0.98;
  const Vec<2> to_center = (-y).normalized();
  const double base = std::atan2(to_center[1], to_center[0]);
  const double da = 2 * half / n_dirs;
  for (int q = 0; q < n_dirs; ++q) {
    const double a = base - half + (q + 0.5) * da;
    Ray<2> r;
    r.y = y;
    r.theta = Vec<2>(std::cos(a), std::sin(a));
    r.mu = std::abs(r.theta.dot(to_center));
    r.weight = da;
    b.rays.push_back(r);
  }
  return b;
}

// Geodesic ray transform of symmetric 2-tensors over a fixed bundle: traces
// every ray once, stores composite-Simpson quadrature samples, and exposes
// the forward map together with its exact transpose (backprojection).
template <int N>
class RayTransform {
 public:
  RayTransform(const MetricSampler<N>& m, const MetricField<N>& metric, const RayBundle<N>& b,
               double step, int threads = 1)
      : grid_(metric.grid_ptr()), bundle_(&b), step_(step) {
    const auto& g = *grid_;
    sqrt_det_.resize(g.size(), 1.0);
    for (std::int64_t i = 0; i < g.size(); ++i)
      sqrt_det_[i] = std::sqrt(metric.at(i).determinant());
    const double r_exit = std::max(b.launch_radius, g.radius);
    rays_.resize(b.rays.size());
    lengths_.resize(b.rays.size());
    parallel_for(static_cast<std::int64_t>(b.rays.size()), threads,
                 [&](std::int64_t lo, std::int64_t hi) {
                   for (std::int64_t i = lo; i < hi; ++i) trace_one(m, i, r_exit);
                 });
  }

  const RayBundle<N>& bundle() const { return *bundle_; }
  double max_ray_length() const {
    double r = 0;
    for (double l : lengths_) r = std::max(r, l);
    return r;
  }

  std::vector<double> forward(const SymField<N>& t, int threads = 1) const {
    std::vector<double> out(rays_.size(), 0.0);
    parallel_for(static_cast<std::int64_t>(rays_.size()), threads,
                 [&](std::int64_t lo, std::int64_t hi) {
                   for (std::int64_t r = lo; r < hi; ++r) {
                     double acc = 0;
                     for (const auto& q : rays_[r]) {
                       double val[S];
                       linear_sample(t, q.st, val);
                       double f = 0;
                       for (int c = 0; c < S; ++c) f += sym_mult<N>(c) * val[c] * q.outer[c];
                       acc += q.w * f;
                     }
                     out[r] = acc;
                   }
                 });
    return out;
  }

  // exact transpose of forward under (mu-weighted rays, volume-weighted tensors)
  SymField<N> adjoint(const std::vector<double>& sino, int threads = 1) const {
    const auto& g = *grid_;
    const int nthreads = std::max(1, threads);
    std::vector<std::vector<double>> acc(nthreads);
    parallel_for(
        static_cast<std::int64_t>(nthreads), nthreads, [&](std::int64_t lo, std::int64_t hi) {
          for (std::int64_t tid = lo; tid < hi; ++tid) {
            auto& buf = acc[tid];
            buf.assign(g.size() * S, 0.0);
            const std::int64_t chunk = (rays_.size() + nthreads - 1) / nthreads;
            const std::int64_t rlo = tid * chunk,
                               rhi = std::min<std::int64_t>(rays_.size(), rlo + chunk);
            for (std::int64_t r = rlo; r < rhi; ++r) {
              const double wr = bundle_->rays[r].mu * bundle_->rays[r].weight * sino[r];
              if (wr == 0) continue;
              for (const auto& q : rays_[r]) {
                if (!q.st.ok) continue;
                for (int k = 0; k < (1 << N); ++k) {
                  const double wk = wr * q.w * q.st.w[k];
                  double* p = buf.data() + q.st.node[k] * S;
                  for (int c = 0; c < S; ++c) p[c] += wk * q.outer[c];
                }
              }
            }
          }
        });
    SymField<N> out(grid_);
    // merge per-thread buffers in fixed order, then apply the inverse mass
    for (int tid = 0; tid < nthreads; ++tid)
      for (std::int64_t i = 0; i < g.size() * S; ++i) out.raw()[i] += acc[tid][i];
    for (std::int64_t i = 0; i < g.size(); ++i) {
      const double w = g.volume_weight(i) * sqrt_det_[i];
      for (int c = 0; c < S; ++c) out(i, c) = w > 0 ? out(i, c) / w : 0.0;
    }
    return out;
  }

  SymField<N> normal(const SymField<N>& t, int threads = 1) const {
    return adjoint(forward(t, threads), threads);
  }

  // Tikhonov-regularized solenoidal inversion: CG on (N + lambda I) t = I* s
  // in the volume-weighted inner product, then the solenoidal projection.
  SymField<N> invert(const std::vector<double>& sino, const TensorCalculus<N>& tc,
                     double reg_lambda, double cg_tol = 1e-8, int max_iter = 300,
                     int threads = 1, int* iters_out = nullptr) const {
    const SymField<N> rhs = adjoint(sino, threads);
    SymField<N> x(grid_);
    auto apply = [&](const SymField<N>& p) {
      SymField<N> ap = normal(p, threads);
      if (reg_lambda > 0)
        for (std::int64_t i : grid_->domain_nodes())
          for (int c = 0; c < S; ++c) ap(i, c) += reg_lambda * p(i, c);
      return ap;
    };
    SymField<N> r = rhs, p = rhs;
    double rz = tc.inner_t(r, r);
    const double rhs_norm = std::sqrt(std::max(rz, 1e-300));
    int it = 0;
    for (; it < max_iter && std::sqrt(rz) > cg_tol * rhs_norm; ++it) {
      const SymField<N> ap = apply(p);
      const double alpha = rz / tc.inner_t(p, ap);
      for (std::int64_t i : grid_->domain_nodes())
        for (int c = 0; c < S; ++c) {
          x(i, c) += alpha * p(i, c);
          r(i, c) -= alpha * ap(i, c);
        }
      const double rz1 = tc.inner_t(r, r);
      for (std::int64_t i : grid_->domain_nodes())
        for (int c = 0; c < S; ++c) p(i, c) = r(i, c) + (rz1 / rz) * p(i, c);
      rz = rz1;
    }
    if (iters_out) *iters_out = it;
    return tc.solenoidal_decompose(x).t_sol;
  }

 private:
  static constexpr int S = sym_size(N);
  struct QuadSample {
    LinearStencil<N> st;
    double w;
    std::array<double, S> outer;  // packed theta^j theta^k at the sample
  };

  GridPtr<N> grid_;
  const RayBundle<N>* bundle_;
  double step_;
  std::vector<std::vector<QuadSample>> rays_;
  std::vector<double> lengths_;
  std::vector<double> sqrt_det_;

  void trace_one(const MetricSampler<N>& m, std::int64_t i, double r_exit) {
    const auto& ray = bundle_->rays[i];
    PhasePoint<N> p0{ray.y, m.metric(ray.y) * ray.theta};
    const auto path = integrate_geodesic<N>(
        m, p0, step_, [r_exit](const Vec<N>& x) { return x.norm() - r_exit; },
        40.0 * r_exit);
    lengths_[i] = path.exit_time;
    // composite Simpson on a uniform resampling of the dense output
    const int M = std::max(2, 2 * static_cast<int>(std::ceil(path.exit_time / (2 * step_))));
    const double h = path.exit_time / M;
    auto& samples = rays_[i];
    samples.reserve(M + 1);
    size_t seg = 0;
    for (int k = 0; k <= M; ++k) {
      const double t = k * h;
      while (seg + 2 < path.samples.size() && path.samples[seg + 1].t < t) ++seg;
      const auto &a = path.samples[seg], &b = path.samples[seg + 1];
      const double u = (t - a.t) / (b.t - a.t);
      const Vec<N> x = detail::hermite(a.x, a.xdot, b.x, b.xdot, b.t - a.t, u);
      const Vec<N> xd = detail::hermite_deriv(a.x, a.xdot, b.x, b.xdot, b.t - a.t, u);
      QuadSample q;
      q.st = linear_stencil(*grid_, x);
      if (!q.st.ok) continue;  // outside the grid: integrand is zero there
      q.w = (h / 3.0) * (k == 0 || k == M ? 1.0 : (k % 2 ? 4.0 : 2.0));
      constexpr auto pairs = sym_pairs<N>();
      for (int c = 0; c < S; ++c) q.outer[c] = xd[pairs[c].first] * xd[pairs[c].second];
      samples.push_back(q);
    }
  }
};

}  // namespace gtomo

#endif
