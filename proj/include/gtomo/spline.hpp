#ifndef GTOMO_SPLINE_HPP
#define GTOMO_SPLINE_HPP

#include "gtomo/grid.hpp"

namespace gtomo {

namespace detail {

// Interpolating cubic B-spline prefilter (Unser's recursive filter, mirror
// boundaries, pole z = sqrt(3) - 2), applied in place along one axis.
inline void bspline_prefilter_line(double* c, std::int64_t n, std::int64_t stride) {
  if (n < 2) return;
  constexpr double z = -0.26794919243112270647;  // sqrt(3) - 2
  const int horizon = std::min<std::int64_t>(n, 42);
  double sum = c[0];
  double zk = z;
  for (int k = 1; k < horizon; ++k) {
    sum += zk * c[k * stride];
    zk *= z;
  }
  c[0] = sum;
  for (std::int64_t k = 1; k < n; ++k) c[k * stride] = c[k * stride] + z * c[(k - 1) * stride];
  c[(n - 1) * stride] = (z / (z * z - 1.0)) * (c[(n - 1) * stride] + z * c[(n - 2) * stride]);
  for (std::int64_t k = n - 2; k >= 0; --k) c[k * stride] = z * (c[(k + 1) * stride] - c[k * stride]);
  const double gain = 6.0;
  for (std::int64_t k = 0; k < n; ++k) c[k * stride] *= gain;
}

inline void bspline_weights(double u, double* w) {
  const double u2 = u * u, u3 = u2 * u;
  w[0] = (1.0 - 3.0 * u + 3.0 * u2 - u3) / 6.0;
  w[1] = (4.0 - 6.0 * u2 + 3.0 * u3) / 6.0;
  w[2] = (1.0 + 3.0 * u + 3.0 * u2 - 3.0 * u3) / 6.0;
  w[3] = u3 / 6.0;
}

inline void bspline_dweights(double u, double* w) {
  const double u2 = u * u;
  w[0] = (-1.0 + 2.0 * u - u2) * 0.5;
  w[1] = (-12.0 * u + 9.0 * u2) / 6.0;
  w[2] = (3.0 + 6.0 * u - 9.0 * u2) / 6.0;
  w[3] = u2 * 0.5;
}

}  // namespace detail

// C^2 field sampler built from nodal values.  Outside a one-cell safety
// margin it returns the supplied ambient values (fields are extended by
// identity/zero well before the grid edge, so the seam carries no signal).
template <int N, int C>
class SplineSampler {
 public:
  SplineSampler() = default;

  SplineSampler(const Field<N, C>& f, std::array<double, C> ambient)
      : grid_(f.grid_ptr()), ambient_(ambient), coef_(f.raw()) {
    const auto& g = *grid_;
    for (int axis = 0; axis < N; ++axis) {
      const std::int64_t n = g.shape[axis];
      std::int64_t stride = 1;
      for (int a = N - 1; a > axis; --a) stride *= g.shape[a];
      const std::int64_t nlines = g.size() / n;
      for (std::int64_t l = 0; l < nlines; ++l) {
        // decompose line id over the remaining axes
        std::int64_t rem = l, base = 0;
        for (int a = N - 1; a >= 0; --a) {
          if (a == axis) continue;
          std::int64_t sa = 1;
          for (int b = N - 1; b > a; --b) sa *= g.shape[b];
          const std::int64_t ia = rem % g.shape[a];
          rem /= g.shape[a];
          base += ia * sa;
        }
        for (int c = 0; c < C; ++c)
          detail::bspline_prefilter_line(coef_.data() + base * C + c, n, stride * C);
      }
    }
  }

  const Grid<N>& grid() const { return *grid_; }

  void value(const Vec<N>& x, double* out) const {
    std::array<int, N> base;
    std::array<std::array<double, 4>, N> w;
    if (!locate(x, base, w, nullptr)) {
      for (int c = 0; c < C; ++c) out[c] = ambient_[c];
      return;
    }
    gather(base, w, out);
  }

  // value and per-axis derivatives; grad[a*C + c] = d out[c] / d x_a
  void value_grad(const Vec<N>& x, double* out, double* grad) const {
    std::array<int, N> base;
    std::array<std::array<double, 4>, N> w, dw;
    if (!locate(x, base, w, &dw)) {
      for (int c = 0; c < C; ++c) out[c] = ambient_[c];
      for (int k = 0; k < N * C; ++k) grad[k] = 0.0;
      return;
    }
    gather(base, w, out);
    for (int a = 0; a < N; ++a) {
      auto wa = w;
      wa[a] = dw[a];
      gather(base, wa, grad + a * C);
      const double inv_h = 1.0 / grid_->spacing[a];
      for (int c = 0; c < C; ++c) grad[a * C + c] *= inv_h;
    }
  }

 private:
  GridPtr<N> grid_;
  std::array<double, C> ambient_{};
  std::vector<double> coef_;

  bool locate(const Vec<N>& x, std::array<int, N>& base,
              std::array<std::array<double, 4>, N>& w,
              std::array<std::array<double, 4>, N>* dw) const {
    const auto& g = *grid_;
    for (int a = 0; a < N; ++a) {
      const double t = (x[a] - g.origin[a]) / g.spacing[a];
      const int b = static_cast<int>(std::floor(t));
      if (b < 1 || b + 2 >= g.shape[a]) return false;
      base[a] = b - 1;
      detail::bspline_weights(t - b, w[a].data());
      if (dw) detail::bspline_dweights(t - b, (*dw)[a].data());
    }
    return true;
  }

  void gather(const std::array<int, N>& base, const std::array<std::array<double, 4>, N>& w,
              double* out) const {
    const auto& g = *grid_;
    for (int c = 0; c < C; ++c) out[c] = 0.0;
    std::array<int, N> off{};
    while (true) {
      double ww = 1.0;
      std::int64_t idx = 0;
      for (int a = 0; a < N; ++a) {
        ww *= w[a][off[a]];
        std::int64_t sa = 1;
        for (int b = N - 1; b > a; --b) sa *= g.shape[b];
        idx += static_cast<std::int64_t>(base[a] + off[a]) * sa;
      }
      const double* p = coef_.data() + idx * C;
      for (int c = 0; c < C; ++c) out[c] += ww * p[c];
      int a = N - 1;
      while (a >= 0 && ++off[a] == 4) off[a--] = 0;
      if (a < 0) break;
    }
  }
};

}  // namespace gtomo

#endif
