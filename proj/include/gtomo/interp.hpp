#ifndef GTOMO_INTERP_HPP
#define GTOMO_INTERP_HPP

#include "gtomo/grid.hpp"

namespace gtomo {

// Multilinear interpolation stencil: 2^N nodes and weights.  Forward
// sampling and transposed deposit share this exact stencil, which is what
// makes the ray-transform adjoint pairing exact.
template <int N>
struct LinearStencil {
  std::array<std::int64_t, (1 << N)> node;
  std::array<double, (1 << N)> w;
  bool ok = false;
};

template <int N>
LinearStencil<N> linear_stencil(const Grid<N>& g, const Vec<N>& x) {
  LinearStencil<N> st;
  std::array<int, N> base;
  std::array<double, N> u;
  for (int a = 0; a < N; ++a) {
    const double t = (x[a] - g.origin[a]) / g.spacing[a];
    const int b = static_cast<int>(std::floor(t));
    if (b < 0 || b + 1 >= g.shape[a]) return st;  // outside: caller treats field as zero
    base[a] = b;
    u[a] = t - b;
  }
  for (int k = 0; k < (1 << N); ++k) {
    auto m = base;
    double w = 1.0;
    for (int a = 0; a < N; ++a) {
      if (k & (1 << a)) {
        m[a] += 1;
        w *= u[a];
      } else {
        w *= 1.0 - u[a];
      }
    }
    st.node[k] = g.index(m);
    st.w[k] = w;
  }
  st.ok = true;
  return st;
}

template <int N, int C>
void linear_sample(const Field<N, C>& f, const LinearStencil<N>& st, double* out) {
  for (int c = 0; c < C; ++c) out[c] = 0.0;
  if (!st.ok) return;
  for (int k = 0; k < (1 << N); ++k) {
    const double* p = f.data(st.node[k]);
    for (int c = 0; c < C; ++c) out[c] += st.w[k] * p[c];
  }
}

template <int N, int C>
double linear_sample1(const Field<N, C>& f, const Vec<N>& x, int c = 0) {
  const auto st = linear_stencil(f.grid(), x);
  if (!st.ok) return 0.0;
  double v = 0.0;
  for (int k = 0; k < (1 << N); ++k) v += st.w[k] * f(st.node[k], c);
  return v;
}

}  // namespace gtomo

#endif
