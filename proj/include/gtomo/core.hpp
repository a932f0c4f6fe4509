#ifndef GTOMO_CORE_HPP
#define GTOMO_CORE_HPP

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace gtomo {

template <int N> using Vec = Eigen::Matrix<double, N, 1>;
template <int N> using Mat = Eigen::Matrix<double, N, N>;
using Cplx = std::complex<double>;

constexpr int sym_size(int n) { return n * (n + 1) / 2; }

// Packed symmetric storage: diagonal entries first, then off-diagonals.
// 2-D: (00,11,01).  3-D: (00,11,22,01,02,12).
template <int N>
constexpr std::array<std::pair<int, int>, sym_size(N)> sym_pairs() {
  std::array<std::pair<int, int>, sym_size(N)> p{};
  for (int i = 0; i < N; ++i) p[i] = {i, i};
  int c = N;
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j) p[c++] = {i, j};
  return p;
}

template <int N>
constexpr int sym_index(int i, int j) {
  if (i == j) return i;
  if (i > j) std::swap(i, j);
  // off-diagonals are laid out row by row after the diagonal block
  int c = N;
  for (int a = 0; a < N; ++a)
    for (int b = a + 1; b < N; ++b) {
      if (a == i && b == j) return c;
      ++c;
    }
  return -1;
}

// component multiplicity in the frame inner product <s,t> = sum_{jk} s_jk t_jk
template <int N>
constexpr double sym_mult(int comp) {
  return comp < N ? 1.0 : 2.0;
}

template <int N>
Mat<N> sym_unpack(const double* p) {
  Mat<N> m;
  constexpr auto pairs = sym_pairs<N>();
  for (int c = 0; c < sym_size(N); ++c) {
    auto [i, j] = pairs[c];
    m(i, j) = p[c];
    m(j, i) = p[c];
  }
  return m;
}

template <int N>
void sym_pack(const Mat<N>& m, double* p) {
  constexpr auto pairs = sym_pairs<N>();
  for (int c = 0; c < sym_size(N); ++c) p[c] = m(pairs[c].first, pairs[c].second);
}

struct TrappedRay : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotSimple : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Static-partition parallel loop. Work item order inside a chunk is
// sequential and chunks are disjoint, so results are deterministic for a
// fixed thread count.
inline void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t, std::int64_t)>& body) {
  if (threads <= 1 || n < 2) {
    body(0, n);
    return;
  }
  const int used = static_cast<int>(std::min<std::int64_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(used - 1);
  const std::int64_t chunk = (n + used - 1) / used;
  for (int t = 1; t < used; ++t) {
    const std::int64_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  body(0, std::min(n, chunk));
  for (auto& th : pool) th.join();
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline double sq(double x) { return x * x; }

}  // namespace gtomo

#endif
