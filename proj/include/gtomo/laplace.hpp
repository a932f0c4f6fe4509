#ifndef GTOMO_LAPLACE_HPP
#define GTOMO_LAPLACE_HPP

#include "gtomo/metric.hpp"

namespace gtomo {

// Divergence-form Laplace-Beltrami operator assembled cell by cell
// (bilinear elements, full Gauss quadrature, row-sum lumped mass).  The
// discrete Green identity
//     <Delta w, f>_interior + E(w, f) - B(w, f) = 0
// holds to roundoff by construction, with E the assembled energy form and
// B(w, f) = sum_boundary f_I (K w)_I the chosen discrete boundary term.
template <int N>
class LaplaceBeltrami {
 public:
  static constexpr int NC = 1 << N;  // corners per cell

  explicit LaplaceBeltrami(const MetricField<N>& metric)
      : grid_(metric.grid_ptr()) {
    const auto& g = *grid_;
    const auto& cells = g.cells();
    corner_.resize(cells.size());
    flux_.resize(cells.size() * NC * sym_size(N));
    mass_.assign(g.size(), 0.0);

    // reference data at the 2^N Gauss points
    const double gp[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
    double cellvol = 1.0;
    for (int a = 0; a < N; ++a) cellvol *= g.spacing[a];
    const double wq = cellvol / NC;
    for (int q = 0; q < NC; ++q)
      for (int c = 0; c < NC; ++c) {
        double phi = 1.0;
        for (int a = 0; a < N; ++a) {
          const double p = gp[(q >> a) & 1];
          phi *= (c >> a) & 1 ? p : 1.0 - p;
        }
        phi_[q][c] = phi;
        for (int d = 0; d < N; ++d) {
          double dphi = (c >> d) & 1 ? 1.0 : -1.0;
          dphi /= g.spacing[d];
          for (int a = 0; a < N; ++a) {
            if (a == d) continue;
            const double p = gp[(q >> a) & 1];
            dphi *= (c >> a) & 1 ? p : 1.0 - p;
          }
          dphi_[q][c][d] = dphi;
        }
      }

    for (size_t ci = 0; ci < cells.size(); ++ci) {
      for (int c = 0; c < NC; ++c) {
        auto m = cells[ci];
        for (int a = 0; a < N; ++a)
          if ((c >> a) & 1) m[a] += 1;
        corner_[ci][c] = g.index(m);
      }
      for (int q = 0; q < NC; ++q) {
        // metric at the Gauss point, multilinear from the cell corners
        Mat<N> gq = Mat<N>::Zero();
        for (int c = 0; c < NC; ++c) gq += phi_[q][c] * sym_unpack<N>(metric.g.data(corner_[ci][c]));
        const double sd = std::sqrt(gq.determinant());
        const Mat<N> A = wq * sd * gq.inverse();
        sym_pack<N>(A, &flux_[(ci * NC + q) * sym_size(N)]);
        for (int c = 0; c < NC; ++c) mass_[corner_[ci][c]] += wq * sd * phi_[q][c];
      }
    }

    max_ginv_eig_ = 1.0;
    for (std::int64_t i : g.domain_nodes()) {
      Eigen::SelfAdjointEigenSolver<Mat<N>> es(metric.at(i), Eigen::EigenvaluesOnly);
      max_ginv_eig_ = std::max(max_ginv_eig_, 1.0 / es.eigenvalues().minCoeff());
    }
  }

  const Grid<N>& grid() const { return *grid_; }
  double lumped_mass(std::int64_t node) const { return mass_[node]; }

  // stable explicit time step for the leapfrog update
  double dt_cfl(double factor = 0.45) const {
    return factor * grid_->h_min() / std::sqrt(max_ginv_eig_);
  }

  // out += K u  (stiffness action; T is double or complex<double>)
  template <class T>
  void add_stiffness(const T* u, T* out) const {
    const auto& cells = grid_->cells();
    for (size_t ci = 0; ci < cells.size(); ++ci) {
      const auto& cn = corner_[ci];
      T uc[NC];
      for (int c = 0; c < NC; ++c) uc[c] = u[cn[c]];
      T acc[NC];
      for (int c = 0; c < NC; ++c) acc[c] = T(0);
      for (int q = 0; q < NC; ++q) {
        T grad[N];
        for (int d = 0; d < N; ++d) grad[d] = T(0);
        for (int c = 0; c < NC; ++c)
          for (int d = 0; d < N; ++d) grad[d] += dphi_[q][c][d] * uc[c];
        const Mat<N> A = sym_unpack<N>(&flux_[(ci * NC + q) * sym_size(N)]);
        T flux[N];
        for (int i = 0; i < N; ++i) {
          flux[i] = T(0);
          for (int j = 0; j < N; ++j) flux[i] += A(i, j) * grad[j];
        }
        for (int c = 0; c < NC; ++c)
          for (int d = 0; d < N; ++d) acc[c] += dphi_[q][c][d] * flux[d];
      }
      for (int c = 0; c < NC; ++c) out[cn[c]] += acc[c];
    }
  }

  template <class T>
  std::vector<T> stiffness(const std::vector<T>& u) const {
    std::vector<T> out(u.size(), T(0));
    add_stiffness(u.data(), out.data());
    return out;
  }

  // Delta_g u = -K u / M on nodes with positive lumped mass
  ScalarField<N> apply(const ScalarField<N>& u) const {
    ScalarField<N> out(grid_);
    std::vector<double> ku(grid_->size(), 0.0);
    add_stiffness(u.raw().data(), ku.data());
    for (std::int64_t i = 0; i < grid_->size(); ++i)
      if (mass_[i] > 0) out(i) = -ku[i] / mass_[i];
    return out;
  }

  double energy_form(const ScalarField<N>& w, const ScalarField<N>& f) const {
    const auto kw = stiffness(w.raw());
    double e = 0;
    for (std::int64_t i = 0; i < grid_->size(); ++i) e += kw[i] * f(i);
    return e;
  }

  // the three Green identity pieces: <Delta w, f> over interior nodes,
  // E(w,f), and the boundary term B(w,f)
  std::array<double, 3> green_identity_parts(const ScalarField<N>& w,
                                             const ScalarField<N>& f) const {
    const auto kw = stiffness(w.raw());
    double interior = 0, boundary = 0, energy = 0;
    for (std::int64_t i = 0; i < grid_->size(); ++i) {
      energy += kw[i] * f(i);
      if (grid_->is_interior(i) && mass_[i] > 0) interior += (-kw[i]) * f(i);
    }
    for (const auto& b : grid_->boundary()) boundary += kw[b.node] * f(b.node);
    return {interior, energy, -boundary};
  }

  // conormal derivative sum_jk g^jk nu_j d_k u at a boundary node, one-sided
  // second-order differences toward the interior
  template <class T>
  T neumann_trace(const MetricField<N>& metric, const T* u, const BoundaryNode<N>& b) const {
    const auto& g = *grid_;
    const auto mi = g.multi(b.node);
    const Mat<N> ginv = metric.at(b.node).inverse();
    const Vec<N> gnu = ginv * b.normal;
    T val(0);
    for (int k = 0; k < N; ++k) {
      if (std::abs(gnu[k]) < 1e-14) continue;
      T dk(0);
      bool done = false;
      for (int s : {-1, +1}) {
        auto m1 = mi, m2 = mi;
        m1[k] += s;
        m2[k] += 2 * s;
        if (g.valid(m1) && g.in_domain(g.index(m1))) {
          if (g.valid(m2) && g.in_domain(g.index(m2))) {
            dk = s * (-3.0 * u[b.node] + 4.0 * u[g.index(m1)] - u[g.index(m2)]) /
                 (2.0 * g.spacing[k]);
          } else {
            dk = s * (u[g.index(m1)] - u[b.node]) / g.spacing[k];
          }
          done = true;
          if (s == -b_sign(b.normal[k])) break;  // prefer the interior side
        }
      }
      if (done) val += gnu[k] * dk;
    }
    return val;
  }

 private:
  GridPtr<N> grid_;
  std::vector<std::array<std::int64_t, NC>> corner_;
  std::vector<double> flux_;
  std::vector<double> mass_;
  double phi_[NC][NC];
  double dphi_[NC][NC][N];
  double max_ginv_eig_ = 1.0;

  static int b_sign(double x) { return x >= 0 ? 1 : -1; }
};

}  // namespace gtomo

#endif
