#ifndef GTOMO_TENSOR_HPP
#define GTOMO_TENSOR_HPP

#include <Eigen/Sparse>

#include "gtomo/metric.hpp"

namespace gtomo {

enum class NormKind { L2, C0, C2Surrogate, H2Surrogate };

template <int N>
struct DecompositionResult {
  SymField<N> t_sol;
  VectorField<N> v;
  double orthogonality_residual = 0;
  double divergence_residual = 0;
  int cg_iterations = 0;
};

// Symmetric 2-tensor calculus over one metric: the symmetrized covariant
// gradient as a sparse operator, its exact volume-weighted adjoint, the
// solenoidal/potential splitting, and the x_n-line recovery of the potential
// from the solenoidal part when the metric is in semi-geodesic form.
template <int N>
class TensorCalculus {
 public:
  static constexpr int S = sym_size(N);

  explicit TensorCalculus(const MetricField<N>& metric)
      : grid_(metric.grid_ptr()), metric_(&metric), gamma_(christoffel(metric)) {
    const auto& g = *grid_;
    vmap_.assign(g.size(), -1);
    for (std::int64_t i : g.domain_nodes()) {
      vmap_[i] = static_cast<int>(vnodes_.size());
      vnodes_.push_back(i);
    }
    build_operator();
  }

  const Grid<N>& grid() const { return *grid_; }
  const ChristoffelField<N>& gamma() const { return gamma_; }

  // (nabla_sym v)_{jk} = (d_j v_k + d_k v_j)/2 - Gamma^m_{jk} v_m
  SymField<N> sym_gradient(const VectorField<N>& v) const {
    SymField<N> out(grid_);
    Eigen::VectorXd vv = restrict_v(v);
    Eigen::VectorXd tt = op_ * vv;
    scatter_t(tt, out);
    return out;
  }

  // exact discrete adjoint of sym_gradient under the volume-weighted inner
  // products; this is the divergence operator delta^s up to sign conventions
  VectorField<N> divergence(const SymField<N>& t) const {
    Eigen::VectorXd tt = restrict_t(t);
    tt.array() *= wt_.array();
    Eigen::VectorXd vv = op_.transpose() * tt;
    vv.array() /= wv_.array();
    VectorField<N> out(grid_);
    for (size_t k = 0; k < vnodes_.size(); ++k)
      for (int a = 0; a < N; ++a) out(vnodes_[k], a) = vv[k * N + a];
    return out;
  }

  double inner_t(const SymField<N>& a, const SymField<N>& b) const {
    double s = 0;
    for (std::int64_t i : grid_->domain_nodes()) {
      const double w = grid_->volume_weight(i) * sqrt_det_[vmap_[i]];
      for (int c = 0; c < S; ++c) s += w * sym_mult<N>(c) * a(i, c) * b(i, c);
    }
    return s;
  }

  double inner_v(const VectorField<N>& a, const VectorField<N>& b) const {
    double s = 0;
    for (std::int64_t i : grid_->domain_nodes()) {
      const double w = grid_->volume_weight(i) * sqrt_det_[vmap_[i]];
      for (int c = 0; c < N; ++c) s += w * a(i, c) * b(i, c);
    }
    return s;
  }

  double norm_t(const SymField<N>& a) const { return std::sqrt(inner_t(a, a)); }

  // Solve delta^s nabla_sym v = delta^s t with v = 0 on the boundary by
  // conjugate gradients on the SPD normal operator; t_sol = t - nabla_sym v.
  DecompositionResult<N> solenoidal_decompose(const SymField<N>& t, double cg_tol = 1e-10,
                                              int max_iter = 4000,
                                              const VectorField<N>* v0 = nullptr) const {
    const Eigen::VectorXd tt = restrict_t(t);
    Eigen::VectorXd rhs = op_.transpose() * Eigen::VectorXd(tt.array() * wt_.array());
    Eigen::VectorXd rhs_i = restrict_interior(rhs);

    Eigen::VectorXd x = Eigen::VectorXd::Zero(rhs_i.size());
    if (v0) x = restrict_interior(restrict_v(*v0));
    auto apply = [&](const Eigen::VectorXd& p) {
      Eigen::VectorXd pf = prolong_interior(p);
      Eigen::VectorXd sp = op_ * pf;
      sp.array() *= wt_.array();
      return restrict_interior(Eigen::VectorXd(op_.transpose() * sp));
    };

    Eigen::VectorXd r = rhs_i - apply(x);
    Eigen::VectorXd z = r.array() / diag_i_.array();
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    const double rhs_norm = std::max(rhs_i.norm(), 1e-300);
    int it = 0;
    for (; it < max_iter && r.norm() > cg_tol * rhs_norm; ++it) {
      const Eigen::VectorXd ap = apply(p);
      const double alpha = rz / p.dot(ap);
      x += alpha * p;
      r -= alpha * ap;
      z = r.array() / diag_i_.array();
      const double rz1 = r.dot(z);
      p = z + (rz1 / rz) * p;
      rz = rz1;
    }
    if (r.norm() > cg_tol * rhs_norm && it >= max_iter)
      throw SolverFailure("solenoidal_decompose: CG did not converge");

    DecompositionResult<N> res{SymField<N>(grid_), VectorField<N>(grid_)};
    const Eigen::VectorXd vf = prolong_interior(x);
    for (size_t k = 0; k < vnodes_.size(); ++k)
      for (int a = 0; a < N; ++a) res.v(vnodes_[k], a) = vf[k * N + a];
    const auto grad = sym_gradient(res.v);
    for (std::int64_t i : grid_->domain_nodes())
      for (int c = 0; c < S; ++c) res.t_sol(i, c) = t(i, c) - grad(i, c);
    res.cg_iterations = it;
    const double t2 = std::max(inner_t(t, t), 1e-300);
    res.orthogonality_residual = std::abs(inner_t(res.t_sol, grad)) / t2;
    const auto div = divergence(res.t_sol);
    res.divergence_residual = std::sqrt(inner_v(div, div) / t2);
    return res;
  }

  // Lemma-style recovery of the potential from the n-column of t_sol when
  // the metric is in semi-geodesic form: v_n by line integration of -t_nn,
  // the transverse components by a trapezoidal ODE march in x_n.
  VectorField<N> recover_v(const SymField<N>& t_sol) const {
    const auto& g = *grid_;
    for (std::int64_t i : g.domain_nodes()) {
      const Mat<N> m = metric_->at(i);
      for (int a = 0; a < N; ++a)
        if (std::abs(m(a, N - 1) - (a == N - 1 ? 1.0 : 0.0)) > 1e-8)
          throw SolverFailure("recover_v: metric is not in semi-geodesic form");
    }
    VectorField<N> v(grid_);
    const double h = g.spacing[N - 1];
    const int nz = g.shape[N - 1];
    std::int64_t ncols = 1;
    for (int a = 0; a < N - 1; ++a) ncols *= g.shape[a];

    auto col_index = [&](std::int64_t col, int iz) {
      std::array<int, N> mi{};
      std::int64_t rem = col;
      for (int a = N - 2; a >= 0; --a) {
        mi[a] = static_cast<int>(rem % g.shape[a]);
        rem /= g.shape[a];
      }
      mi[N - 1] = iz;
      return g.index(mi);
    };

    // pass 1: v_n(x', x_n) = -int t^sol_nn from the inflow boundary
    for (std::int64_t col = 0; col < ncols; ++col) {
      bool inside = false;
      double acc = 0, prev = 0;
      for (int iz = 0; iz < nz; ++iz) {
        const auto idx = col_index(col, iz);
        if (!g.in_domain(idx)) {
          inside = false;
          continue;
        }
        const double cur = t_sol(idx, sym_index<N>(N - 1, N - 1));
        if (!inside) {
          acc = 0;  // inflow node of this column
          inside = true;
        } else {
          acc -= 0.5 * h * (prev + cur);
        }
        prev = cur;
        v(idx, N - 1) = acc;
      }
    }

    // pass 2: transverse components, trapezoidal in x_n with the
    // Christoffel coupling handled implicitly
    auto dvn = [&](std::int64_t col, int iz, int j) {
      // d_j v_n with the same 4th-order central/zero-extension stencil as
      // sym_gradient, so the decompose -> recover pair stays consistent
      std::array<int, N> mi = g.multi(col_index(col, iz));
      auto fetch = [&](int off) -> double {
        auto mm = mi;
        mm[j] += off;
        if (!g.valid(mm) || !g.in_domain(g.index(mm))) return 0.0;
        return v(g.index(mm), N - 1);
      };
      return (8.0 * (fetch(1) - fetch(-1)) - (fetch(2) - fetch(-2))) / (12.0 * g.spacing[j]);
    };
    auto rhs_f = [&](std::int64_t col, int iz, const Eigen::Matrix<double, N - 1, 1>& vj,
                     double vn) {
      const auto idx = col_index(col, iz);
      Eigen::Matrix<double, N - 1, 1> f;
      for (int j = 0; j < N - 1; ++j) {
        double s = -2.0 * t_sol(idx, sym_index<N>(j, N - 1)) - dvn(col, iz, j);
        for (int m = 0; m < N - 1; ++m)
          s += 2.0 * christoffel_entry(gamma_, idx, m, N - 1, j) * vj[m];
        s += 2.0 * christoffel_entry(gamma_, idx, N - 1, N - 1, j) * vn;
        f[j] = s;
      }
      return f;
    };

    for (std::int64_t col = 0; col < ncols; ++col) {
      bool inside = false;
      Eigen::Matrix<double, N - 1, 1> vj = Eigen::Matrix<double, N - 1, 1>::Zero();
      for (int iz = 0; iz < nz; ++iz) {
        const auto idx = col_index(col, iz);
        if (!g.in_domain(idx)) {
          inside = false;
          continue;
        }
        if (!inside) {
          vj.setZero();
          inside = true;
        } else {
          const auto f0 = rhs_f(col, iz - 1, vj, v(col_index(col, iz - 1), N - 1));
          // implicit half: (I - h A/2) v^{k+1} = v^k + h/2 (f0 + b(k+1))
          Eigen::Matrix<double, N - 1, N - 1> A;
          Eigen::Matrix<double, N - 1, 1> b;
          for (int j = 0; j < N - 1; ++j) {
            b[j] = -2.0 * t_sol(idx, sym_index<N>(j, N - 1)) - dvn(col, iz, j) +
                   2.0 * christoffel_entry(gamma_, idx, N - 1, N - 1, j) * v(idx, N - 1);
            for (int m = 0; m < N - 1; ++m)
              A(j, m) = 2.0 * christoffel_entry(gamma_, idx, m, N - 1, j);
          }
          const Eigen::Matrix<double, N - 1, N - 1> lhs =
              Eigen::Matrix<double, N - 1, N - 1>::Identity() - 0.5 * h * A;
          vj = lhs.fullPivLu().solve(vj + 0.5 * h * (f0 + b));
        }
        for (int j = 0; j < N - 1; ++j) v(idx, j) = vj[j];
      }
    }
    return v;
  }

  double norm(const SymField<N>& t, NormKind kind) const {
    switch (kind) {
      case NormKind::L2:
        return norm_t(t);
      case NormKind::C0: {
        double r = 0;
        for (std::int64_t i : grid_->domain_nodes())
          for (int c = 0; c < S; ++c) r = std::max(r, std::abs(t(i, c)));
        return r;
      }
      case NormKind::C2Surrogate:
        return ck_sup_norm(t, 2);
      case NormKind::H2Surrogate:
        return h2_surrogate(t);
    }
    return 0;
  }

  template <int C>
  double h1_surrogate(const Field<N, C>& f) const {
    const auto& g = *grid_;
    auto fetch = [&](std::array<int, N> mi, int c) -> double {
      if (!g.valid(mi)) return 0.0;
      return f(g.index(mi), c);
    };
    double acc = 0;
    for (std::int64_t i : grid_->domain_nodes()) {
      const auto mi = g.multi(i);
      const double w = grid_->volume_weight(i);
      for (int c = 0; c < C; ++c) {
        const double mult = C == S ? sym_mult<N>(c) : 1.0;
        double s = sq(f(i, c));
        for (int a = 0; a < N; ++a) {
          auto mp = mi, mm = mi;
          mp[a] += 1;
          mm[a] -= 1;
          s += sq((fetch(mp, c) - fetch(mm, c)) / (2 * g.spacing[a]));
        }
        acc += w * mult * s;
      }
    }
    return std::sqrt(acc);
  }

  template <int C>
  double h2_surrogate(const Field<N, C>& f) const {
    const auto& g = *grid_;
    auto fetch = [&](std::array<int, N> mi, int c) -> double {
      if (!g.valid(mi)) return 0.0;
      return f(g.index(mi), c);
    };
    double acc = 0;
    for (std::int64_t i : grid_->domain_nodes()) {
      const auto mi = g.multi(i);
      const double w = grid_->volume_weight(i);
      for (int c = 0; c < C; ++c) {
        const double mult = C == S ? sym_mult<N>(c) : 1.0;
        double s = sq(f(i, c));
        for (int a = 0; a < N; ++a) {
          auto mp = mi, mm = mi;
          mp[a] += 1;
          mm[a] -= 1;
          s += sq((fetch(mp, c) - fetch(mm, c)) / (2 * g.spacing[a]));
          s += sq((fetch(mp, c) - 2 * f(i, c) + fetch(mm, c)) / sq(g.spacing[a]));
        }
        for (int a = 0; a < N; ++a)
          for (int b = a + 1; b < N; ++b) {
            auto pp = mi, pm = mi, mp2 = mi, mm2 = mi;
            pp[a] += 1; pp[b] += 1;
            pm[a] += 1; pm[b] -= 1;
            mp2[a] -= 1; mp2[b] += 1;
            mm2[a] -= 1; mm2[b] -= 1;
            s += 2 * sq((fetch(pp, c) - fetch(pm, c) - fetch(mp2, c) + fetch(mm2, c)) /
                        (4 * g.spacing[a] * g.spacing[b]));
          }
        acc += w * mult * s;
      }
    }
    return std::sqrt(acc);
  }

 private:
  GridPtr<N> grid_;
  const MetricField<N>* metric_;
  ChristoffelField<N> gamma_;
  std::vector<std::int64_t> vnodes_;
  std::vector<int> vmap_;
  Eigen::SparseMatrix<double> op_;  // sym_gradient as (S * nd) x (N * nd)
  Eigen::VectorXd wt_, wv_, diag_i_;
  std::vector<double> sqrt_det_;
  std::vector<int> interior_dofs_;

  Eigen::VectorXd restrict_v(const VectorField<N>& v) const {
    Eigen::VectorXd out(vnodes_.size() * N);
    for (size_t k = 0; k < vnodes_.size(); ++k)
      for (int a = 0; a < N; ++a) out[k * N + a] = v(vnodes_[k], a);
    return out;
  }
  Eigen::VectorXd restrict_t(const SymField<N>& t) const {
    Eigen::VectorXd out(vnodes_.size() * S);
    for (size_t k = 0; k < vnodes_.size(); ++k)
      for (int c = 0; c < S; ++c) out[k * S + c] = t(vnodes_[k], c);
    return out;
  }
  void scatter_t(const Eigen::VectorXd& tt, SymField<N>& out) const {
    for (size_t k = 0; k < vnodes_.size(); ++k)
      for (int c = 0; c < S; ++c) out(vnodes_[k], c) = tt[k * S + c];
  }
  Eigen::VectorXd restrict_interior(const Eigen::VectorXd& full) const {
    Eigen::VectorXd out(interior_dofs_.size());
    for (size_t k = 0; k < interior_dofs_.size(); ++k) out[k] = full[interior_dofs_[k]];
    return out;
  }
  Eigen::VectorXd prolong_interior(const Eigen::VectorXd& inner) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(vnodes_.size() * N);
    for (size_t k = 0; k < interior_dofs_.size(); ++k) out[interior_dofs_[k]] = inner[k];
    return out;
  }

  void build_operator() {
    const auto& g = *grid_;
    const std::int64_t nd = static_cast<std::int64_t>(vnodes_.size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(nd * S * (2 * N + N));
    sqrt_det_.resize(nd);

    for (std::int64_t k = 0; k < nd; ++k) {
      const auto idx = vnodes_[k];
      sqrt_det_[k] = std::sqrt(metric_->at(idx).determinant());
      const auto mi = g.multi(idx);
      for (int i = 0; i < N; ++i)
        for (int j = i; j < N; ++j) {
          const std::int64_t row = k * S + sym_index<N>(i, j);
          // (d_i v_j + d_j v_i)/2 with 4th-order central differences;
          // off-grid and exterior v-values are zero.  The high order keeps
          // the ray-transform kernel property visible at grid resolution.
          for (auto [da, comp] : {std::pair{i, j}, std::pair{j, i}}) {
            const double c1 = 0.5 * 8.0 / (12.0 * g.spacing[da]);
            const double c2 = 0.5 * 1.0 / (12.0 * g.spacing[da]);
            for (auto [off, cc] : {std::pair{1, c1}, std::pair{-1, -c1}, std::pair{2, -c2},
                                   std::pair{-2, c2}}) {
              auto mm = mi;
              mm[da] += off;
              if (g.valid(mm) && vmap_[g.index(mm)] >= 0)
                trip.emplace_back(row, vmap_[g.index(mm)] * N + comp, cc);
            }
          }
          for (int m = 0; m < N; ++m) {
            const double gam = christoffel_entry(gamma_, idx, m, i, j);
            if (gam != 0.0) trip.emplace_back(row, k * N + m, -gam);
          }
        }
    }
    op_.resize(nd * S, nd * N);
    op_.setFromTriplets(trip.begin(), trip.end());

    wt_.resize(nd * S);
    wv_.resize(nd * N);
    for (std::int64_t k = 0; k < nd; ++k) {
      const double w = g.volume_weight(vnodes_[k]) * sqrt_det_[k];
      for (int c = 0; c < S; ++c) wt_[k * S + c] = w * sym_mult<N>(c);
      for (int a = 0; a < N; ++a) wv_[k * N + a] = w;
    }

    for (std::int64_t k = 0; k < nd; ++k)
      if (g.is_interior(vnodes_[k]))
        for (int a = 0; a < N; ++a) interior_dofs_.push_back(static_cast<int>(k * N + a));

    // Jacobi diagonal of the interior normal operator
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(nd * N);
    for (int col = 0; col < op_.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(op_, col); it; ++it)
        diag[it.col()] += wt_[it.row()] * sq(it.value());
    diag_i_ = restrict_interior(diag);
    for (auto& d : diag_i_) d = std::max(d, 1e-300);
  }
};

}  // namespace gtomo

#endif
