#ifndef GTOMO_GRID_HPP
#define GTOMO_GRID_HPP

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <vector>

#include "gtomo/core.hpp"

namespace gtomo {

enum class NodeMask : std::uint8_t { Exterior = 0, Boundary = 1, Interior = 2 };
enum class DomainKind { Ball, Box };

template <int N>
struct BoundaryNode {
  std::int64_t node;
  Vec<N> normal;   // outward unit normal (analytic for the ball, axis for the box)
  double weight;   // surface measure share
  double param;    // ordering parameter along the boundary (angle in 2-D)
};

// Cartesian node grid carrying a stair-stepped domain mask.  The domain
// (ball or box) sits strictly inside the grid; the surrounding margin nodes
// let central stencils use the identity/zero extension of fields.
template <int N>
class Grid {
 public:
  std::array<int, N> shape{};
  std::array<double, N> spacing{};
  Vec<N> origin = Vec<N>::Zero();
  DomainKind kind = DomainKind::Ball;
  double radius = 1.0;          // ball
  Vec<N> box_lo, box_hi;        // box
  double collar_width = 0.25;

  Grid() = default;

  static Grid ball(int n_domain, double radius, double collar_width, int margin = 4) {
    Grid g;
    g.kind = DomainKind::Ball;
    g.radius = radius;
    g.collar_width = collar_width;
    const double h = 2.0 * radius / (n_domain - 1);
    for (int a = 0; a < N; ++a) {
      g.shape[a] = n_domain + 2 * margin;
      g.spacing[a] = h;
      g.origin[a] = -radius - margin * h;
    }
    g.finalize();
    return g;
  }

  static Grid box(int n_domain, const Vec<N>& lo, const Vec<N>& hi, double collar_width, int margin = 4) {
    Grid g;
    g.kind = DomainKind::Box;
    g.box_lo = lo;
    g.box_hi = hi;
    g.collar_width = collar_width;
    for (int a = 0; a < N; ++a) {
      g.shape[a] = n_domain + 2 * margin;
      g.spacing[a] = (hi[a] - lo[a]) / (n_domain - 1);
      g.origin[a] = lo[a] - margin * g.spacing[a];
    }
    g.finalize();
    return g;
  }

  std::int64_t size() const { return total_; }
  double h_min() const { return *std::min_element(spacing.begin(), spacing.end()); }

  std::int64_t index(const std::array<int, N>& m) const {
    std::int64_t idx = 0;
    for (int a = 0; a < N; ++a) idx += static_cast<std::int64_t>(m[a]) * stride_[a];
    return idx;
  }
  std::array<int, N> multi(std::int64_t idx) const {
    std::array<int, N> m;
    for (int a = 0; a < N; ++a) {
      m[a] = static_cast<int>(idx / stride_[a]);
      idx -= static_cast<std::int64_t>(m[a]) * stride_[a];
    }
    return m;
  }
  bool valid(const std::array<int, N>& m) const {
    for (int a = 0; a < N; ++a)
      if (m[a] < 0 || m[a] >= shape[a]) return false;
    return true;
  }

  Vec<N> coords(const std::array<int, N>& m) const {
    Vec<N> x;
    for (int a = 0; a < N; ++a) x[a] = origin[a] + m[a] * spacing[a];
    return x;
  }
  Vec<N> coords(std::int64_t idx) const { return coords(multi(idx)); }

  // signed distance to the analytic domain boundary (<0 inside)
  double domain_distance(const Vec<N>& x) const {
    if (kind == DomainKind::Ball) return x.norm() - radius;
    double d = -1e300;
    for (int a = 0; a < N; ++a) d = std::max(d, std::max(box_lo[a] - x[a], x[a] - box_hi[a]));
    return d;
  }
  bool inside_domain(const Vec<N>& x) const { return domain_distance(x) <= 0.0; }
  double diameter() const {
    if (kind == DomainKind::Ball) return 2.0 * radius;
    return (box_hi - box_lo).norm();
  }

  NodeMask mask(std::int64_t idx) const { return mask_[idx]; }
  bool in_domain(std::int64_t idx) const { return mask_[idx] != NodeMask::Exterior; }
  bool is_interior(std::int64_t idx) const { return mask_[idx] == NodeMask::Interior; }
  bool in_collar(std::int64_t idx) const { return collar_[idx] != 0; }

  double volume_weight(std::int64_t idx) const { return vol_w_[idx]; }
  double domain_volume() const { return vol_total_; }

  const std::vector<BoundaryNode<N>>& boundary() const { return boundary_; }
  const std::vector<std::int64_t>& interior_nodes() const { return interior_; }
  const std::vector<std::int64_t>& domain_nodes() const { return domain_nodes_; }
  // cells (identified by their base corner) whose 2^N corners are all in-domain
  const std::vector<std::array<int, N>>& cells() const { return cells_; }

  Vec<N> boundary_normal_at(const Vec<N>& x) const {
    if (kind == DomainKind::Ball) {
      const double r = x.norm();
      return r > 0 ? Vec<N>(x / r) : Vec<N>::Unit(N - 1);
    }
    Vec<N> nrm = Vec<N>::Zero();
    int best = 0;
    double bd = -1e300;
    double sgn = 1.0;
    for (int a = 0; a < N; ++a) {
      if (x[a] - box_hi[a] > bd) { bd = x[a] - box_hi[a]; best = a; sgn = 1.0; }
      if (box_lo[a] - x[a] > bd) { bd = box_lo[a] - x[a]; best = a; sgn = -1.0; }
    }
    nrm[best] = sgn;
    return nrm;
  }

 private:
  std::array<std::int64_t, N> stride_{};
  std::int64_t total_ = 0;
  std::vector<NodeMask> mask_;
  std::vector<std::uint8_t> collar_;
  std::vector<double> vol_w_;
  double vol_total_ = 0;
  std::vector<BoundaryNode<N>> boundary_;
  std::vector<std::int64_t> interior_;
  std::vector<std::int64_t> domain_nodes_;
  std::vector<std::array<int, N>> cells_;

  void finalize() {
    total_ = 1;
    for (int a = N - 1; a >= 0; --a) {
      stride_[a] = total_;
      total_ *= shape[a];
    }
    mask_.assign(total_, NodeMask::Exterior);
    collar_.assign(total_, 0);
    vol_w_.assign(total_, 0.0);

    for (std::int64_t i = 0; i < total_; ++i) {
      const Vec<N> x = coords(i);
      const double d = domain_distance(x);
      if (d <= 1e-12) {
        mask_[i] = NodeMask::Interior;
        if (-d <= collar_width) collar_[i] = 1;
      }
    }
    // boundary = in-domain node with an exterior axis neighbor
    for (std::int64_t i = 0; i < total_; ++i) {
      if (mask_[i] == NodeMask::Exterior) continue;
      auto m = multi(i);
      bool bdry = false;
      for (int a = 0; a < N && !bdry; ++a)
        for (int s = -1; s <= 1 && !bdry; s += 2) {
          auto mm = m;
          mm[a] += s;
          if (!valid(mm) || mask_[index(mm)] == NodeMask::Exterior) bdry = true;
        }
      if (bdry) mask_[i] = NodeMask::Boundary;
    }
    build_cells();
    // interior nodes must touch at least one full cell; stray stair tips are
    // demoted to boundary so lumped masses stay positive
    std::vector<std::uint8_t> support(total_, 0);
    for (const auto& c : cells_)
      for_each_corner(c, [&](std::int64_t idx) { support[idx] = 1; });
    for (std::int64_t i = 0; i < total_; ++i)
      if (mask_[i] == NodeMask::Interior && !support[i]) mask_[i] = NodeMask::Boundary;

    build_boundary_list();
    build_volume_weights();
    for (std::int64_t i = 0; i < total_; ++i) {
      if (mask_[i] == NodeMask::Interior) interior_.push_back(i);
      if (mask_[i] != NodeMask::Exterior) domain_nodes_.push_back(i);
    }
  }

  template <class F>
  void for_each_corner(const std::array<int, N>& base, F&& f) const {
    for (int k = 0; k < (1 << N); ++k) {
      auto m = base;
      for (int a = 0; a < N; ++a)
        if (k & (1 << a)) m[a] += 1;
      f(index(m));
    }
  }

  void build_cells() {
    cells_.clear();
    std::array<int, N> m{};
    const std::int64_t ncells = [&] {
      std::int64_t t = 1;
      for (int a = 0; a < N; ++a) t *= (shape[a] - 1);
      return t;
    }();
    for (std::int64_t c = 0; c < ncells; ++c) {
      std::int64_t r = c;
      for (int a = N - 1; a >= 0; --a) {
        m[a] = static_cast<int>(r % (shape[a] - 1));
        r /= (shape[a] - 1);
      }
      bool ok = true;
      for_each_corner(m, [&](std::int64_t idx) {
        if (mask_[idx] == NodeMask::Exterior) ok = false;
      });
      if (ok) cells_.push_back(m);
    }
  }

  void build_boundary_list() {
    boundary_.clear();
    Vec<N> center = kind == DomainKind::Ball ? Vec<N>::Zero() : Vec<N>(0.5 * (box_lo + box_hi));
    for (std::int64_t i = 0; i < total_; ++i) {
      if (mask_[i] != NodeMask::Boundary) continue;
      BoundaryNode<N> b;
      b.node = i;
      const Vec<N> x = coords(i);
      b.normal = boundary_normal_at(x);
      b.param = std::atan2(x[1] - center[1], x[0] - center[0]);
      b.weight = 1.0;
      boundary_.push_back(b);
    }
    std::sort(boundary_.begin(), boundary_.end(),
              [](const auto& a, const auto& b) { return a.param < b.param; });
    if constexpr (N == 2) {
      // arc-length weights from half-distances to the ordered neighbors
      const int nb = static_cast<int>(boundary_.size());
      for (int k = 0; k < nb; ++k) {
        const Vec<N> xp = coords(boundary_[(k + nb - 1) % nb].node);
        const Vec<N> xc = coords(boundary_[k].node);
        const Vec<N> xn = coords(boundary_[(k + 1) % nb].node);
        boundary_[k].weight = 0.5 * ((xc - xp).norm() + (xn - xc).norm());
      }
    } else {
      for (auto& b : boundary_) b.weight = spacing[0] * spacing[1];
    }
  }

  void build_volume_weights() {
    const double hprod = std::accumulate(spacing.begin(), spacing.end(), 1.0, std::multiplies<>());
    vol_total_ = 0;
    for (std::int64_t i = 0; i < total_; ++i) {
      if (mask_[i] == NodeMask::Exterior) continue;
      double w = hprod;
      if (kind == DomainKind::Box) {
        // trapezoid weights are exact for constants on the box
        const Vec<N> x = coords(i);
        for (int a = 0; a < N; ++a) {
          if (std::abs(x[a] - box_lo[a]) < 1e-12 || std::abs(x[a] - box_hi[a]) < 1e-12) w *= 0.5;
        }
      }
      vol_w_[i] = w;
      vol_total_ += w;
    }
  }
};

template <int N> using GridPtr = std::shared_ptr<const Grid<N>>;

// Flat per-node field with C components, zero everywhere by default.
template <int N, int C>
class Field {
 public:
  Field() = default;
  explicit Field(GridPtr<N> g) : grid_(std::move(g)), v_(grid_->size() * C, 0.0) {}

  const Grid<N>& grid() const { return *grid_; }
  GridPtr<N> grid_ptr() const { return grid_; }
  static constexpr int components = C;

  double& operator()(std::int64_t node, int c = 0) { return v_[node * C + c]; }
  double operator()(std::int64_t node, int c = 0) const { return v_[node * C + c]; }
  double* data(std::int64_t node) { return v_.data() + node * C; }
  const double* data(std::int64_t node) const { return v_.data() + node * C; }
  std::vector<double>& raw() { return v_; }
  const std::vector<double>& raw() const { return v_; }

 private:
  GridPtr<N> grid_;
  std::vector<double> v_;
};

template <int N> using ScalarField = Field<N, 1>;
template <int N> using VectorField = Field<N, N>;
template <int N> using SymField = Field<N, sym_size(N)>;

}  // namespace gtomo

#endif
