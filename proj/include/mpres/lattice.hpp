#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mpres/errors.hpp"

namespace mpres {

using Coord = std::int64_t;

/// Largest lattice dimension d supported by the fixed-capacity point type.
inline constexpr int kMaxDim = 4;

/// Largest particle count N for exact permutation/bipartition enumeration.
inline constexpr int kMaxParticles = 8;

/// A point of Z^d, stored inline (no allocation) for d <= kMaxDim.
class LatticePoint {
 public:
  LatticePoint() = default;

  explicit LatticePoint(int dim) : dim_(dim) {
    if (dim < 1 || dim > kMaxDim) {
      throw InvalidInput("lattice dimension must be in [1, " + std::to_string(kMaxDim) +
                         "], got " + std::to_string(dim));
    }
  }

  LatticePoint(std::initializer_list<Coord> coords) : LatticePoint(static_cast<int>(coords.size())) {
    std::copy(coords.begin(), coords.end(), c_.begin());
  }

  explicit LatticePoint(std::span<const Coord> coords) : LatticePoint(static_cast<int>(coords.size())) {
    std::copy(coords.begin(), coords.end(), c_.begin());
  }

  int dim() const noexcept { return dim_; }
  Coord operator[](int i) const noexcept { return c_[static_cast<std::size_t>(i)]; }
  Coord& operator[](int i) noexcept { return c_[static_cast<std::size_t>(i)]; }

  std::span<const Coord> coords() const noexcept { return {c_.data(), static_cast<std::size_t>(dim_)}; }

  friend bool operator==(const LatticePoint& a, const LatticePoint& b) noexcept {
    return a.dim_ == b.dim_ && std::equal(a.c_.begin(), a.c_.begin() + a.dim_, b.c_.begin());
  }

  /// Lexicographic order on coordinates (dimension first).
  friend std::strong_ordering operator<=>(const LatticePoint& a, const LatticePoint& b) noexcept {
    if (auto c = a.dim_ <=> b.dim_; c != 0) return c;
    for (int i = 0; i < a.dim_; ++i) {
      if (auto c = a[i] <=> b[i]; c != 0) return c;
    }
    return std::strong_ordering::equal;
  }

  LatticePoint shifted(Coord delta) const noexcept {
    LatticePoint p = *this;
    for (int i = 0; i < dim_; ++i) p[i] += delta;
    return p;
  }

 private:
  std::array<Coord, kMaxDim> c_{};
  int dim_ = 0;
};

inline void require_same_dim(const LatticePoint& a, const LatticePoint& b) {
  if (a.dim() != b.dim()) {
    throw InvalidInput("dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                       std::to_string(b.dim()));
  }
}

/// Max-norm distance |a - b|_inf in Z^d.
inline Coord max_norm(const LatticePoint& a, const LatticePoint& b) {
  require_same_dim(a, b);
  Coord m = 0;
  for (int i = 0; i < a.dim(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Ordered N-tuple of lattice points: N distinguishable particles in Z^d.
class Configuration {
 public:
  Configuration() = default;

  explicit Configuration(std::vector<LatticePoint> particles) : particles_(std::move(particles)) {
    if (particles_.empty()) throw InvalidInput("configuration needs at least one particle");
    if (particles_.size() > static_cast<std::size_t>(kMaxParticles)) {
      throw InvalidInput("configuration has " + std::to_string(particles_.size()) +
                         " particles; at most " + std::to_string(kMaxParticles) + " supported");
    }
    const int d = particles_.front().dim();
    for (const auto& p : particles_) {
      if (p.dim() != d) throw InvalidInput("particles of a configuration must share dimension");
    }
  }

  Configuration(std::initializer_list<LatticePoint> particles)
      : Configuration(std::vector<LatticePoint>(particles)) {}

  int size() const noexcept { return static_cast<int>(particles_.size()); }
  int dim() const noexcept { return particles_.empty() ? 0 : particles_.front().dim(); }

  const LatticePoint& operator[](int j) const noexcept { return particles_[static_cast<std::size_t>(j)]; }
  std::span<const LatticePoint> particles() const noexcept { return particles_; }

  auto begin() const noexcept { return particles_.begin(); }
  auto end() const noexcept { return particles_.end(); }

  friend bool operator==(const Configuration&, const Configuration&) = default;

  /// Configuration (x_{perm[0]}, ..., x_{perm[N-1]}).
  Configuration permuted(std::span<const int> perm) const {
    std::vector<LatticePoint> out;
    out.reserve(particles_.size());
    for (int j : perm) out.push_back(particles_.at(static_cast<std::size_t>(j)));
    return Configuration(std::move(out));
  }

 private:
  std::vector<LatticePoint> particles_;
};

inline void require_compatible(const Configuration& x, const Configuration& y) {
  if (x.size() != y.size() || x.dim() != y.dim()) {
    throw InvalidInput("configurations differ in shape: N=" + std::to_string(x.size()) + ",d=" +
                       std::to_string(x.dim()) + " vs N=" + std::to_string(y.size()) +
                       ",d=" + std::to_string(y.dim()));
  }
}

/// Max-norm on Z^{Nd}: max over particles and axes of coordinate differences.
inline Coord max_norm(const Configuration& x, const Configuration& y) {
  require_compatible(x, y);
  Coord m = 0;
  for (int j = 0; j < x.size(); ++j) m = std::max(m, max_norm(x[j], y[j]));
  return m;
}

/// Subset of particle indices, stored as a bitmask over 0-based positions.
/// Serialized 1-based (as [[1, N]]) at the I/O boundary.
class IndexSet {
 public:
  constexpr IndexSet() = default;
  constexpr explicit IndexSet(std::uint32_t mask) : mask_(mask) {}

  IndexSet(std::initializer_list<int> zero_based) {
    for (int j : zero_based) insert(j);
  }

  static constexpr IndexSet all(int n) { return IndexSet(n >= 32 ? ~0u : ((1u << n) - 1u)); }

  constexpr void insert(int j) { mask_ |= (1u << j); }
  constexpr bool contains(int j) const { return (mask_ >> j) & 1u; }
  constexpr int size() const { return std::popcount(mask_); }
  constexpr bool empty() const { return mask_ == 0; }
  constexpr std::uint32_t mask() const { return mask_; }

  /// Complement within [0, n).
  constexpr IndexSet complement(int n) const { return IndexSet(all(n).mask_ & ~mask_); }

  std::vector<int> indices() const {
    std::vector<int> out;
    for (std::uint32_t m = mask_; m != 0; m &= m - 1) out.push_back(std::countr_zero(m));
    return out;
  }

  friend constexpr bool operator==(IndexSet, IndexSet) = default;

 private:
  std::uint32_t mask_ = 0;
};

/// Axis-aligned box [lo, hi] in Z^d (inclusive bounds).
struct Box {
  LatticePoint lo;
  LatticePoint hi;

  Box() = default;
  Box(LatticePoint lo_, LatticePoint hi_) : lo(lo_), hi(hi_) {
    require_same_dim(lo, hi);
    for (int i = 0; i < lo.dim(); ++i) {
      if (lo[i] > hi[i]) throw InvalidInput("box with lo > hi on axis " + std::to_string(i));
    }
  }

  /// The cube C_r(center) = {x : |x - center|_inf <= r}.
  static Box cube(const LatticePoint& center, Coord r) { return Box(center.shifted(-r), center.shifted(r)); }

  int dim() const noexcept { return lo.dim(); }

  Coord diam() const noexcept {
    Coord m = 0;
    for (int i = 0; i < dim(); ++i) m = std::max(m, hi[i] - lo[i]);
    return m;
  }

  std::size_t cardinality() const noexcept {
    std::size_t n = 1;
    for (int i = 0; i < dim(); ++i) n *= static_cast<std::size_t>(hi[i] - lo[i] + 1);
    return n;
  }

  bool contains(const LatticePoint& p) const noexcept {
    for (int i = 0; i < dim(); ++i) {
      if (p[i] < lo[i] || p[i] > hi[i]) return false;
    }
    return true;
  }

  bool contains(const Box& b) const noexcept { return contains(b.lo) && contains(b.hi); }

  bool intersects(const Box& b) const noexcept {
    for (int i = 0; i < dim(); ++i) {
      if (b.hi[i] < lo[i] || b.lo[i] > hi[i]) return false;
    }
    return true;
  }

  /// Smallest box containing both.
  Box hull(const Box& b) const {
    Box out = *this;
    for (int i = 0; i < dim(); ++i) {
      out.lo[i] = std::min(lo[i], b.lo[i]);
      out.hi[i] = std::max(hi[i], b.hi[i]);
    }
    return out;
  }

  /// All lattice points of the box, in lexicographic order.
  std::vector<LatticePoint> points() const {
    std::vector<LatticePoint> out;
    out.reserve(cardinality());
    LatticePoint p = lo;
    while (true) {
      out.push_back(p);
      int axis = dim() - 1;
      while (axis >= 0 && p[axis] == hi[axis]) {
        p[axis] = lo[axis];
        --axis;
      }
      if (axis < 0) break;
      ++p[axis];
    }
    return out;
  }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Max-norm gap between two boxes; 0 when they intersect.
inline Coord box_gap(const Box& a, const Box& b) {
  require_same_dim(a.lo, b.lo);
  Coord g = 0;
  for (int i = 0; i < a.dim(); ++i) {
    g = std::max({g, b.lo[i] - a.hi[i], a.lo[i] - b.hi[i]});
  }
  return g;
}

}  // namespace mpres
