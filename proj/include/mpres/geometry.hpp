#pragma once

// Geometry of N-particle configurations in Z^d: distances, canonical
// envelopes, cluster decomposition and weak-separability certificates.
// Everything here is exact integer arithmetic on boxes.

#include <algorithm>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpres/errors.hpp"
#include "mpres/lattice.hpp"

namespace mpres {

namespace detail {

inline void require_nonempty(std::span<const LatticePoint> set, const char* what) {
  if (set.empty()) throw InvalidInput(std::string(what) + ": empty point set");
}

inline void require_n_particles(int n) {
  if (n > kMaxParticles) {
    throw InvalidInput("at most " + std::to_string(kMaxParticles) + " particles supported");
  }
}

}  // namespace detail

/// Symmetrized distance: min over relabelings tau of |tau(x) - y|_inf.
/// Exact; depth-first over assignments with bottleneck pruning.
inline Coord sym_distance(const Configuration& x, const Configuration& y) {
  require_compatible(x, y);
  const int n = x.size();
  detail::require_n_particles(n);

  // cost[i][j] = |x_i - y_j|
  std::array<std::array<Coord, kMaxParticles>, kMaxParticles> cost{};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) cost[i][j] = max_norm(x[i], y[j]);
  }

  Coord best = std::numeric_limits<Coord>::max();
  std::array<bool, kMaxParticles> used{};
  // Assign y_j (j = depth) to an unused x_i.
  auto dfs = [&](auto&& self, int depth, Coord current) -> void {
    if (current >= best) return;
    if (depth == n) {
      best = current;
      return;
    }
    for (int i = 0; i < n; ++i) {
      if (used[i]) continue;
      used[i] = true;
      self(self, depth + 1, std::max(current, cost[i][depth]));
      used[i] = false;
    }
  };
  dfs(dfs, 0, 0);
  return best;
}

/// rho(A, B): min over pairs of max-norm distances.
inline Coord rho_distance(std::span<const LatticePoint> a, std::span<const LatticePoint> b) {
  detail::require_nonempty(a, "rho_distance");
  detail::require_nonempty(b, "rho_distance");
  Coord best = std::numeric_limits<Coord>::max();
  for (const auto& p : a) {
    for (const auto& q : b) best = std::min(best, max_norm(p, q));
  }
  return best;
}

/// Canonical envelope: the minimal axis-aligned box containing the set.
inline Box canonical_envelope(std::span<const LatticePoint> set) {
  detail::require_nonempty(set, "canonical_envelope");
  Box env(set.front(), set.front());
  for (const auto& p : set.subspan(1)) {
    require_same_dim(p, env.lo);
    for (int i = 0; i < p.dim(); ++i) {
      env.lo[i] = std::min(env.lo[i], p[i]);
      env.hi[i] = std::max(env.hi[i], p[i]);
    }
  }
  return env;
}

/// Max-norm diameter of a point set (equals the diameter of its envelope).
inline Coord diameter(std::span<const LatticePoint> set) { return canonical_envelope(set).diam(); }

/// d_CH: rho between canonical envelopes. Zero whenever the envelopes meet,
/// even if the sets themselves are disjoint.
inline Coord dch_distance(std::span<const LatticePoint> a, std::span<const LatticePoint> b) {
  detail::require_nonempty(a, "dch_distance");
  detail::require_nonempty(b, "dch_distance");
  return box_gap(canonical_envelope(a), canonical_envelope(b));
}

/// A layer between hyperplanes {coord[axis] = lower} and {coord[axis] = upper},
/// upper - lower = width. If `first_below`, the first set lies in
/// {coord <= lower} and the second in {coord >= upper}; otherwise reversed.
struct SeparatingLayer {
  int axis = 0;
  Coord lower = 0;
  Coord upper = 0;
  bool first_below = true;
};

/// Axis-parallel layer of width R >= 1 separating the sets; exists iff
/// d_CH(a, b) >= R.
inline std::optional<SeparatingLayer> separating_layer(std::span<const LatticePoint> a,
                                                       std::span<const LatticePoint> b, Coord width) {
  detail::require_nonempty(a, "separating_layer");
  detail::require_nonempty(b, "separating_layer");
  if (width < 1) throw InvalidInput("separating_layer: width must be >= 1");
  const Box ea = canonical_envelope(a);
  const Box eb = canonical_envelope(b);
  require_same_dim(ea.lo, eb.lo);
  for (int i = 0; i < ea.dim(); ++i) {
    if (eb.lo[i] - ea.hi[i] >= width) return SeparatingLayer{i, ea.hi[i], ea.hi[i] + width, true};
    if (ea.lo[i] - eb.hi[i] >= width) return SeparatingLayer{i, eb.hi[i], eb.hi[i] + width, false};
  }
  return std::nullopt;
}

/// Support of the subconfiguration x_J: {x_j : j in J}, deduplicated and
/// sorted. Empty for J = {}.
inline std::vector<LatticePoint> projection(const Configuration& x, IndexSet j_set) {
  std::vector<LatticePoint> out;
  for (int j : j_set.indices()) {
    if (j >= x.size()) {
      throw InvalidInput("index " + std::to_string(j + 1) + " out of range [1, " +
                         std::to_string(x.size()) + "]");
    }
    out.push_back(x[j]);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Full support {x_1, ..., x_N}.
inline std::vector<LatticePoint> support(const Configuration& x) {
  return projection(x, IndexSet::all(x.size()));
}

/// The N-particle cube C_L(u) = {x in Z^{Nd} : |x - u|_inf <= L}.
struct MultiCube {
  Configuration center;
  Coord radius = 0;

  MultiCube() = default;
  MultiCube(Configuration c, Coord r) : center(std::move(c)), radius(r) {
    if (r < 0) throw InvalidInput("cube radius must be >= 0");
  }

  int particles() const noexcept { return center.size(); }
  int dim() const noexcept { return center.dim(); }

  /// One-particle cube C_L(u_j), the j-th coordinate projection.
  Box particle_box(int j) const { return Box::cube(center[j], radius); }

  std::size_t cardinality() const noexcept {
    std::size_t side = static_cast<std::size_t>(2 * radius + 1);
    std::size_t n = 1;
    for (int k = 0; k < particles() * dim(); ++k) n *= side;
    return n;
  }

  bool contains(const Configuration& x) const {
    return x.size() == center.size() && x.dim() == center.dim() && max_norm(x, center) <= radius;
  }
};

/// Union of axis-aligned boxes, kept as a box list.
struct BoxUnion {
  std::vector<Box> boxes;

  bool empty() const noexcept { return boxes.empty(); }

  bool contains(const LatticePoint& p) const {
    return std::any_of(boxes.begin(), boxes.end(), [&](const Box& b) { return b.contains(p); });
  }

  Box envelope() const {
    if (boxes.empty()) throw InvalidInput("envelope of an empty box union");
    Box env = boxes.front();
    for (const auto& b : boxes) env = env.hull(b);
    return env;
  }

  bool subset_of(const Box& q) const {
    return std::all_of(boxes.begin(), boxes.end(), [&](const Box& b) { return q.contains(b); });
  }

  bool disjoint_from(const Box& q) const {
    return std::none_of(boxes.begin(), boxes.end(), [&](const Box& b) { return q.intersects(b); });
  }

  /// Explicit lattice points, sorted and deduplicated.
  std::vector<LatticePoint> points() const {
    std::vector<LatticePoint> out;
    for (const auto& b : boxes) {
      auto pts = b.points();
      out.insert(out.end(), pts.begin(), pts.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
};

/// Pi_J C_L(u) = union over j in J of C_L(u_j). Empty J gives an empty union.
inline BoxUnion cube_projection(const MultiCube& cube, IndexSet j_set) {
  BoxUnion out;
  for (int j : j_set.indices()) {
    if (j >= cube.particles()) throw InvalidInput("cube_projection: index out of range");
    out.boxes.push_back(cube.particle_box(j));
  }
  return out;
}

/// Support of the whole multi-cube: union of its one-particle cubes.
inline BoxUnion cube_support(const MultiCube& cube) {
  return cube_projection(cube, IndexSet::all(cube.particles()));
}

struct Cluster {
  IndexSet members;
  Box envelope;  // envelope of the member particles (bare points)
};

struct ClusterDecomposition {
  Coord radius = 0;
  std::vector<Cluster> clusters;  // sorted by least member index
};

/// R-clusters of x: grow a cube of radius R around each particle and merge
/// components while their envelopes intersect. Distinct clusters end up with
/// d_CH > 2R and each cluster has diameter <= 2(|cluster|-1)R.
///
/// R = 0 is accepted (clusters are groups of coincident particles); it is
/// needed for certificates at scale L = 0.
inline ClusterDecomposition cluster_decompose(const Configuration& x, Coord radius) {
  if (radius < 0) throw InvalidInput("cluster radius must be >= 0");
  detail::require_n_particles(x.size());

  struct Component {
    IndexSet members;
    Box grown;
  };
  std::vector<Component> comps;
  for (int j = 0; j < x.size(); ++j) comps.push_back({IndexSet{j}, Box::cube(x[j], radius)});

  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t a = 0; a < comps.size() && !merged; ++a) {
      for (std::size_t b = a + 1; b < comps.size(); ++b) {
        if (!comps[a].grown.intersects(comps[b].grown)) continue;
        comps[a].members = IndexSet(comps[a].members.mask() | comps[b].members.mask());
        comps[a].grown = comps[a].grown.hull(comps[b].grown);
        comps.erase(comps.begin() + static_cast<std::ptrdiff_t>(b));
        merged = true;
        break;
      }
    }
  }

  ClusterDecomposition out;
  out.radius = radius;
  for (const auto& c : comps) {
    std::vector<LatticePoint> pts;
    for (int j : c.members.indices()) pts.push_back(x[j]);
    out.clusters.push_back({c.members, canonical_envelope(pts)});
  }
  std::sort(out.clusters.begin(), out.clusters.end(), [](const Cluster& a, const Cluster& b) {
    return a.members.indices().front() < b.members.indices().front();
  });
  return out;
}

/// Envelope of the union of one-particle cubes C_L(x_k), k in members.
inline Box cube_envelope(const Configuration& x, IndexSet members, Coord l) {
  Box env = Box::cube(x[members.indices().front()], l);
  for (int k : members.indices()) env = env.hull(Box::cube(x[k], l));
  return env;
}

namespace detail {

template <typename SideBox>
Coord max_bipartition_gap(int n, SideBox&& side_box) {
  if (n < 2) throw InvalidInput("decoupling width needs N >= 2");
  require_n_particles(n);
  Coord best = 0;
  // Particle n-1 always sits in the complement; this enumerates each
  // unordered nontrivial bipartition exactly once.
  const std::uint32_t limit = 1u << (n - 1);
  for (std::uint32_t mask = 1; mask < limit; ++mask) {
    IndexSet j_set(mask);
    best = std::max(best, box_gap(side_box(j_set), side_box(j_set.complement(n))));
  }
  return best;
}

}  // namespace detail

/// D(x): max over nontrivial bipartitions (J, J^c) of d_CH(x_J, x_{J^c}).
inline Coord decoupling_width(const Configuration& x) {
  return detail::max_bipartition_gap(x.size(), [&](IndexSet j_set) {
    return canonical_envelope(projection(x, j_set));
  });
}

/// D(C_L(u)): the same maximum taken over unions of one-particle cubes.
inline Coord decoupling_width(const MultiCube& cube) {
  return detail::max_bipartition_gap(cube.particles(), [&](IndexSet j_set) {
    return cube_envelope(cube.center, j_set, cube.radius);
  });
}

enum class Side { x, y };

/// How a certificate was found.
enum class CertificateRoute {
  cluster_occupancy,  // 2L-cluster envelope with a favourable occupancy count
  envelope_search,    // exhaustive search over envelopes of particle cubes
};

/// Witness that C_L(first) is weakly separable from C_L(second), where
/// `separated` names which configuration plays `first`. J1 indexes the
/// separated configuration, J2 the other one.
struct SeparabilityCertificate {
  Box q;
  IndexSet j1;
  IndexSet j2;
  int n1 = 0;
  int n2 = 0;
  Coord scale = 0;
  Side separated = Side::x;
  CertificateRoute route = CertificateRoute::cluster_occupancy;
};

enum class CertificateClause { none, shape, a, b, c, d, e };

struct CertificateCheck {
  CertificateClause violated = CertificateClause::none;
  std::string message;

  bool ok() const noexcept { return violated == CertificateClause::none; }
  explicit operator bool() const noexcept { return ok(); }
};

inline const char* to_string(CertificateClause c) {
  switch (c) {
    case CertificateClause::none: return "none";
    case CertificateClause::shape: return "shape";
    case CertificateClause::a: return "a";
    case CertificateClause::b: return "b";
    case CertificateClause::c: return "c";
    case CertificateClause::d: return "d";
    case CertificateClause::e: return "e";
  }
  return "?";
}

inline const char* to_string(Side s) { return s == Side::x ? "x" : "y"; }

inline const char* to_string(CertificateRoute r) {
  return r == CertificateRoute::cluster_occupancy ? "cluster_occupancy" : "envelope_search";
}

/// Checks clauses (a)-(e) exactly:
///  (a) Pi_{J1} C_L(first) and Pi_{J2} C_L(second) lie in Q;
///  (b) Pi_{J2^c} C_L(second) misses Q;
///  (c) |J1| > |J2| (and n1, n2 match the index sets);
///  (d) Pi_{J1^c} C_L(first) misses Q;
///  (e) diam Q <= 2NL.
inline CertificateCheck validate_certificate(const SeparabilityCertificate& cert, const Configuration& x,
                                             const Configuration& y, Coord l) {
  auto fail = [](CertificateClause c, std::string msg) { return CertificateCheck{c, std::move(msg)}; };
  if (x.size() != y.size() || x.dim() != y.dim() || x.size() == 0) {
    return fail(CertificateClause::shape, "configurations differ in N or d");
  }
  if (cert.q.dim() != x.dim()) return fail(CertificateClause::shape, "Q has the wrong dimension");
  if (l < 0) return fail(CertificateClause::shape, "negative scale");
  const int n = x.size();
  if ((cert.j1.mask() | cert.j2.mask()) & ~IndexSet::all(n).mask()) {
    return fail(CertificateClause::shape, "index set outside [1, N]");
  }
  const Configuration& first = cert.separated == Side::x ? x : y;
  const Configuration& second = cert.separated == Side::x ? y : x;

  for (int j = 0; j < n; ++j) {
    const Box c1 = Box::cube(first[j], l);
    const Box c2 = Box::cube(second[j], l);
    if (cert.j1.contains(j) && !cert.q.contains(c1)) {
      return fail(CertificateClause::a, "cube of separated particle " + std::to_string(j + 1) + " not inside Q");
    }
    if (cert.j2.contains(j) && !cert.q.contains(c2)) {
      return fail(CertificateClause::a, "cube of other particle " + std::to_string(j + 1) + " not inside Q");
    }
  }
  for (int j = 0; j < n; ++j) {
    if (!cert.j2.contains(j) && cert.q.intersects(Box::cube(second[j], l))) {
      return fail(CertificateClause::b, "cube of other particle " + std::to_string(j + 1) + " meets Q");
    }
  }
  if (cert.n1 != cert.j1.size() || cert.n2 != cert.j2.size()) {
    return fail(CertificateClause::c, "occupancy counts disagree with index sets");
  }
  if (cert.n1 <= cert.n2) {
    return fail(CertificateClause::c,
                "n1=" + std::to_string(cert.n1) + " not greater than n2=" + std::to_string(cert.n2));
  }
  for (int j = 0; j < n; ++j) {
    if (!cert.j1.contains(j) && cert.q.intersects(Box::cube(first[j], l))) {
      return fail(CertificateClause::d, "cube of separated particle " + std::to_string(j + 1) +
                                            " outside J1 meets Q");
    }
  }
  if (cert.q.diam() > 2 * n * l) {
    return fail(CertificateClause::e,
                "diam Q = " + std::to_string(cert.q.diam()) + " exceeds 2NL = " + std::to_string(2 * n * l));
  }
  return {};
}

/// Occupancy of one box Q_i built from a 2L-cluster of x.
struct Occupancy {
  Box q;
  int n_x = 0;
  int n_y = 0;
};

/// Boxes Q_i = envelope of the L-cubes of each 2L-cluster of `first`, with
/// particle counts of both configurations inside each box.
inline std::vector<Occupancy> occupancy_numbers(const Configuration& first, const Configuration& second,
                                                Coord l) {
  require_compatible(first, second);
  std::vector<Occupancy> out;
  for (const auto& cl : cluster_decompose(first, 2 * l).clusters) {
    Occupancy occ{cube_envelope(first, cl.members, l)};
    for (int j = 0; j < first.size(); ++j) {
      occ.n_x += occ.q.contains(first[j]) ? 1 : 0;
      occ.n_y += occ.q.contains(second[j]) ? 1 : 0;
    }
    out.push_back(occ);
  }
  return out;
}

namespace detail {

inline SeparabilityCertificate certificate_for(const Box& q, const Configuration& first,
                                               const Configuration& second, Coord l, Side side,
                                               CertificateRoute route, bool by_cube) {
  SeparabilityCertificate cert;
  cert.q = q;
  cert.scale = l;
  cert.separated = side;
  cert.route = route;
  for (int j = 0; j < first.size(); ++j) {
    if (by_cube ? q.contains(Box::cube(first[j], l)) : q.contains(first[j])) cert.j1.insert(j);
    if (by_cube ? q.contains(Box::cube(second[j], l)) : q.contains(second[j])) cert.j2.insert(j);
  }
  cert.n1 = cert.j1.size();
  cert.n2 = cert.j2.size();
  return cert;
}

}  // namespace detail

/// Weak-separability certificate for the pair (C_L(x), C_L(y)).
///
/// First tries the occupancy construction: 2L-clusters of x, boxes Q_i
/// around their L-cubes, the first Q_i (by least member index) holding more
/// x-particles than y-particles; then the same with x and y swapped. Such a
/// candidate is only returned if it passes validate_certificate. If no
/// candidate validates, every envelope of a subset of the 2N particle cubes
/// is tried (smallest subsets first). Any valid Q can be shrunk to such an
/// envelope, so nullopt means no certificate exists at all.
inline std::optional<SeparabilityCertificate> weak_separability(const Configuration& x, const Configuration& y,
                                                                Coord l) {
  require_compatible(x, y);
  if (l < 0) throw InvalidInput("scale L must be >= 0");
  const int n = x.size();
  detail::require_n_particles(n);

  for (Side side : {Side::x, Side::y}) {
    const Configuration& first = side == Side::x ? x : y;
    const Configuration& second = side == Side::x ? y : x;
    for (const auto& occ : occupancy_numbers(first, second, l)) {
      if (occ.n_x <= occ.n_y) continue;
      auto cert =
          detail::certificate_for(occ.q, first, second, l, side, CertificateRoute::cluster_occupancy, false);
      if (validate_certificate(cert, x, y, l)) return cert;
    }
  }

  // Subsets of the 2N cubes: bits [0, n) are x-particles, [n, 2n) y-particles.
  const int total = 2 * n;
  std::vector<std::uint32_t> masks(static_cast<std::size_t>((1u << total) - 1));
  std::iota(masks.begin(), masks.end(), 1u);
  std::stable_sort(masks.begin(), masks.end(),
                   [](std::uint32_t a, std::uint32_t b) { return std::popcount(a) < std::popcount(b); });
  for (std::uint32_t mask : masks) {
    std::optional<Box> q;
    for (int k = 0; k < total; ++k) {
      if (!((mask >> k) & 1u)) continue;
      const Box c = Box::cube(k < n ? x[k] : y[k - n], l);
      q = q ? q->hull(c) : c;
    }
    if (q->diam() > 2 * n * l) continue;
    for (Side side : {Side::x, Side::y}) {
      const Configuration& first = side == Side::x ? x : y;
      const Configuration& second = side == Side::x ? y : x;
      auto cert = detail::certificate_for(*q, first, second, l, side, CertificateRoute::envelope_search, true);
      if (validate_certificate(cert, x, y, l)) return cert;
    }
  }
  return std::nullopt;
}

}  // namespace mpres
