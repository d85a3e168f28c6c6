#pragma once

// Finite-volume N-particle Hamiltonians
//   H = sum_j (Delta^(j) + V(x_j)) + U
// restricted to a multi-cube C_L(u) with Dirichlet conditions, where
// Delta^(j) is the nearest-neighbour adjacency of particle j.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mpres/errors.hpp"
#include "mpres/geometry.hpp"
#include "mpres/lattice.hpp"
#include "mpres/random_field.hpp"

namespace mpres {

inline constexpr std::size_t kEnumerationCap = 100000;
inline constexpr std::size_t kDenseCap = 10000;

/// Lexicographic enumeration of C_L(u): the Nd coordinates are flattened
/// particle-major and the last coordinate varies fastest.
class CubeBasis {
 public:
  CubeBasis(MultiCube cube, std::size_t cap = kEnumerationCap) : cube_(std::move(cube)) {
    side_ = static_cast<std::size_t>(2 * cube_.radius + 1);
    ncoords_ = cube_.particles() * cube_.dim();
    size_ = 1;
    for (int k = 0; k < ncoords_; ++k) {
      if (size_ > std::numeric_limits<std::size_t>::max() / side_) {
        size_ = std::numeric_limits<std::size_t>::max();
        break;
      }
      size_ *= side_;
    }
    if (size_ > cap) {
      throw ResourceCap("cube dimension (2L+1)^(Nd) = " + (size_ == std::numeric_limits<std::size_t>::max()
                                                                ? std::string("overflow")
                                                                : std::to_string(size_)) +
                            " exceeds cap " + std::to_string(cap),
                        size_, cap);
    }
    strides_.assign(static_cast<std::size_t>(ncoords_), 1);
    for (int k = ncoords_ - 2; k >= 0; --k) {
      strides_[static_cast<std::size_t>(k)] = strides_[static_cast<std::size_t>(k + 1)] * side_;
    }
  }

  const MultiCube& cube() const noexcept { return cube_; }
  std::size_t size() const noexcept { return size_; }
  std::size_t side() const noexcept { return side_; }
  int coordinates() const noexcept { return ncoords_; }
  std::size_t stride(int k) const noexcept { return strides_[static_cast<std::size_t>(k)]; }

  /// Offset of flattened coordinate k of basis element `index`, in [0, 2L].
  std::size_t digit(std::size_t index, int k) const noexcept { return (index / stride(k)) % side_; }

  Configuration configuration(std::size_t index) const {
    if (index >= size_) throw InvalidInput("basis index out of range");
    std::vector<LatticePoint> pts;
    pts.reserve(static_cast<std::size_t>(cube_.particles()));
    for (int j = 0; j < cube_.particles(); ++j) {
      LatticePoint p = cube_.center[j].shifted(-cube_.radius);
      for (int i = 0; i < cube_.dim(); ++i) p[i] += static_cast<Coord>(digit(index, j * cube_.dim() + i));
      pts.push_back(p);
    }
    return Configuration(std::move(pts));
  }

  std::size_t index_of(const Configuration& x) const {
    if (!cube_.contains(x)) throw InvalidInput("configuration is not in the cube");
    std::size_t idx = 0;
    for (int j = 0; j < cube_.particles(); ++j) {
      for (int i = 0; i < cube_.dim(); ++i) {
        const auto off = static_cast<std::size_t>(x[j][i] - cube_.center[j][i] + cube_.radius);
        idx += off * stride(j * cube_.dim() + i);
      }
    }
    return idx;
  }

 private:
  MultiCube cube_;
  std::size_t side_ = 1;
  int ncoords_ = 0;
  std::size_t size_ = 1;
  std::vector<std::size_t> strides_;
};

inline CubeBasis enumerate_cube(const Configuration& center, Coord radius, std::size_t cap = kEnumerationCap) {
  return CubeBasis(MultiCube(center, radius), cap);
}

struct NoInteraction {};

/// U(x) = u0 * #{pairs i<j : |x_i - x_j| <= r0}.
struct PairwiseContact {
  double u0 = 0.0;
  Coord r0 = 0;
};

/// U(x) = sum_{i<j} values[|x_i - x_j|], zero beyond the table.
struct PairwiseTable {
  std::vector<double> values;
};

/// Arbitrary U with a declared bound |U| <= bound, enforced at assembly.
struct CustomBounded {
  std::function<double(std::span<const LatticePoint>)> fn;
  double bound = 0.0;
};

struct InteractionSpec {
  std::variant<NoInteraction, PairwiseContact, PairwiseTable, CustomBounded> kind;
  bool symmetric = true;  // metadata only

  const char* name() const noexcept {
    switch (kind.index()) {
      case 0: return "none";
      case 1: return "pairwise_contact";
      case 2: return "pairwise_table";
      default: return "custom_bounded";
    }
  }

  double operator()(std::span<const LatticePoint> x) const {
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, NoInteraction>) {
            return 0.0;
          } else if constexpr (std::is_same_v<K, PairwiseContact>) {
            double u = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
              for (std::size_t j = i + 1; j < x.size(); ++j) {
                if (max_norm(x[i], x[j]) <= k.r0) u += k.u0;
              }
            }
            return u;
          } else if constexpr (std::is_same_v<K, PairwiseTable>) {
            double u = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
              for (std::size_t j = i + 1; j < x.size(); ++j) {
                const auto r = static_cast<std::size_t>(max_norm(x[i], x[j]));
                if (r < k.values.size()) u += k.values[r];
              }
            }
            return u;
          } else {
            const double u = k.fn(x);
            if (!(std::abs(u) <= k.bound)) {
              throw InvalidInput("custom interaction value " + std::to_string(u) + " exceeds its bound " +
                                 std::to_string(k.bound));
            }
            return u;
          }
        },
        kind);
  }
};

struct AssemblyOptions {
  /// Adds the conventional -2d per particle to the diagonal (off by default:
  /// the operator uses pure adjacency hopping).
  bool laplacian_diagonal = false;
  std::size_t dim_cap = kDenseCap;
};

struct AssembledOperator {
  CubeBasis basis;
  Eigen::MatrixXd matrix;
  std::uint64_t field_seed = 0;
  std::uint64_t field_trial = 0;
  std::string interaction;
};

/// Dense matrix of H on C_L(u): ones between configurations differing by one
/// lattice step of one particle (hops leaving the cube are dropped), and
/// sum_j V(x_j) + U(x) on the diagonal.
inline AssembledOperator assemble(const MultiCube& cube, const FieldSample& sample, const InteractionSpec& inter,
                                  const AssemblyOptions& options = {}) {
  CubeBasis basis(cube, options.dim_cap);
  const int n = cube.particles();
  const int d = cube.dim();
  const std::size_t side = basis.side();

  // Potential on each one-particle cube, indexed like the basis digits.
  std::vector<std::vector<double>> potential(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    for (const auto& p : cube.particle_box(j).points()) {
      auto idx = sample.find(p);
      if (!idx) throw InvalidInput("field sample does not cover the support of the cube");
      potential[static_cast<std::size_t>(j)].push_back(sample.values()[*idx]);
    }
  }

  const std::size_t dim = basis.size();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  std::vector<LatticePoint> pts(static_cast<std::size_t>(n), LatticePoint(d));
  const double diag_offset = options.laplacian_diagonal ? -2.0 * d * n : 0.0;

  for (std::size_t a = 0; a < dim; ++a) {
    double diag = diag_offset;
    for (int j = 0; j < n; ++j) {
      std::size_t local = 0;
      for (int i = 0; i < d; ++i) {
        const std::size_t dig = basis.digit(a, j * d + i);
        local = local * side + dig;
        pts[static_cast<std::size_t>(j)][i] = cube.center[j][i] - cube.radius + static_cast<Coord>(dig);
      }
      diag += potential[static_cast<std::size_t>(j)][local];
    }
    diag += inter(pts);
    const auto ia = static_cast<Eigen::Index>(a);
    m(ia, ia) = diag;
    for (int k = 0; k < basis.coordinates(); ++k) {
      const std::size_t dig = basis.digit(a, k);
      if (dig + 1 < side) {
        const auto ib = static_cast<Eigen::Index>(a + basis.stride(k));
        m(ia, ib) = 1.0;
        m(ib, ia) = 1.0;
      }
    }
  }
  return AssembledOperator{std::move(basis), std::move(m), sample.seed(), sample.trial(), inter.name()};
}

struct Spectrum {
  std::vector<double> eigenvalues;  // ascending, with multiplicity
};

struct SpectrumOptions {
  /// Verify |Mv - lambda v| <= 1e-8 |M| for the extremal eigenpairs (needs
  /// eigenvectors, roughly triples the cost).
  bool check_residual = false;
};

inline Spectrum spectrum(const Eigen::MatrixXd& m, const SpectrumOptions& options = {}) {
  if (m.rows() != m.cols()) throw InvalidInput("spectrum: matrix is not square");
  if (m.rows() == 0) throw InvalidInput("spectrum: empty matrix");
  if (m != m.transpose()) throw InvalidInput("spectrum: matrix is not symmetric (assembly bug)");

  Spectrum out;
  if (!options.check_residual) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("symmetric eigensolver did not converge");
    out.eigenvalues.assign(es.eigenvalues().begin(), es.eigenvalues().end());
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) throw std::runtime_error("symmetric eigensolver did not converge");
    const auto& vals = es.eigenvalues();
    const double norm = std::max(std::abs(vals(0)), std::abs(vals(vals.size() - 1)));
    for (Eigen::Index k : {Eigen::Index{0}, vals.size() - 1}) {
      const Eigen::VectorXd v = es.eigenvectors().col(k);
      const double residual = (m * v - vals(k) * v).norm();
      if (residual > 1e-8 * std::max(norm, 1.0)) {
        throw std::runtime_error("eigenpair residual " + std::to_string(residual) + " too large");
      }
    }
    out.eigenvalues.assign(vals.begin(), vals.end());
  }
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end());
  return out;
}

inline Spectrum spectrum(const AssembledOperator& op, const SpectrumOptions& options = {}) {
  return spectrum(op.matrix, options);
}

/// min_{i,j} |a_i - b_j| by a merge over the sorted lists.
inline double spectral_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InvalidInput("spectral_distance: empty spectrum");
  double best = std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    best = std::min(best, std::abs(a[i] - b[j]));
    if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return best;
}

inline double spectral_distance(const Spectrum& a, const Spectrum& b) {
  return spectral_distance(a.eigenvalues, b.eigenvalues);
}

/// Sites touched by the two cubes: union of their one-particle supports.
inline std::vector<LatticePoint> two_cube_region(const MultiCube& a, const MultiCube& b) {
  BoxUnion u = cube_support(a);
  for (const auto& box : cube_support(b).boxes) u.boxes.push_back(box);
  return u.points();
}

struct ShiftReport {
  double t = 0.0;
  int n_x = 0;  // particles of every x-cube configuration inside Q
  int n_y = 0;
  double expected_shift_x = 0.0;
  double expected_shift_y = 0.0;
  double max_deviation_x = 0.0;
  double max_deviation_y = 0.0;
  double tolerance = 1e-9;
  Spectrum base_x, base_y;
  Spectrum shifted_x, shifted_y;

  bool passed() const noexcept { return max_deviation_x <= tolerance && max_deviation_y <= tolerance; }
};

/// Adds t to V on the certificate box Q and re-diagonalizes both cubes. Every
/// configuration of C_{L'}(u_x) puts the same number of particles in Q, so its
/// spectrum must move by exactly n_x t (likewise n_y t for the y-cube).
inline ShiftReport shift_decomposition_check(const Configuration& u_x, Coord l_x, const Configuration& u_y,
                                             Coord l_y, const SeparabilityCertificate& cert,
                                             const FieldSample& sample, const InteractionSpec& inter, double t,
                                             const AssemblyOptions& options = {}, double tolerance = 1e-9) {
  if (auto check = validate_certificate(cert, u_x, u_y, cert.scale); !check) {
    throw InvalidInput(std::string("invalid certificate, clause (") + to_string(check.violated) +
                       "): " + check.message);
  }
  if (l_x < 0 || l_y < 0 || l_x > cert.scale || l_y > cert.scale) {
    throw InvalidInput("cube radii must lie in [0, certificate scale]");
  }
  const MultiCube cx(u_x, l_x);
  const MultiCube cy(u_y, l_y);

  ShiftReport r;
  r.t = t;
  r.tolerance = tolerance;
  r.n_x = cert.separated == Side::x ? cert.n1 : cert.n2;
  r.n_y = cert.separated == Side::x ? cert.n2 : cert.n1;
  r.expected_shift_x = r.n_x * t;
  r.expected_shift_y = r.n_y * t;

  const FieldSample moved = sample.shifted_on(cert.q, t);
  r.base_x = spectrum(assemble(cx, sample, inter, options));
  r.base_y = spectrum(assemble(cy, sample, inter, options));
  r.shifted_x = spectrum(assemble(cx, moved, inter, options));
  r.shifted_y = spectrum(assemble(cy, moved, inter, options));

  auto deviation = [](const Spectrum& base, const Spectrum& moved_spec, double shift) {
    double dev = 0.0;
    for (std::size_t k = 0; k < base.eigenvalues.size(); ++k) {
      dev = std::max(dev, std::abs(moved_spec.eigenvalues[k] - base.eigenvalues[k] - shift));
    }
    return dev;
  };
  r.max_deviation_x = deviation(r.base_x, r.shifted_x, r.expected_shift_x);
  r.max_deviation_y = deviation(r.base_y, r.shifted_y, r.expected_shift_y);
  return r;
}

}  // namespace mpres
