#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "mpres/hamiltonian.hpp"

using namespace mpres;

namespace {

Configuration line(std::initializer_list<Coord> xs) {
  std::vector<LatticePoint> pts;
  for (Coord x : xs) pts.push_back(LatticePoint{x});
  return Configuration(std::move(pts));
}

Configuration random_config(std::mt19937_64& rng, int n, int d, Coord lo, Coord hi) {
  std::uniform_int_distribution<Coord> coord(lo, hi);
  std::vector<LatticePoint> pts;
  for (int j = 0; j < n; ++j) {
    LatticePoint p(d);
    for (int i = 0; i < d; ++i) p[i] = coord(rng);
    pts.push_back(p);
  }
  return Configuration(std::move(pts));
}

FieldSample constant_field(const MultiCube& cube, double c) {
  const auto pts = cube_support(cube).points();
  return FieldSample(pts, std::vector<double>(pts.size(), c), 0, 0);
}

// Oracle: compare every pair of basis configurations directly.
Eigen::MatrixXd brute_matrix(const CubeBasis& basis, const FieldSample& v, const InteractionSpec& u) {
  const auto n = static_cast<Eigen::Index>(basis.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t a = 0; a < basis.size(); ++a) {
    const auto xa = basis.configuration(a);
    double diag = u(xa.particles());
    for (const auto& p : xa) diag += v.at(p);
    m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) = diag;
    for (std::size_t b = 0; b < basis.size(); ++b) {
      const auto xb = basis.configuration(b);
      int moved = 0;
      Coord step = 0;
      for (int j = 0; j < xa.size(); ++j) {
        Coord l1 = 0;
        for (int i = 0; i < xa.dim(); ++i) l1 += std::abs(xa[j][i] - xb[j][i]);
        if (l1 > 0) {
          ++moved;
          step = l1;
        }
      }
      if (moved == 1 && step == 1) m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = 1.0;
    }
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------- basis

TEST(CubeBasis, Examples) {
  const auto one = enumerate_cube(line({0}), 1);
  ASSERT_EQ(one.size(), 3u);
  EXPECT_EQ(one.configuration(0), line({-1}));
  EXPECT_EQ(one.configuration(1), line({0}));
  EXPECT_EQ(one.configuration(2), line({1}));
  EXPECT_EQ(enumerate_cube(line({0, 5}), 1).size(), 9u);
  EXPECT_EQ(enumerate_cube(line({3}), 0).size(), 1u);
}

TEST(CubeBasis, LexicographicOrderAndRoundTrip) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 3;
    const int d = 1 + trial % 2;
    const auto basis = enumerate_cube(random_config(rng, n, d, -5, 5), 1 + trial % 2);
    for (std::size_t k = 0; k < basis.size(); ++k) {
      const auto x = basis.configuration(k);
      ASSERT_EQ(basis.index_of(x), k);
      if (k > 0) {
        const auto prev = basis.configuration(k - 1);
        ASSERT_TRUE(std::lexicographical_compare(prev.begin(), prev.end(), x.begin(), x.end()));
      }
    }
    EXPECT_THROW(basis.configuration(basis.size()), InvalidInput);
  }
}

TEST(CubeBasis, CapReportsTheDimension) {
  try {
    enumerate_cube(Configuration{{0, 0}, {5, 0}, {10, 0}}, 4);
    FAIL() << "expected ResourceCap";
  } catch (const ResourceCap& e) {
    EXPECT_EQ(e.requested(), 531441u);
    EXPECT_EQ(e.cap(), kEnumerationCap);
    EXPECT_NE(std::string(e.what()).find("531441"), std::string::npos);
  }
  EXPECT_NO_THROW(enumerate_cube(line({0, 0, 0}), 4, 1000));  // 729
  EXPECT_THROW(enumerate_cube(line({0, 0, 0}), 4, 728), ResourceCap);
}

// ---------------------------------------------------------------- assembly

TEST(Assemble, PathGraphSpectrum) {
  const MultiCube cube(line({0}), 1);
  const auto op = assemble(cube, constant_field(cube, 0.0), InteractionSpec{});
  const auto spec = spectrum(op, {.check_residual = true});
  ASSERT_EQ(spec.eigenvalues.size(), 3u);
  for (int k = 1; k <= 3; ++k) {
    EXPECT_NEAR(spec.eigenvalues[static_cast<std::size_t>(3 - k)], 2.0 * std::cos(k * std::numbers::pi / 4.0),
                1e-10);
  }
  EXPECT_NEAR(spec.eigenvalues[0], -std::sqrt(2.0), 1e-10);
  EXPECT_NEAR(spec.eigenvalues[1], 0.0, 1e-10);
  EXPECT_NEAR(spec.eigenvalues[2], std::sqrt(2.0), 1e-10);
}

TEST(Assemble, MatchesPairwiseOracle) {
  std::mt19937_64 rng(2);
  const InteractionSpec inters[] = {InteractionSpec{}, InteractionSpec{PairwiseContact{1.5, 1}},
                                    InteractionSpec{PairwiseTable{{2.0, -0.5, 0.25}}}};
  for (int trial = 0; trial < 24; ++trial) {
    const int n = 1 + trial % 3;
    const int d = 1 + (trial / 3) % 2;
    const Coord l = 1 + trial % 2;
    if (std::pow(2 * l + 1, n * d) > 800) continue;
    const MultiCube cube(random_config(rng, n, d, -3, 3), l);
    const auto v = sample_field(FieldModel::gaussian(0.0, 1.0), cube_support(cube), 5, static_cast<unsigned>(trial));
    const auto& inter = inters[trial % 3];
    const auto op = assemble(cube, v, inter);
    const Eigen::MatrixXd oracle = brute_matrix(op.basis, v, inter);
    EXPECT_LE((op.matrix - oracle).cwiseAbs().maxCoeff(), 1e-12) << "trial " << trial;
    const auto shifted = assemble(cube, v, inter, {.laplacian_diagonal = true});
    const Eigen::MatrixXd diff = shifted.matrix - op.matrix;
    EXPECT_TRUE(diff.isApprox(-2.0 * d * n * Eigen::MatrixXd::Identity(diff.rows(), diff.cols())));
  }
}

TEST(Assemble, ConstantFieldShiftsSpectrumByNc) {
  const MultiCube cube(Configuration{{0, 0}, {1, 2}}, 1);
  const InteractionSpec contact{PairwiseContact{0.7, 0}};
  const auto base = spectrum(assemble(cube, constant_field(cube, 0.0), contact));
  const auto moved = spectrum(assemble(cube, constant_field(cube, 0.3), contact));
  for (std::size_t k = 0; k < base.eigenvalues.size(); ++k) {
    EXPECT_NEAR(moved.eigenvalues[k], base.eigenvalues[k] + 2 * 0.3, 1e-10);
  }
}

TEST(Assemble, ContactInteractionOnDiagonal) {
  const MultiCube cube(line({0, 1}), 1);
  const auto op = assemble(cube, constant_field(cube, 0.0), InteractionSpec{PairwiseContact{2.5, 0}});
  for (std::size_t a = 0; a < op.basis.size(); ++a) {
    const auto x = op.basis.configuration(a);
    const double expect = x[0] == x[1] ? 2.5 : 0.0;
    EXPECT_EQ(op.matrix(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)), expect);
  }
}

TEST(Assemble, HopCountsAndDirichletBoundary) {
  for (int n = 1; n <= 3; ++n) {
    for (int d = 1; d <= 2; ++d) {
      const Coord l = n * d > 4 ? 1 : 2;
      std::vector<LatticePoint> centers(static_cast<std::size_t>(n), LatticePoint(d));
      const MultiCube cube{Configuration(centers), l};
      const auto op = assemble(cube, constant_field(cube, 0.0), InteractionSpec{});
      const double side = 2.0 * l + 1;
      const double edges = n * d * (side - 1) * std::pow(side, n * d - 1);
      EXPECT_DOUBLE_EQ(op.matrix.sum(), 2.0 * edges);
      for (std::size_t a = 0; a < op.basis.size(); ++a) {
        int inside = 0;
        for (int k = 0; k < op.basis.coordinates(); ++k) {
          const auto dig = op.basis.digit(a, k);
          inside += (dig > 0) + (dig + 1 < op.basis.side());
        }
        EXPECT_EQ(op.matrix.row(static_cast<Eigen::Index>(a)).sum(), inside);
      }
    }
  }
}

TEST(Assemble, CoverageGapAndBoundedInteraction) {
  const MultiCube cube(line({0}), 2);
  const auto pts = Box(LatticePoint{-1}, LatticePoint{2}).points();
  const FieldSample partial(pts, std::vector<double>(pts.size(), 0.0), 0, 0);
  EXPECT_THROW(assemble(cube, partial, InteractionSpec{}), InvalidInput);

  const MultiCube pair(line({0, 0}), 1);
  InteractionSpec wild{CustomBounded{[](std::span<const LatticePoint> x) { return 10.0 * x[0][0]; }, 5.0}};
  EXPECT_THROW(assemble(pair, constant_field(pair, 0.0), wild), InvalidInput);
  InteractionSpec tame{CustomBounded{[](std::span<const LatticePoint> x) { return 0.5 * x[0][0]; }, 5.0}};
  EXPECT_NO_THROW(assemble(pair, constant_field(pair, 0.0), tame));
}

TEST(Assemble, DenseCapIsEnforced) {
  const MultiCube cube(line({0, 0}), 2);
  EXPECT_THROW(assemble(cube, constant_field(cube, 0.0), InteractionSpec{}, {.dim_cap = 24}), ResourceCap);
}

// ---------------------------------------------------------------- spectrum

TEST(Spectrum, DiagonalMatrix) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(4, 4);
  m.diagonal() << 3.0, -1.0, 2.0, 0.5;
  const auto s = spectrum(m);
  EXPECT_EQ(s.eigenvalues, (std::vector<double>{-1.0, 0.5, 2.0, 3.0}));
}

TEST(Spectrum, RejectsNonSymmetric) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(3, 3);
  m(0, 1) = 1.0;
  EXPECT_THROW(spectrum(m), InvalidInput);
  EXPECT_THROW(spectrum(Eigen::MatrixXd(0, 0)), InvalidInput);
}

TEST(Spectrum, TraceGershgorinAndResidual) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + trial % 3;
    const int d = 1 + trial % 2;
    const Coord l = n * d >= 4 ? 1 : 2;
    const MultiCube cube(random_config(rng, n, d, -4, 4), l);
    const auto v = sample_field(FieldModel::uniform(-2.0, 2.0), cube_support(cube), 9, static_cast<unsigned>(trial));
    const auto op = assemble(cube, v, InteractionSpec{PairwiseContact{1.0, 0}});
    const auto s = spectrum(op, {.check_residual = true});
    const double sum = std::accumulate(s.eigenvalues.begin(), s.eigenvalues.end(), 0.0);
    const double norm = op.matrix.cwiseAbs().rowwise().sum().maxCoeff();
    EXPECT_NEAR(sum, op.matrix.trace(), 1e-8 * static_cast<double>(op.basis.size()) * norm);
    const double lo = op.matrix.diagonal().minCoeff() - 2.0 * n * d;
    const double hi = op.matrix.diagonal().maxCoeff() + 2.0 * n * d;
    EXPECT_GE(s.eigenvalues.front(), lo - 1e-10);
    EXPECT_LE(s.eigenvalues.back(), hi + 1e-10);
  }
}

TEST(Spectrum, PermutationCovariance) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 2;
    const auto u = random_config(rng, n, 1, -6, 6);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const MultiCube a(u, 1), b(u.permuted(perm), 1);
    const auto v = sample_field(FieldModel::gaussian(0.0, 1.0), cube_support(a), 10, static_cast<unsigned>(trial));
    const InteractionSpec inter{PairwiseTable{{1.0, 0.5}}};
    const auto sa = spectrum(assemble(a, v, inter));
    const auto sb = spectrum(assemble(b, v, inter));
    for (std::size_t k = 0; k < sa.eigenvalues.size(); ++k) {
      EXPECT_NEAR(sa.eigenvalues[k], sb.eigenvalues[k], 1e-10);
    }
  }
}

// ---------------------------------------------------------------- distance

TEST(SpectralDistance, Examples) {
  const std::vector<double> a{0.0, 1.0}, b{0.4};
  EXPECT_DOUBLE_EQ(spectral_distance(a, b), 0.4);
  EXPECT_EQ(spectral_distance(a, a), 0.0);
  EXPECT_THROW(spectral_distance(a, std::vector<double>{}), InvalidInput);
}

TEST(SpectralDistance, MatchesQuadraticOracle) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> a(1 + trial % 13), b(1 + trial % 7);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double best = std::numeric_limits<double>::infinity();
    for (double x : a) {
      for (double y : b) best = std::min(best, std::abs(x - y));
    }
    ASSERT_EQ(spectral_distance(a, b), best);
  }
}

// ---------------------------------------------------------------- shift check

TEST(ShiftDecomposition, ChargeTransferPair) {
  const auto x = line({0, 0, 40});
  const auto y = line({0, 40, 40});
  const auto cert = *weak_separability(x, y, 1);
  const MultiCube cx(x, 1), cy(y, 1);
  const auto v = sample_field(FieldModel::gaussian(0.0, 1.0), two_cube_region(cx, cy), 12, 0);
  const auto zero = shift_decomposition_check(x, 1, y, 1, cert, v, InteractionSpec{}, 0.0);
  EXPECT_EQ(zero.max_deviation_x, 0.0);
  EXPECT_EQ(zero.max_deviation_y, 0.0);
  for (double t : {0.1, 0.37, 1.0, -2.5}) {
    const auto r = shift_decomposition_check(x, 1, y, 1, cert, v, InteractionSpec{PairwiseContact{1.0, 0}}, t);
    EXPECT_EQ(r.n_x, 2);
    EXPECT_EQ(r.n_y, 1);
    EXPECT_DOUBLE_EQ(r.expected_shift_x, 2 * t);
    EXPECT_DOUBLE_EQ(r.expected_shift_y, t);
    EXPECT_TRUE(r.passed()) << r.max_deviation_x << " " << r.max_deviation_y;
  }
}

TEST(ShiftDecomposition, RandomCertifiedInstances) {
  std::mt19937_64 rng(6);
  int tested = 0;
  while (tested < 25) {
    const int n = 2 + tested % 2;
    const Coord l = 1;
    const auto x = random_config(rng, n, 1, -20, 20);
    const auto y = random_config(rng, n, 1, -20, 20);
    if (sym_distance(x, y) <= 2 * (n + 1) * l) continue;
    ++tested;
    const auto cert = *weak_separability(x, y, l);
    const MultiCube cx(x, l), cy(y, l);
    const auto v = sample_field(FieldModel::uniform(0.0, 1.0), two_cube_region(cx, cy), 13,
                                static_cast<unsigned>(tested));
    const auto r = shift_decomposition_check(x, l, y, l, cert, v, InteractionSpec{PairwiseContact{0.5, 1}}, 0.37);
    EXPECT_TRUE(r.passed());
    EXPECT_EQ(std::abs(r.n_x - r.n_y), cert.n1 - cert.n2);
  }
}

TEST(ShiftDecomposition, RejectsInvalidCertificate) {
  const auto x = line({0, 0, 40});
  const auto y = line({0, 40, 40});
  auto cert = *weak_separability(x, y, 1);
  const MultiCube cx(x, 1), cy(y, 1);
  const auto v = sample_field(FieldModel::gaussian(0.0, 1.0), two_cube_region(cx, cy), 12, 0);
  EXPECT_THROW(shift_decomposition_check(x, 2, y, 1, cert, v, InteractionSpec{}, 0.1), InvalidInput);
  cert.n2 = cert.n1;
  EXPECT_THROW(shift_decomposition_check(x, 1, y, 1, cert, v, InteractionSpec{}, 0.1), InvalidInput);
}

TEST(ShiftDecomposition, ShiftOutsideQIsNotASpectralShift) {
  // Sanity for the check itself: moving V on a box that cuts through a cube
  // does not translate the spectrum.
  const auto x = line({0, 0, 40});
  const MultiCube cx(x, 1);
  const auto v = sample_field(FieldModel::gaussian(0.0, 1.0), cube_support(cx), 3, 0);
  const Box half(LatticePoint{0}, LatticePoint{1});
  const auto base = spectrum(assemble(cx, v, InteractionSpec{}));
  const auto moved = spectrum(assemble(cx, v.shifted_on(half, 1.0), InteractionSpec{}));
  double dev = 0.0;
  for (std::size_t k = 0; k < base.eigenvalues.size(); ++k) {
    dev = std::max(dev, std::abs(moved.eigenvalues[k] - base.eigenvalues[k] - 2.0));
  }
  EXPECT_GT(dev, 1e-3);
}
