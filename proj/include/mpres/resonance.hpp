#pragma once

// Monte Carlo estimates of eigenvalue-concentration probabilities for one
// cube (distance from a fixed energy) and for pairs of distant cubes, with the
// analytic bound curve for Gaussian disorder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "mpres/errors.hpp"
#include "mpres/geometry.hpp"
#include "mpres/hamiltonian.hpp"
#include "mpres/lattice.hpp"
#include "mpres/random_field.hpp"

namespace mpres {

inline constexpr double kWilsonZ95 = 1.959963984540054;

struct ProbabilityInterval {
  double p = 0.0;
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval for k successes out of n.
inline ProbabilityInterval wilson_interval(std::size_t k, std::size_t n, double z = kWilsonZ95) {
  if (n == 0) return {0.0, 0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  // The interval closes at 0 (k = 0) and 1 (k = n) exactly; pin those ends
  // so rounding cannot leave them a few ulps inside.
  const double lo = k == 0 ? 0.0 : std::max(0.0, center - half);
  const double hi = k == n ? 1.0 : std::min(1.0, center + half);
  return {p, lo, hi};
}

class EmpiricalCdf {
 public:
  EmpiricalCdf() = default;
  explicit EmpiricalCdf(std::vector<double> values) : sorted_(std::move(values)) {
    std::sort(sorted_.begin(), sorted_.end());
  }

  std::size_t size() const noexcept { return sorted_.size(); }
  std::span<const double> values() const noexcept { return sorted_; }

  std::size_t count_at_most(double s) const {
    return static_cast<std::size_t>(std::upper_bound(sorted_.begin(), sorted_.end(), s) - sorted_.begin());
  }

  double operator()(double s) const {
    return sorted_.empty() ? 0.0 : static_cast<double>(count_at_most(s)) / static_cast<double>(sorted_.size());
  }

  ProbabilityInterval interval(double s) const { return wilson_interval(count_at_most(s), sorted_.size()); }

  friend bool operator==(const EmpiricalCdf&, const EmpiricalCdf&) = default;

 private:
  std::vector<double> sorted_;
};

/// Per-trial observations from one worker over trials [begin, end).
struct PartialCdf {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
  std::vector<double> values;  // values[k] belongs to trial begin + k
};

/// Merges worker results. Ranges must be disjoint; the merge does not depend
/// on their order.
inline EmpiricalCdf aggregate(std::vector<PartialCdf> parts) {
  std::sort(parts.begin(), parts.end(), [](const PartialCdf& a, const PartialCdf& b) { return a.begin < b.begin; });
  std::vector<double> all;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].end < parts[i].begin || parts[i].values.size() != parts[i].end - parts[i].begin) {
      throw InvalidInput("partial result with inconsistent trial range");
    }
    if (i > 0 && parts[i].begin < parts[i - 1].end) {
      throw InvalidInput("overlapping trial ranges [" + std::to_string(parts[i - 1].begin) + "," +
                         std::to_string(parts[i - 1].end) + ") and [" + std::to_string(parts[i].begin) + "," +
                         std::to_string(parts[i].end) + ")");
    }
    all.insert(all.end(), parts[i].values.begin(), parts[i].values.end());
  }
  return EmpiricalCdf(std::move(all));
}

/// Runs `trial(t)` for t in [0, trials) on `workers` threads, each over a
/// contiguous block of trial indices.
inline std::vector<PartialCdf> run_partitioned(std::uint64_t trials, unsigned workers,
                                               const std::function<double(std::uint64_t)>& trial) {
  workers = std::max(1u, workers);
  if (workers > trials && trials > 0) workers = static_cast<unsigned>(trials);
  std::vector<PartialCdf> parts(workers);
  const std::uint64_t chunk = trials / workers;
  const std::uint64_t extra = trials % workers;
  std::uint64_t next = 0;
  for (unsigned w = 0; w < workers; ++w) {
    parts[w].begin = next;
    next += chunk + (w < extra ? 1 : 0);
    parts[w].end = next;
  }

  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](unsigned w) {
    try {
      auto& p = parts[w];
      p.values.reserve(p.end - p.begin);
      for (std::uint64_t t = p.begin; t < p.end; ++t) p.values.push_back(trial(t));
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> threads;
    for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, w);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return parts;
}

/// h(s) = M' M'' C' (R+1)^{A'} (2s)^{b'} + C'' R^{A''} (2s)^{b''}, with M', M''
/// the cube cardinalities and R the largest certificate-box diameter 2N max(L', L'').
struct BoundCurve {
  double cube_product = 0.0;
  Coord diam_bound = 0;
  CcmConstants ccm;

  double operator()(double s) const {
    return cube_product * ccm.modulus(diam_bound, 2.0 * s) + ccm.exceptional_probability(diam_bound, 2.0 * s);
  }
};

struct ResonanceRun {
  FieldModel model = FieldModel::gaussian(0.0, 1.0);
  Configuration u1;
  Coord l1 = 0;
  Configuration u2;
  Coord l2 = 0;
  InteractionSpec interaction;
  std::vector<double> s_grid;
  std::uint64_t trials = 0;
  std::uint64_t master_seed = 0;
  AssemblyOptions assembly;
};

struct CurvePoint {
  double s = 0.0;
  ProbabilityInterval empirical;
  std::optional<double> bound;
  bool respected = true;
};

struct FittedModulus {
  double c_prime = 0.0;  // nu(s) ~ c_prime * s^b_prime on the certificate box
  double b_prime = 0.0;
  std::size_t trials = 0;
};

struct Theorem1Result {
  EmpiricalCdf cdf;
  std::vector<CurvePoint> points;
  std::optional<BoundCurve> bound;      // analytic (Gaussian) or fitted
  std::optional<FittedModulus> fitted;  // set for non-Gaussian laws
  SeparabilityCertificate certificate;
  Coord sym_distance = 0;

  bool all_respected() const {
    return std::all_of(points.begin(), points.end(), [](const CurvePoint& p) { return p.respected; });
  }
};

/// Throws HypothesisViolation unless d_S(u', u'') > 2(N+1) max(L', L'').
inline Coord require_separation(const Configuration& u1, Coord l1, const Configuration& u2, Coord l2) {
  require_compatible(u1, u2);
  const Coord l = std::max(l1, l2);
  const Coord ds = sym_distance(u1, u2);
  const Coord need = 2 * (u1.size() + 1) * l;
  if (ds <= need) {
    throw HypothesisViolation("separation hypothesis violated: d_S(u', u'') = " + std::to_string(ds) +
                              " does not exceed 2(N+1)L = " + std::to_string(need));
  }
  return ds;
}

inline void validate_run(const ResonanceRun& run) {
  require_compatible(run.u1, run.u2);
  if (run.l1 < 0 || run.l2 < 0) throw InvalidInput("cube radii must be >= 0");
  if (run.s_grid.empty()) throw InvalidInput("s_grid must not be empty");
  if (!std::is_sorted(run.s_grid.begin(), run.s_grid.end())) throw InvalidInput("s_grid must be sorted ascending");
  for (double s : run.s_grid) {
    if (!(s > 0.0 && s < 1.0)) throw InvalidInput("s_grid values must lie in (0, 1)");
  }
  require_separation(run.u1, run.l1, run.u2, run.l2);
}

/// Spectral distance between the two cubes for one trial of the coupled field.
inline double two_cube_trial(const ResonanceRun& run, std::uint64_t trial) {
  const MultiCube c1(run.u1, run.l1);
  const MultiCube c2(run.u2, run.l2);
  const auto region = two_cube_region(c1, c2);
  const FieldSample sample = sample_field(run.model, region, run.master_seed, trial);
  const auto s1 = spectrum(assemble(c1, sample, run.interaction, run.assembly));
  const auto s2 = spectrum(assemble(c2, sample, run.interaction, run.assembly));
  return spectral_distance(s1, s2);
}

inline BoundCurve gaussian_bound_curve(const FieldModel& model, const Configuration& u1, Coord l1,
                                       const Configuration& u2, Coord l2) {
  BoundCurve curve;
  curve.cube_product = static_cast<double>(MultiCube(u1, l1).cardinality()) *
                       static_cast<double>(MultiCube(u2, l2).cardinality());
  curve.diam_bound = 2 * u1.size() * std::max(l1, l2);
  curve.ccm = gaussian_ccm_constants(model, u1.dim(), u1.size());
  return curve;
}

/// Fits nu(s) ~ C s^b (least squares in log-log) to the empirical
/// conditional increments of xi_Q over the certificate box. Windows are the
/// requested s values plus a fixed grid scaled to the range of the law; a
/// window enters the fit only if its best bin holds enough samples for a 20%
/// relative standard error (tiny windows are dominated by the maximum over
/// noisy counts and would flatten the exponent).
inline FittedModulus fit_conditional_modulus(const FieldModel& model, const Box& q, std::span<const double> s_values,
                                             std::uint64_t seed, std::size_t trials = 200000) {
  double lo = 0.0;
  double hi = 0.0;
  if (const auto* u = std::get_if<UniformLaw>(&model.law())) {
    lo = u->a;
    hi = u->b;
  } else if (const auto* pw = std::get_if<PiecewiseConstantLaw>(&model.law())) {
    lo = pw->breakpoints.front();
    hi = pw->breakpoints.back();
  } else {
    throw InvalidInput("fit_conditional_modulus applies to bounded laws");
  }
  const double card = static_cast<double>(q.cardinality());
  const double reach = (hi - lo) * (card - 1.0) / card;
  EtaBinning bins{-reach, reach + 1e-12, std::max(2.0 * reach / 50.0, 1e-9), 100};

  std::vector<double> windows(s_values.begin(), s_values.end());
  for (double f : {0.005, 0.01, 0.02, 0.05, 0.1}) windows.push_back(f * (hi - lo));
  std::sort(windows.begin(), windows.end());
  windows.erase(std::unique(windows.begin(), windows.end()), windows.end());
  const auto est = empirical_conditional_modulus(model, q, windows.back(), bins, trials, seed);

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (double s : windows) {
    const auto [nu, se] = est.max_increment(s);
    if (!(nu > 0.0) || se > 0.2 * nu) continue;
    const double x = std::log(s);
    const double y = std::log(nu);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  FittedModulus fit;
  fit.trials = trials;
  if (m >= 2 && sxx * m - sx * sx > 0.0) {
    fit.b_prime = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    fit.c_prime = std::exp((sy - fit.b_prime * sx) / m);
  } else if (m == 1) {
    fit.b_prime = 1.0;
    fit.c_prime = std::exp(sy - sx);
  }
  return fit;
}

/// Verdict rule: the bound is respected at s when the empirical probability
/// does not exceed the bound by more than the Wilson upper margin.
inline bool bound_respected(const ProbabilityInterval& e, double bound) { return e.p <= bound + (e.hi - e.p); }

inline Theorem1Result run_theorem1(const ResonanceRun& run, unsigned workers = 1) {
  validate_run(run);
  Theorem1Result result;
  result.sym_distance = sym_distance(run.u1, run.u2);
  auto cert = weak_separability(run.u1, run.u2, std::max(run.l1, run.l2));
  if (!cert) throw std::logic_error("no separability certificate under the separation hypothesis");
  result.certificate = *cert;

  result.cdf = aggregate(run_partitioned(run.trials, workers, [&](std::uint64_t t) { return two_cube_trial(run, t); }));

  if (run.model.is_gaussian()) {
    result.bound = gaussian_bound_curve(run.model, run.u1, run.l1, run.u2, run.l2);
  } else {
    const auto fit = fit_conditional_modulus(run.model, cert->q, run.s_grid, run.master_seed);
    result.fitted = fit;
    BoundCurve curve;
    curve.cube_product = static_cast<double>(MultiCube(run.u1, run.l1).cardinality()) *
                         static_cast<double>(MultiCube(run.u2, run.l2).cardinality());
    curve.diam_bound = cert->q.diam();
    curve.ccm.c_prime = fit.c_prime;
    curve.ccm.a_prime = 0.0;
    curve.ccm.b_prime = fit.b_prime;
    curve.ccm.fitted = true;
    curve.ccm.dim = run.u1.dim();
    curve.ccm.particles = run.u1.size();
    result.bound = curve;
  }

  for (double s : run.s_grid) {
    CurvePoint pt;
    pt.s = s;
    pt.empirical = result.cdf.interval(s);
    pt.bound = (*result.bound)(s);
    pt.respected = bound_respected(pt.empirical, *pt.bound);
    result.points.push_back(pt);
  }
  return result;
}

struct W1Run {
  FieldModel model = FieldModel::gaussian(0.0, 1.0);
  Configuration u;
  Coord l = 0;
  double energy = 0.0;
  std::vector<double> eps_grid;
  std::uint64_t trials = 0;
  std::uint64_t master_seed = 0;
  InteractionSpec interaction;
  AssemblyOptions assembly;
};

struct W1Result {
  EmpiricalCdf cdf;  // of dist(E, sigma(H))
  std::vector<CurvePoint> points;
  std::size_t volume = 0;      // |Lambda| = (2L+1)^{Nd}
  double fitted_slope = 0.0;  // C in the diagnostic reference C |Lambda| eps
};

inline double energy_trial(const W1Run& run, std::uint64_t trial) {
  const MultiCube cube(run.u, run.l);
  const auto region = cube_support(cube).points();
  const FieldSample sample = sample_field(run.model, region, run.master_seed, trial);
  const auto spec = spectrum(assemble(cube, sample, run.interaction, run.assembly));
  const double e = run.energy;
  return spectral_distance(spec.eigenvalues, std::span<const double>(&e, 1));
}

/// Empirical P[dist(E, sigma(H_Lambda)) <= eps], with a least-squares
/// reference line C |Lambda| eps (diagnostic only).
inline W1Result run_w1(const W1Run& run, unsigned workers = 1) {
  if (run.l < 0) throw InvalidInput("cube radius must be >= 0");
  if (!std::is_sorted(run.eps_grid.begin(), run.eps_grid.end())) {
    throw InvalidInput("eps_grid must be sorted ascending");
  }
  for (double e : run.eps_grid) {
    if (!(e >= 0.0) || !std::isfinite(e)) throw InvalidInput("eps_grid values must be finite and >= 0");
  }
  W1Result result;
  result.volume = MultiCube(run.u, run.l).cardinality();
  result.cdf = aggregate(run_partitioned(run.trials, workers, [&](std::uint64_t t) { return energy_trial(run, t); }));
  double num = 0.0;
  double den = 0.0;
  for (double e : run.eps_grid) {
    CurvePoint pt;
    pt.s = e;
    pt.empirical = result.cdf.interval(e);
    const double x = static_cast<double>(result.volume) * e;
    num += pt.empirical.p * x;
    den += x * x;
    result.points.push_back(pt);
  }
  result.fitted_slope = den > 0.0 ? num / den : 0.0;
  for (auto& pt : result.points) pt.bound = result.fitted_slope * static_cast<double>(result.volume) * pt.s;
  return result;
}

struct ChargeTransferRun {
  LatticePoint a;
  LatticePoint b;
  Coord l = 1;
  FieldModel model = FieldModel::gaussian(0.0, 1.0);
  InteractionSpec interaction;
  std::vector<double> t_values{0.0, 0.1, 0.37, 1.0};
  std::vector<double> s_grid;
  std::uint64_t trials = 0;
  std::uint64_t master_seed = 0;
  double scan_step = 1e-3;
  int scan_half_width = 50;
  AssemblyOptions assembly;
};

struct SlopeScan {
  std::vector<double> t;
  std::vector<double> distance;
  std::vector<double> slope;   // finite differences between consecutive t
  double dominant_slope = 0.0;  // median |slope|
  double matching_fraction = 0.0;  // share of |slope| within 1e-6 of |n1 - n2|
};

struct ChargeTransferReport {
  Configuration x;  // (a, a, b)
  Configuration y;  // (a, b, b)
  SeparabilityCertificate certificate;
  std::vector<ShiftReport> shifts;
  SlopeScan scan;
  Theorem1Result theorem1;
};

/// (a, a, b) versus (a, b, b): certificate, exact spectral shift under a
/// constant added on Q, a scan of the spectral distance in that constant,
/// and the two-cube Monte Carlo comparison.
inline ChargeTransferReport run_charge_transfer_demo(const ChargeTransferRun& run, unsigned workers = 1) {
  require_same_dim(run.a, run.b);
  ChargeTransferReport rep;
  rep.x = Configuration{run.a, run.a, run.b};
  rep.y = Configuration{run.a, run.b, run.b};
  require_separation(rep.x, run.l, rep.y, run.l);

  auto cert = weak_separability(rep.x, rep.y, run.l);
  if (!cert) throw std::logic_error("charge-transfer pair has no certificate");
  rep.certificate = *cert;

  const MultiCube cx(rep.x, run.l);
  const MultiCube cy(rep.y, run.l);
  const auto region = two_cube_region(cx, cy);
  const FieldSample sample = sample_field(run.model, region, run.master_seed, 0);
  for (double t : run.t_values) {
    rep.shifts.push_back(
        shift_decomposition_check(rep.x, run.l, rep.y, run.l, *cert, sample, run.interaction, t, run.assembly));
  }

  const int gap = std::abs(cert->n1 - cert->n2);
  for (int k = -run.scan_half_width; k <= run.scan_half_width; ++k) {
    const double t = k * run.scan_step;
    const FieldSample moved = sample.shifted_on(cert->q, t);
    rep.scan.t.push_back(t);
    rep.scan.distance.push_back(spectral_distance(spectrum(assemble(cx, moved, run.interaction, run.assembly)),
                                                  spectrum(assemble(cy, moved, run.interaction, run.assembly))));
  }
  std::vector<double> abs_slopes;
  std::size_t matching = 0;
  for (std::size_t k = 1; k < rep.scan.t.size(); ++k) {
    const double sl = (rep.scan.distance[k] - rep.scan.distance[k - 1]) / (rep.scan.t[k] - rep.scan.t[k - 1]);
    rep.scan.slope.push_back(sl);
    abs_slopes.push_back(std::abs(sl));
    if (std::abs(std::abs(sl) - gap) <= 1e-6) ++matching;
  }
  if (!abs_slopes.empty()) {
    std::nth_element(abs_slopes.begin(), abs_slopes.begin() + static_cast<std::ptrdiff_t>(abs_slopes.size() / 2),
                     abs_slopes.end());
    rep.scan.dominant_slope = abs_slopes[abs_slopes.size() / 2];
    rep.scan.matching_fraction = static_cast<double>(matching) / static_cast<double>(rep.scan.slope.size());
  }

  ResonanceRun tr;
  tr.model = run.model;
  tr.u1 = rep.x;
  tr.l1 = run.l;
  tr.u2 = rep.y;
  tr.l2 = run.l;
  tr.interaction = run.interaction;
  tr.s_grid = run.s_grid;
  tr.trials = run.trials;
  tr.master_seed = run.master_seed;
  tr.assembly = run.assembly;
  rep.theorem1 = run_theorem1(tr, workers);
  return rep;
}

}  // namespace mpres
