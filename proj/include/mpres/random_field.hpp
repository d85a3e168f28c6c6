#pragma once

// IID disorder: samplers with counter-style seeding, the sample-mean /
// fluctuation split over a box, and handles on the continuity of the
// conditional law of the sample mean.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mpres/errors.hpp"
#include "mpres/geometry.hpp"
#include "mpres/lattice.hpp"

namespace mpres {

struct GaussianLaw {
  double mean = 0.0;
  double variance = 1.0;
  double sigma() const { return std::sqrt(variance); }
};

struct UniformLaw {
  double a = 0.0;
  double b = 1.0;
};

/// Density densities[i] on [breakpoints[i], breakpoints[i+1]).
struct PiecewiseConstantLaw {
  std::vector<double> breakpoints;
  std::vector<double> densities;
};

using FieldLaw = std::variant<GaussianLaw, UniformLaw, PiecewiseConstantLaw>;

class FieldModel {
 public:
  explicit FieldModel(FieldLaw law) : law_(std::move(law)) { validate(); }

  static FieldModel gaussian(double mean, double variance) { return FieldModel(GaussianLaw{mean, variance}); }
  static FieldModel uniform(double a, double b) { return FieldModel(UniformLaw{a, b}); }
  static FieldModel piecewise(std::vector<double> breakpoints, std::vector<double> densities) {
    return FieldModel(PiecewiseConstantLaw{std::move(breakpoints), std::move(densities)});
  }

  const FieldLaw& law() const noexcept { return law_; }
  bool is_gaussian() const noexcept { return std::holds_alternative<GaussianLaw>(law_); }

  const char* name() const noexcept {
    switch (law_.index()) {
      case 0: return "gaussian";
      case 1: return "uniform";
      default: return "piecewise_constant";
    }
  }

  /// Maps one uniform u in [0,1) (two for the Gaussian) to a draw of the law.
  double transform(double u1, double u2) const {
    return std::visit(
        [&](const auto& l) -> double {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, GaussianLaw>) {
            // Box-Muller, cosine branch; 1 - u1 lies in (0, 1].
            const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
            return l.mean + l.sigma() * r * std::cos(2.0 * std::numbers::pi * u2);
          } else if constexpr (std::is_same_v<L, UniformLaw>) {
            return l.a + (l.b - l.a) * u1;
          } else {
            double acc = 0.0;
            const std::size_t k = l.densities.size();
            for (std::size_t i = 0; i < k; ++i) {
              const double width = l.breakpoints[i + 1] - l.breakpoints[i];
              const double mass = l.densities[i] * width;
              if (mass > 0.0 && (u1 < acc + mass || i + 1 == k)) {
                const double frac = std::clamp((u1 - acc) / mass, 0.0, 1.0);
                return l.breakpoints[i] + frac * width;
              }
              acc += mass;
            }
            return l.breakpoints.back();
          }
        },
        law_);
  }

 private:
  void validate() const {
    std::visit(
        [](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, GaussianLaw>) {
            if (!(l.variance > 0.0) || !std::isfinite(l.variance) || !std::isfinite(l.mean)) {
              throw InvalidInput("gaussian law needs finite mean and variance > 0");
            }
          } else if constexpr (std::is_same_v<L, UniformLaw>) {
            if (!(l.a < l.b) || !std::isfinite(l.a) || !std::isfinite(l.b)) {
              throw InvalidInput("uniform law needs finite a < b");
            }
          } else {
            if (l.breakpoints.size() < 2 || l.densities.size() + 1 != l.breakpoints.size()) {
              throw InvalidInput("piecewise law needs k+1 breakpoints for k densities (k >= 1)");
            }
            double total = 0.0;
            for (std::size_t i = 0; i < l.densities.size(); ++i) {
              if (!(l.breakpoints[i] < l.breakpoints[i + 1])) {
                throw InvalidInput("piecewise breakpoints must be strictly increasing");
              }
              if (!(l.densities[i] >= 0.0) || !std::isfinite(l.densities[i])) {
                throw InvalidInput("piecewise densities must be finite and >= 0");
              }
              total += l.densities[i] * (l.breakpoints[i + 1] - l.breakpoints[i]);
            }
            if (std::abs(total - 1.0) > 1e-9) {
              throw InvalidInput("piecewise densities integrate to " + std::to_string(total) + ", not 1");
            }
          }
        },
        law_);
  }

  FieldLaw law_;
};

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
inline double unit_interval(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

/// Engine for one (master seed, trial) stream. seed_seq and mt19937_64 are
/// fully specified by the standard, so streams agree across platforms.
inline std::mt19937_64 trial_engine(std::uint64_t master_seed, std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
  return std::mt19937_64(seq);
}

/// Next draw of the model from an engine; always consumes two engine outputs
/// so site k of a region uses outputs 2k and 2k+1.
inline double draw(const FieldModel& model, std::mt19937_64& engine) {
  const double u1 = unit_interval(engine());
  const double u2 = unit_interval(engine());
  return model.transform(u1, u2);
}

}  // namespace detail

/// One realization of V on a finite region, sorted lexicographically.
class FieldSample {
 public:
  FieldSample() = default;
  FieldSample(std::vector<LatticePoint> sites, std::vector<double> values, std::uint64_t seed,
              std::uint64_t trial)
      : sites_(std::move(sites)), values_(std::move(values)), seed_(seed), trial_(trial) {
    if (sites_.size() != values_.size()) throw InvalidInput("field sample: sites/values size mismatch");
    if (!std::is_sorted(sites_.begin(), sites_.end())) throw InvalidInput("field sample sites must be sorted");
  }

  std::span<const LatticePoint> sites() const noexcept { return sites_; }
  std::span<const double> values() const noexcept { return values_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t trial() const noexcept { return trial_; }
  std::size_t size() const noexcept { return sites_.size(); }

  std::optional<std::size_t> find(const LatticePoint& p) const {
    auto it = std::lower_bound(sites_.begin(), sites_.end(), p);
    if (it == sites_.end() || !(*it == p)) return std::nullopt;
    return static_cast<std::size_t>(it - sites_.begin());
  }

  bool covers(const LatticePoint& p) const { return find(p).has_value(); }

  bool covers(const Box& b) const {
    for (const auto& p : b.points()) {
      if (!covers(p)) return false;
    }
    return true;
  }

  double at(const LatticePoint& p) const {
    auto idx = find(p);
    if (!idx) throw InvalidInput("field sample does not cover the requested site");
    return values_[*idx];
  }

  /// Copy with V(x) += t for every covered site x in q.
  FieldSample shifted_on(const Box& q, double t) const {
    FieldSample out = *this;
    for (std::size_t i = 0; i < sites_.size(); ++i) {
      if (q.contains(sites_[i])) out.values_[i] += t;
    }
    return out;
  }

 private:
  std::vector<LatticePoint> sites_;
  std::vector<double> values_;
  std::uint64_t seed_ = 0;
  std::uint64_t trial_ = 0;
};

/// IID draws on `region` (deduplicated and visited in lexicographic order);
/// site of lexicographic rank k takes the k-th draw of the (seed, trial) stream.
inline FieldSample sample_field(const FieldModel& model, std::span<const LatticePoint> region,
                                std::uint64_t master_seed, std::uint64_t trial) {
  std::vector<LatticePoint> sites(region.begin(), region.end());
  std::sort(sites.begin(), sites.end());
  sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
  auto engine = detail::trial_engine(master_seed, trial);
  std::vector<double> values;
  values.reserve(sites.size());
  for (std::size_t k = 0; k < sites.size(); ++k) values.push_back(detail::draw(model, engine));
  return FieldSample(std::move(sites), std::move(values), master_seed, trial);
}

inline FieldSample sample_field(const FieldModel& model, const BoxUnion& region, std::uint64_t master_seed,
                                std::uint64_t trial) {
  const auto pts = region.points();
  return sample_field(model, pts, master_seed, trial);
}

struct MeanFluctuationSplit {
  Box q;
  double xi = 0.0;                 // sample mean over q
  std::vector<LatticePoint> sites;  // q's points, lexicographic
  std::vector<double> eta;          // V(x) - xi, aligned with sites
};

inline MeanFluctuationSplit mean_fluctuation_split(const FieldSample& sample, const Box& q) {
  MeanFluctuationSplit out;
  out.q = q;
  out.sites = q.points();
  if (out.sites.empty()) throw InvalidInput("mean_fluctuation_split: empty box");
  std::vector<double> v;
  v.reserve(out.sites.size());
  for (const auto& p : out.sites) {
    auto idx = sample.find(p);
    if (!idx) throw InvalidInput("mean_fluctuation_split: box not inside the sample domain");
    v.push_back(sample.values()[*idx]);
  }
  double sum = 0.0;
  for (double x : v) sum += x;
  out.xi = sum / static_cast<double>(v.size());
  out.eta.reserve(v.size());
  for (double x : v) out.eta.push_back(x - out.xi);
  return out;
}

/// Constants of the continuity condition for the conditional law of the
/// sample mean:
///   P{ sup_t |F(t+s | eta) - F(t | eta)| >= C'(R+1)^{A'} s^{b'} } <= C'' R^{A''} s^{b''}
/// for boxes of diameter <= R. `exceptional` empty means the exceptional event
/// never occurs (the bound holds almost surely).
struct CcmConstants {
  struct Exceptional {
    double c = 0.0;
    double a = 0.0;
    double b = 0.0;
  };

  double c_prime = 0.0;
  double a_prime = 0.0;
  double b_prime = 0.0;
  std::optional<Exceptional> exceptional;
  bool fitted = false;
  int dim = 1;
  int particles = 1;

  /// C'(R+1)^{A'} s^{b'}.
  double modulus(Coord diam, double s) const {
    return c_prime * std::pow(static_cast<double>(diam + 1), a_prime) * std::pow(s, b_prime);
  }

  /// Probability of the exceptional event at diameter R and window s.
  double exceptional_probability(Coord diam, double s) const {
    if (!exceptional) return 0.0;
    return exceptional->c * std::pow(static_cast<double>(diam), exceptional->a) * std::pow(s, exceptional->b);
  }
};

/// Sup of the density of xi_Q for a Gaussian law: sqrt(|Q|) / (sigma sqrt(2 pi)).
inline double gaussian_mean_density_bound(const FieldModel& model, std::size_t cardinality) {
  const auto* g = std::get_if<GaussianLaw>(&model.law());
  if (!g) throw InvalidInput("gaussian_mean_density_bound: model is not gaussian");
  if (cardinality == 0) throw InvalidInput("gaussian_mean_density_bound: empty box");
  return std::sqrt(static_cast<double>(cardinality)) / (g->sigma() * std::sqrt(2.0 * std::numbers::pi));
}

/// For a Gaussian IID field xi_Q is independent of the fluctuations and has
/// density <= sqrt|Q| / (sigma sqrt(2 pi)); with |Q| <= (R+1)^d this gives
/// C' = 1/(sigma sqrt(2 pi)), A' = d/2, b' = 1 and no exceptional event.
inline CcmConstants gaussian_ccm_constants(const FieldModel& model, int dim, int particles) {
  const auto* g = std::get_if<GaussianLaw>(&model.law());
  if (!g) throw InvalidInput("gaussian_ccm_constants: model is not gaussian");
  if (dim < 1 || particles < 1) throw InvalidInput("gaussian_ccm_constants: need d >= 1 and N >= 1");
  CcmConstants c;
  c.c_prime = 1.0 / (g->sigma() * std::sqrt(2.0 * std::numbers::pi));
  c.a_prime = 0.5 * dim;
  c.b_prime = 1.0;
  c.dim = dim;
  c.particles = particles;
  return c;
}

/// Sample means xi collected for one bin of the first fluctuation eta_0.
struct ConditionalBin {
  double eta_lo = 0.0;
  double eta_hi = 0.0;
  std::vector<double> xi;  // sorted

  std::size_t count() const noexcept { return xi.size(); }
  double eta_center() const noexcept { return 0.5 * (eta_lo + eta_hi); }

  /// Largest empirical mass in a window [t, t+s]: estimates
  /// sup_t F(t+s | bin) - F(t | bin).
  double sup_increment(double s) const {
    if (xi.empty()) return 0.0;
    std::size_t best = 0;
    std::size_t hi = 0;
    for (std::size_t lo = 0; lo < xi.size(); ++lo) {
      while (hi < xi.size() && xi[hi] <= xi[lo] + s) ++hi;
      best = std::max(best, hi - lo);
    }
    return static_cast<double>(best) / static_cast<double>(xi.size());
  }

  /// Empirical density of xi averaged over [lo, hi].
  double density(double lo, double hi) const {
    if (xi.empty() || !(hi > lo)) return 0.0;
    auto a = std::lower_bound(xi.begin(), xi.end(), lo);
    auto b = std::upper_bound(xi.begin(), xi.end(), hi);
    return static_cast<double>(b - a) / (static_cast<double>(xi.size()) * (hi - lo));
  }
};

struct EtaBinning {
  double lo = -0.5;
  double hi = 0.5;
  double width = 0.02;
  std::size_t min_count = 100;  // bins with fewer samples are reported undersampled
};

struct ConditionalModulusEstimate {
  double s = 0.0;
  std::size_t trials = 0;
  std::size_t out_of_range = 0;  // draws whose eta_0 fell outside the binning
  std::vector<ConditionalBin> bins;
  std::vector<std::size_t> undersampled;  // bin indices below min_count

  /// Largest sup-increment (window width `width`) over adequately sampled
  /// bins, with its binomial standard error.
  std::pair<double, double> max_increment(double width) const {
    double best = 0.0;
    double se = 0.0;
    for (std::size_t i = 0; i < bins.size(); ++i) {
      if (std::find(undersampled.begin(), undersampled.end(), i) != undersampled.end()) continue;
      const double p = bins[i].sup_increment(width);
      if (p >= best) {
        best = p;
        se = std::sqrt(p * (1.0 - p) / static_cast<double>(bins[i].count()));
      }
    }
    return {best, se};
  }

  std::pair<double, double> max_increment() const { return max_increment(s); }
};

/// Monte Carlo estimate of the conditional increment of xi_Q given the
/// fluctuations, conditioning on eta_0 (the fluctuation at the first site of
/// q) by binning. For |Q| = 2 eta_0 determines all fluctuations.
inline ConditionalModulusEstimate empirical_conditional_modulus(const FieldModel& model, const Box& q, double s,
                                                                const EtaBinning& binning, std::size_t trials,
                                                                std::uint64_t seed) {
  if (!(s > 0.0)) throw InvalidInput("empirical_conditional_modulus: s must be > 0");
  if (trials < 10000) throw InvalidInput("empirical_conditional_modulus: need at least 10^4 trials");
  if (!(binning.hi > binning.lo) || !(binning.width > 0.0)) throw InvalidInput("invalid eta binning");
  const std::size_t nbins = static_cast<std::size_t>(std::ceil((binning.hi - binning.lo) / binning.width - 1e-9));
  const std::size_t card = q.cardinality();

  ConditionalModulusEstimate out;
  out.s = s;
  out.trials = trials;
  out.bins.resize(nbins);
  for (std::size_t i = 0; i < nbins; ++i) {
    out.bins[i].eta_lo = binning.lo + static_cast<double>(i) * binning.width;
    out.bins[i].eta_hi = std::min(binning.hi, out.bins[i].eta_lo + binning.width);
  }

  // One sequential stream: this estimator is not split across workers.
  auto engine = detail::trial_engine(seed, 0);
  std::vector<double> v(card);
  for (std::size_t t = 0; t < trials; ++t) {
    double sum = 0.0;
    for (auto& x : v) {
      x = detail::draw(model, engine);
      sum += x;
    }
    const double xi = sum / static_cast<double>(card);
    const double eta0 = v[0] - xi;
    if (eta0 < binning.lo || eta0 >= binning.hi) {
      ++out.out_of_range;
      continue;
    }
    auto idx = static_cast<std::size_t>((eta0 - binning.lo) / binning.width);
    out.bins[std::min(idx, nbins - 1)].xi.push_back(xi);
  }
  for (std::size_t i = 0; i < nbins; ++i) {
    std::sort(out.bins[i].xi.begin(), out.bins[i].xi.end());
    if (out.bins[i].count() < binning.min_count) out.undersampled.push_back(i);
  }
  return out;
}

}  // namespace mpres
