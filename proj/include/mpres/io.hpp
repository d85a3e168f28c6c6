#pragma once

// Experiment configs (JSON), result files (CSV), run manifests and SVG plots.

#include <openssl/sha.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mpres/errors.hpp"
#include "mpres/geometry.hpp"
#include "mpres/hamiltonian.hpp"
#include "mpres/random_field.hpp"
#include "mpres/resonance.hpp"

namespace mpres::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------- numbers

/// Shortest round-trip decimal form; "nan" / "inf" / "-inf" otherwise.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------- JSON <-> geometry

inline LatticePoint point_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw InvalidInput("lattice point must be a non-empty integer array");
  std::vector<Coord> c;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw InvalidInput("lattice coordinates must be integers");
    c.push_back(v.get<Coord>());
  }
  return LatticePoint(std::span<const Coord>(c));
}

inline json to_json(const LatticePoint& p) {
  json j = json::array();
  for (Coord c : p.coords()) j.push_back(c);
  return j;
}

/// A configuration is a JSON array of integer arrays, e.g. [[0],[0],[10]].
inline Configuration configuration_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw InvalidInput("configuration must be a non-empty array of points");
  std::vector<LatticePoint> pts;
  for (const auto& p : j) pts.push_back(point_from_json(p));
  return Configuration(std::move(pts));
}

inline Configuration parse_configuration(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("malformed configuration JSON: ") + e.what());
  }
  return configuration_from_json(j);
}

inline json to_json(const Configuration& x) {
  json j = json::array();
  for (const auto& p : x) j.push_back(to_json(p));
  return j;
}

inline json to_json(const Box& b) { return {{"lo", to_json(b.lo)}, {"hi", to_json(b.hi)}, {"diam", b.diam()}}; }

/// 1-based indices.
inline json to_json(IndexSet s) {
  json j = json::array();
  for (int i : s.indices()) j.push_back(i + 1);
  return j;
}

inline json to_json(const ClusterDecomposition& dec) {
  json clusters = json::array();
  for (const auto& c : dec.clusters) clusters.push_back({{"members", to_json(c.members)}, {"envelope", to_json(c.envelope)}});
  return {{"R", dec.radius}, {"clusters", clusters}};
}

inline json to_json(const SeparabilityCertificate& c) {
  return {{"Q", to_json(c.q)},           {"J1", to_json(c.j1)},     {"J2", to_json(c.j2)},
          {"n1", c.n1},                  {"n2", c.n2},              {"L", c.scale},
          {"separated", to_string(c.separated)}, {"route", to_string(c.route)}};
}

// ---------------------------------------------------------------- config

enum class ExperimentKind { theorem1, w1, charge_demo, spectrum };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::theorem1: return "theorem1";
    case ExperimentKind::w1: return "w1";
    case ExperimentKind::charge_demo: return "charge-demo";
    case ExperimentKind::spectrum: return "spectrum";
  }
  return "?";
}

struct SpectrumJob {
  FieldModel model = FieldModel::gaussian(0.0, 1.0);
  Configuration u;
  Coord l = 0;
  InteractionSpec interaction;
  AssemblyOptions assembly;
  bool zero_field = false;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::theorem1;
  json document;  // effective, validated config
  std::variant<ResonanceRun, W1Run, ChargeTransferRun, SpectrumJob> job;
};

namespace detail {

class FieldReader {
 public:
  FieldReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw InvalidInput(where_ + " must be a JSON object");
  }

  const json& required(const std::string& key) {
    seen_.insert(key);
    if (!obj_.contains(key)) throw InvalidInput(where_ + ": missing field \"" + key + "\"");
    return obj_.at(key);
  }

  const json* optional(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  double number(const std::string& key) {
    const auto& v = required(key);
    if (!v.is_number()) throw InvalidInput(where_ + ": \"" + key + "\" must be a number");
    return v.get<double>();
  }

  std::int64_t integer(const std::string& key) {
    const auto& v = required(key);
    if (!v.is_number_integer()) throw InvalidInput(where_ + ": \"" + key + "\" must be an integer");
    return v.get<std::int64_t>();
  }

  std::vector<double> numbers(const std::string& key) {
    const auto& v = required(key);
    if (!v.is_array()) throw InvalidInput(where_ + ": \"" + key + "\" must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw InvalidInput(where_ + ": \"" + key + "\" must be an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  /// Rejects keys that were never asked for.
  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.count(k)) throw InvalidInput(where_ + ": unknown field \"" + k + "\"");
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

inline FieldModel model_from_json(const json& j) {
  FieldReader r(j, "model");
  const auto& law = r.required("law");
  if (!law.is_string()) throw InvalidInput("model: \"law\" must be a string");
  const auto name = law.get<std::string>();
  std::optional<FieldModel> m;
  if (name == "gaussian") {
    m = FieldModel::gaussian(r.number("mean"), r.number("variance"));
  } else if (name == "uniform") {
    m = FieldModel::uniform(r.number("a"), r.number("b"));
  } else if (name == "piecewise_constant") {
    m = FieldModel::piecewise(r.numbers("breakpoints"), r.numbers("densities"));
  } else {
    throw InvalidInput("model: unknown law \"" + name + "\"");
  }
  r.finish();
  return *m;
}

inline InteractionSpec interaction_from_json(const json& j) {
  FieldReader r(j, "interaction");
  const auto& kind = r.required("kind");
  if (!kind.is_string()) throw InvalidInput("interaction: \"kind\" must be a string");
  const auto name = kind.get<std::string>();
  InteractionSpec spec;
  if (name == "none") {
    spec.kind = NoInteraction{};
  } else if (name == "pairwise_contact") {
    PairwiseContact c{r.number("u0"), r.integer("r0")};
    if (c.r0 < 0) throw InvalidInput("interaction: r0 must be >= 0");
    spec.kind = c;
  } else if (name == "pairwise_table") {
    spec.kind = PairwiseTable{r.numbers("values")};
  } else {
    throw InvalidInput("interaction: unknown kind \"" + name + "\" (custom interactions are library-only)");
  }
  if (const auto* sym = r.optional("symmetric")) {
    if (!sym->is_boolean()) throw InvalidInput("interaction: \"symmetric\" must be a boolean");
    spec.symmetric = sym->get<bool>();
  }
  r.finish();
  return spec;
}

}  // namespace detail

/// Parses and validates an experiment config. Unknown fields are rejected
/// and every embedded invariant (laws, grids, separation) is re-checked.
inline ExperimentConfig parse_config(const json& doc) {
  detail::FieldReader r(doc, "config");
  const auto version = r.integer("schema_version");
  if (version != kSchemaVersion) {
    throw InvalidInput("unsupported schema_version " + std::to_string(version) + " (expected " +
                       std::to_string(kSchemaVersion) + ")");
  }
  const auto& exp = r.required("experiment");
  if (!exp.is_string()) throw InvalidInput("config: \"experiment\" must be a string");
  const auto name = exp.get<std::string>();

  ExperimentConfig cfg;
  cfg.document = doc;
  const FieldModel model = detail::model_from_json(r.required("model"));
  InteractionSpec inter;
  if (const auto* j = r.optional("interaction")) inter = detail::interaction_from_json(*j);
  AssemblyOptions assembly;
  if (const auto* j = r.optional("laplacian_diagonal")) {
    if (!j->is_boolean()) throw InvalidInput("config: \"laplacian_diagonal\" must be a boolean");
    assembly.laplacian_diagonal = j->get<bool>();
  }
  auto trials = [&] {
    const auto t = r.integer("trials");
    if (t < 1) throw InvalidInput("config: trials must be >= 1");
    return static_cast<std::uint64_t>(t);
  };
  auto radius = [&](const char* key) {
    const auto l = r.integer(key);
    if (l < 0) throw InvalidInput(std::string("config: ") + key + " must be >= 0");
    return static_cast<Coord>(l);
  };

  if (name == "theorem1") {
    cfg.kind = ExperimentKind::theorem1;
    ResonanceRun run;
    run.model = model;
    run.u1 = configuration_from_json(r.required("u1"));
    run.l1 = radius("L1");
    run.u2 = configuration_from_json(r.required("u2"));
    run.l2 = radius("L2");
    run.s_grid = r.numbers("s_grid");
    run.trials = trials();
    run.interaction = inter;
    run.assembly = assembly;
    r.finish();
    validate_run(run);
    cfg.job = run;
  } else if (name == "w1") {
    cfg.kind = ExperimentKind::w1;
    W1Run run;
    run.model = model;
    run.u = configuration_from_json(r.required("u"));
    run.l = radius("L");
    run.energy = r.number("E");
    run.eps_grid = r.numbers("eps_grid");
    run.trials = trials();
    run.interaction = inter;
    run.assembly = assembly;
    r.finish();
    if (run.eps_grid.empty() || !std::is_sorted(run.eps_grid.begin(), run.eps_grid.end())) {
      throw InvalidInput("config: eps_grid must be non-empty and sorted");
    }
    for (double e : run.eps_grid) {
      if (!(e > 0.0 && e < 1.0)) throw InvalidInput("config: eps_grid values must lie in (0, 1)");
    }
    cfg.job = run;
  } else if (name == "charge-demo") {
    cfg.kind = ExperimentKind::charge_demo;
    ChargeTransferRun run;
    run.model = model;
    run.a = point_from_json(r.required("a"));
    run.b = point_from_json(r.required("b"));
    run.l = radius("L");
    run.s_grid = r.numbers("s_grid");
    run.trials = trials();
    if (r.optional("t_values")) run.t_values = r.numbers("t_values");
    run.interaction = inter;
    run.assembly = assembly;
    r.finish();
    require_same_dim(run.a, run.b);
    Configuration x{run.a, run.a, run.b};
    Configuration y{run.a, run.b, run.b};
    require_separation(x, run.l, y, run.l);
    ResonanceRun probe;
    probe.model = model;
    probe.u1 = x;
    probe.l1 = run.l;
    probe.u2 = y;
    probe.l2 = run.l;
    probe.s_grid = run.s_grid;
    validate_run(probe);
    cfg.job = run;
  } else if (name == "spectrum") {
    cfg.kind = ExperimentKind::spectrum;
    SpectrumJob job;
    job.model = model;
    job.u = configuration_from_json(r.required("u"));
    job.l = radius("L");
    if (const auto* z = r.optional("zero_field")) {
      if (!z->is_boolean()) throw InvalidInput("config: \"zero_field\" must be a boolean");
      job.zero_field = z->get<bool>();
    }
    job.interaction = inter;
    job.assembly = assembly;
    r.finish();
    cfg.job = job;
  } else {
    throw InvalidInput("config: unknown experiment \"" + name + "\"");
  }
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("malformed config JSON: ") + e.what());
  }
  return parse_config(doc);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InvalidInput("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

// ---------------------------------------------------------------- CSV

/// s,empirical_p,ci_low,ci_high,bound_h
inline std::string curve_csv(std::span<const CurvePoint> points) {
  std::string out = "s,empirical_p,ci_low,ci_high,bound_h\n";
  for (const auto& p : points) {
    out += format_double(p.s) + "," + format_double(p.empirical.p) + "," + format_double(p.empirical.lo) + "," +
           format_double(p.empirical.hi) + "," +
           format_double(p.bound ? *p.bound : std::numeric_limits<double>::quiet_NaN()) + "\n";
  }
  return out;
}

inline std::string spectrum_csv(const Spectrum& s) {
  std::string out = "index,eigenvalue\n";
  for (std::size_t i = 0; i < s.eigenvalues.size(); ++i) {
    out += std::to_string(i) + "," + format_double(s.eigenvalues[i]) + "\n";
  }
  return out;
}

/// x1,...,xd,value per site.
inline std::string field_csv(const FieldSample& sample) {
  std::string out;
  const int d = sample.size() ? sample.sites().front().dim() : 0;
  for (int i = 0; i < d; ++i) out += "x" + std::to_string(i + 1) + ",";
  out += "value\n";
  for (std::size_t k = 0; k < sample.size(); ++k) {
    for (Coord c : sample.sites()[k].coords()) out += std::to_string(c) + ",";
    out += format_double(sample.values()[k]) + "\n";
  }
  return out;
}

/// Matrix Market coordinate format, lower triangle of a symmetric matrix.
inline std::string matrix_market(const Eigen::MatrixXd& m) {
  std::vector<std::string> rows;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = j; i < m.rows(); ++i) {
      if (m(i, j) != 0.0) rows.push_back(std::to_string(i + 1) + " " + std::to_string(j + 1) + " " + format_double(m(i, j)));
    }
  }
  std::string out = "%%MatrixMarket matrix coordinate real symmetric\n";
  out += std::to_string(m.rows()) + " " + std::to_string(m.cols()) + " " + std::to_string(rows.size()) + "\n";
  for (const auto& r : rows) out += r + "\n";
  return out;
}

// ---------------------------------------------------------------- manifest

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  std::ostringstream ss;
  for (unsigned char c : digest) ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(c);
  return ss.str();
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Canonical text of an effective config, as stored next to the results.
inline std::string canonical_config_text(const json& doc) { return doc.dump(2) + "\n"; }

struct RunManifest {
  json doc;

  static RunManifest begin(const json& config, std::uint64_t seed, unsigned workers) {
    RunManifest m;
    const auto text = canonical_config_text(config);
    m.doc = {{"tool", "mpres"},
             {"tool_version", kToolVersion},
             {"status", "running"},
             {"config_sha256", sha256_hex(text)},
             {"master_seed", seed},
             {"workers", workers},
             {"started_at", utc_timestamp()},
             {"config", config},
             {"outputs", json::object()}};
    return m;
  }

  void finalize(const json& outputs, const json& results, double runtime_seconds) {
    doc["status"] = "finalized";
    doc["finished_at"] = utc_timestamp();
    doc["runtime_seconds"] = runtime_seconds;
    doc["outputs"] = outputs;
    doc["results"] = results;
  }

  std::string text() const { return doc.dump(2) + "\n"; }
};

// ---------------------------------------------------------------- SVG

namespace detail {
inline std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}
}  // namespace detail

/// Log-log plot of an empirical curve (points with a Wilson band) and a
/// reference/bound curve. Zero probabilities are clipped to the lower edge.
inline std::string curve_svg(std::span<const CurvePoint> points, const std::string& title, const std::string& x_label,
                             const std::string& bound_label) {
  constexpr double width = 640, height = 480, left = 70, right = 20, top = 40, bottom = 60;
  double xmin = std::numeric_limits<double>::infinity(), xmax = 0.0;
  double ymin = 1.0, ymax = 1e-6;
  for (const auto& p : points) {
    if (p.s > 0.0) {
      xmin = std::min(xmin, p.s);
      xmax = std::max(xmax, p.s);
    }
    for (double v : {p.empirical.p, p.empirical.hi, p.bound.value_or(0.0)}) {
      if (v > 0.0 && std::isfinite(v)) {
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
      }
    }
  }
  if (!(xmax > 0.0)) {
    xmin = 1e-3;
    xmax = 1.0;
  }
  if (xmin == xmax) {
    xmin /= 10.0;
    xmax *= 10.0;
  }
  double lx0 = std::floor(std::log10(xmin)), lx1 = std::ceil(std::log10(xmax));
  double ly0 = std::floor(std::log10(ymin)), ly1 = std::ceil(std::log10(ymax));
  if (lx1 <= lx0) lx1 = lx0 + 1;
  if (ly1 <= ly0) ly1 = ly0 + 1;
  auto px = [&](double x) { return left + (std::log10(x) - lx0) / (lx1 - lx0) * (width - left - right); };
  auto py = [&](double y) {
    const double ly = std::clamp(std::log10(std::max(y, std::pow(10.0, ly0))), ly0, ly1);
    return height - bottom - (ly - ly0) / (ly1 - ly0) * (height - top - bottom);
  };
  auto f = [](double v) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << v;
    return ss.str();
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << detail::xml_escape(title) << "</text>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << width - left - right << "\" height=\""
      << height - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double e = lx0; e <= lx1; e += 1.0) {
    svg << "<text x=\"" << f(px(std::pow(10.0, e))) << "\" y=\"" << height - bottom + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">1e" << static_cast<int>(e)
        << "</text>\n";
  }
  for (double e = ly0; e <= ly1; e += 1.0) {
    svg << "<text x=\"" << left - 6 << "\" y=\"" << f(py(std::pow(10.0, e)) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">1e" << static_cast<int>(e)
        << "</text>\n";
  }
  svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 15
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << detail::xml_escape(x_label) << "</text>\n";

  std::string bound_path, emp_path;
  for (const auto& p : points) {
    if (p.s <= 0.0) continue;
    if (p.bound && *p.bound > 0.0 && std::isfinite(*p.bound)) {
      bound_path += (bound_path.empty() ? "M" : " L") + f(px(p.s)) + " " + f(py(*p.bound));
    }
    emp_path += (emp_path.empty() ? "M" : " L") + f(px(p.s)) + " " + f(py(p.empirical.p));
    svg << "<line x1=\"" << f(px(p.s)) << "\" y1=\"" << f(py(p.empirical.lo)) << "\" x2=\"" << f(px(p.s))
        << "\" y2=\"" << f(py(p.empirical.hi)) << "\" stroke=\"steelblue\" stroke-width=\"1\"/>\n";
    svg << "<circle cx=\"" << f(px(p.s)) << "\" cy=\"" << f(py(p.empirical.p))
        << "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  if (!emp_path.empty()) svg << "<path d=\"" << emp_path << "\" fill=\"none\" stroke=\"steelblue\"/>\n";
  if (!bound_path.empty()) {
    svg << "<path d=\"" << bound_path << "\" fill=\"none\" stroke=\"firebrick\" stroke-dasharray=\"6 3\"/>\n";
  }
  svg << "<text x=\"" << left + 10 << "\" y=\"" << top + 16
      << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"steelblue\">empirical P (Wilson 95%)</text>\n";
  svg << "<text x=\"" << left + 10 << "\" y=\"" << top + 32
      << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"firebrick\">" << detail::xml_escape(bound_label) << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace mpres::io
