// mpres: command-line front end for the multi-particle resonance toolkit.
//
//   mpres geom dsym X Y
//   mpres geom cluster X --R r
//   mpres geom separate X Y --L l
//   mpres spectrum --config F --seed S [--out-dir D] [--export-matrix] [--export-field]
//   mpres run theorem1|w1|charge-demo --config F --seed S [--workers K] [--out-dir D]
//                                     [--s-grid a,b,...] [--trials T]
//
// Exit codes: 0 ok, 2 invalid input, 3 resource cap, 4 separation hypothesis.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "mpres/io.hpp"

namespace fs = std::filesystem;
using namespace mpres;
using io::json;

namespace {

enum ExitCode : int { kOk = 0, kInput = 2, kCap = 3, kHypothesis = 4 };

std::size_t dim_cap_from_env() {
  const char* env = std::getenv("MPRES_DIM_CAP");
  if (!env || !*env) return kDenseCap;
  std::size_t value = 0;
  const std::string s(env);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || value == 0) {
    throw InvalidInput("MPRES_DIM_CAP must be a positive integer, got \"" + s + "\"");
  }
  return value;
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw InvalidInput("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

// ---------------------------------------------------------------- geom

int cmd_dsym(const std::string& a, const std::string& b) {
  const auto x = io::parse_configuration(a);
  const auto y = io::parse_configuration(b);
  std::cout << sym_distance(x, y) << "\n";
  return kOk;
}

int cmd_cluster(const std::string& a, Coord r) {
  const auto x = io::parse_configuration(a);
  std::cout << io::to_json(cluster_decompose(x, r)).dump(2) << "\n";
  return kOk;
}

int cmd_separate(const std::string& a, const std::string& b, Coord l) {
  const auto x = io::parse_configuration(a);
  const auto y = io::parse_configuration(b);
  const auto cert = weak_separability(x, y, l);
  json out = {{"d_S", sym_distance(x, y)}, {"L", l}};
  if (cert) {
    out["certificate"] = io::to_json(*cert);
  } else {
    out["certificate"] = nullptr;
  }
  std::cout << out.dump(2) << "\n";
  return kOk;
}

// ---------------------------------------------------------------- spectrum

struct SpectrumArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string out_dir = "mpres-out";
  bool export_matrix = false;
  bool export_field = false;
};

int cmd_spectrum(const SpectrumArgs& args) {
  auto cfg = io::parse_config_text(io::read_file(args.config));
  if (cfg.kind != io::ExperimentKind::spectrum) {
    throw InvalidInput("spectrum expects a config with \"experiment\": \"spectrum\"");
  }
  auto job = std::get<io::SpectrumJob>(cfg.job);
  job.assembly.dim_cap = dim_cap_from_env();

  const auto started = std::chrono::steady_clock::now();
  const MultiCube cube(job.u, job.l);
  // Check the cap before sampling the field so the message is about dimension.
  const CubeBasis probe(cube, job.assembly.dim_cap);
  const auto region = cube_support(cube).points();
  FieldSample sample;
  if (job.zero_field) {
    sample = FieldSample(region, std::vector<double>(region.size(), 0.0), args.seed, 0);
  } else {
    sample = sample_field(job.model, region, args.seed, 0);
  }
  const auto op = assemble(cube, sample, job.interaction, job.assembly);
  const auto spec = spectrum(op, SpectrumOptions{.check_residual = true});

  const auto dir = prepare_out_dir(args.out_dir);
  auto manifest = io::RunManifest::begin(cfg.document, args.seed, 1);
  io::write_file(dir / "config.json", io::canonical_config_text(cfg.document));
  io::write_file(dir / "manifest.json", manifest.text());

  json outputs = {{"config", "config.json"}, {"spectrum", "spectrum.csv"}};
  io::write_file(dir / "spectrum.csv", io::spectrum_csv(spec));
  if (args.export_matrix) {
    io::write_file(dir / "matrix.mtx", io::matrix_market(op.matrix));
    outputs["matrix"] = "matrix.mtx";
  }
  if (args.export_field) {
    io::write_file(dir / "field.csv", io::field_csv(sample));
    outputs["field"] = "field.csv";
  }
  const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  manifest.finalize(outputs, {{"dimension", probe.size()}, {"interaction", op.interaction}}, runtime);
  io::write_file(dir / "manifest.json", manifest.text());
  std::cout << "dimension " << probe.size() << ", spectrum written to " << (dir / "spectrum.csv").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- run

struct RunArgs {
  std::string experiment;
  std::string config;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string out_dir = "mpres-out";
  std::vector<double> s_grid;
  std::int64_t trials = 0;
};

json bound_json(const BoundCurve& b) {
  json j = {{"cube_product", b.cube_product},
            {"diam_bound", b.diam_bound},
            {"c_prime", b.ccm.c_prime},
            {"a_prime", b.ccm.a_prime},
            {"b_prime", b.ccm.b_prime},
            {"constants", b.ccm.fitted ? "fitted" : "analytic"}};
  if (b.ccm.exceptional) {
    j["exceptional"] = {{"c", b.ccm.exceptional->c}, {"a", b.ccm.exceptional->a}, {"b", b.ccm.exceptional->b}};
  }
  return j;
}

json theorem1_json(const Theorem1Result& r) {
  json j = {{"certificate", io::to_json(r.certificate)},
            {"d_S", r.sym_distance},
            {"trials", r.cdf.size()},
            {"all_respected", r.all_respected()}};
  if (r.bound) j["bound"] = bound_json(*r.bound);
  if (r.fitted) {
    j["fitted"] = {{"label", "fitted"}, {"c_prime", r.fitted->c_prime}, {"b_prime", r.fitted->b_prime},
                   {"trials", r.fitted->trials}};
  }
  return j;
}

int cmd_run(const RunArgs& args) {
  json doc;
  try {
    doc = json::parse(io::read_file(args.config));
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("malformed config JSON: ") + e.what());
  }
  // Command-line overrides become part of the effective config, so the stored
  // config.json alone reproduces the outputs.
  if (!args.s_grid.empty()) {
    doc[doc.value("experiment", "") == "w1" ? "eps_grid" : "s_grid"] = args.s_grid;
  }
  if (args.trials > 0) doc["trials"] = args.trials;
  auto cfg = io::parse_config(doc);
  if (io::to_string(cfg.kind) != args.experiment) {
    throw InvalidInput("config declares experiment \"" + std::string(io::to_string(cfg.kind)) + "\" but \"run " +
                       args.experiment + "\" was requested");
  }
  if (args.workers == 0) throw InvalidInput("--workers must be >= 1");
  const std::size_t cap = dim_cap_from_env();

  const auto dir = prepare_out_dir(args.out_dir);
  auto manifest = io::RunManifest::begin(cfg.document, args.seed, args.workers);
  io::write_file(dir / "config.json", io::canonical_config_text(cfg.document));
  io::write_file(dir / "manifest.json", manifest.text());
  const auto started = std::chrono::steady_clock::now();

  json outputs = {{"config", "config.json"}, {"curve", "curve.csv"}, {"plot", "curve.svg"}};
  json results;
  std::vector<CurvePoint> points;
  std::string title, x_label = "s", bound_label = "bound h(s)";

  switch (cfg.kind) {
    case io::ExperimentKind::theorem1: {
      auto run = std::get<ResonanceRun>(cfg.job);
      run.master_seed = args.seed;
      run.assembly.dim_cap = cap;
      const auto r = run_theorem1(run, args.workers);
      points = r.points;
      results = theorem1_json(r);
      title = "P[dist(sigma', sigma'') <= s]";
      if (r.fitted) bound_label = "bound h(s), fitted constants";
      break;
    }
    case io::ExperimentKind::w1: {
      auto run = std::get<W1Run>(cfg.job);
      run.master_seed = args.seed;
      run.assembly.dim_cap = cap;
      const auto r = run_w1(run, args.workers);
      points = r.points;
      results = {{"volume", r.volume},
                 {"trials", r.cdf.size()},
                 {"reference", {{"label", "fitted"}, {"slope_C", r.fitted_slope}, {"form", "C*|Lambda|*eps"}}}};
      title = "P[dist(E, sigma) <= eps]";
      x_label = "eps";
      bound_label = "fitted reference C|Lambda|eps (diagnostic)";
      break;
    }
    case io::ExperimentKind::charge_demo: {
      auto run = std::get<ChargeTransferRun>(cfg.job);
      run.master_seed = args.seed;
      run.assembly.dim_cap = cap;
      const auto r = run_charge_transfer_demo(run, args.workers);
      points = r.theorem1.points;
      results = theorem1_json(r.theorem1);
      results["x"] = io::to_json(r.x);
      results["y"] = io::to_json(r.y);
      json shifts = json::array();
      bool all_passed = true;
      for (const auto& s : r.shifts) {
        shifts.push_back({{"t", s.t},
                          {"n_x", s.n_x},
                          {"n_y", s.n_y},
                          {"expected_shift_x", s.expected_shift_x},
                          {"expected_shift_y", s.expected_shift_y},
                          {"max_deviation_x", s.max_deviation_x},
                          {"max_deviation_y", s.max_deviation_y},
                          {"passed", s.passed()}});
        all_passed = all_passed && s.passed();
      }
      results["shifts"] = shifts;
      results["shifts_passed"] = all_passed;
      results["scan"] = {{"dominant_slope", r.scan.dominant_slope},
                         {"matching_fraction", r.scan.matching_fraction},
                         {"expected_slope", std::abs(r.certificate.n1 - r.certificate.n2)}};
      std::string scan = "t,distance\n";
      for (std::size_t k = 0; k < r.scan.t.size(); ++k) {
        scan += io::format_double(r.scan.t[k]) + "," + io::format_double(r.scan.distance[k]) + "\n";
      }
      io::write_file(dir / "scan.csv", scan);
      outputs["scan"] = "scan.csv";
      title = "charge transfer: P[dist <= s]";
      break;
    }
    case io::ExperimentKind::spectrum:
      throw InvalidInput("spectrum configs are run with the \"spectrum\" subcommand");
  }

  io::write_file(dir / "curve.csv", io::curve_csv(points));
  io::write_file(dir / "curve.svg", io::curve_svg(points, title, x_label, bound_label));
  const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  manifest.finalize(outputs, results, runtime);
  io::write_file(dir / "manifest.json", manifest.text());

  std::cout << "run " << args.experiment << ": " << points.size() << " grid points, " << runtime << " s, outputs in "
            << dir.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-particle configuration geometry and eigenvalue-concentration experiments"};
  app.require_subcommand(1);
  int code = kOk;

  auto* geom = app.add_subcommand("geom", "Configuration-space geometry on JSON configurations");
  geom->require_subcommand(1);
  std::string gx, gy;
  Coord radius = 0;
  auto* dsym = geom->add_subcommand("dsym", "Symmetrized max-norm distance d_S(X, Y)");
  dsym->add_option("X", gx, "configuration, e.g. '[[0],[0],[10]]'")->required();
  dsym->add_option("Y", gy, "configuration")->required();
  auto* cluster = geom->add_subcommand("cluster", "R-cluster decomposition of X");
  cluster->add_option("X", gx, "configuration")->required();
  cluster->add_option("--R", radius, "cluster radius R >= 0")->required();
  auto* separate = geom->add_subcommand("separate", "Weak-separability certificate for (X, Y) at scale L");
  separate->add_option("X", gx, "configuration")->required();
  separate->add_option("Y", gy, "configuration")->required();
  separate->add_option("--L", radius, "cube radius L >= 0")->required();

  SpectrumArgs sargs;
  auto* spec = app.add_subcommand("spectrum", "Eigenvalues of one cube operator");
  spec->add_option("--config", sargs.config, "spectrum config JSON")->required();
  spec->add_option("--seed", sargs.seed, "master seed")->required();
  spec->add_option("--out-dir", sargs.out_dir, "output directory");
  spec->add_flag("--export-matrix", sargs.export_matrix, "also write matrix.mtx (Matrix Market)");
  spec->add_flag("--export-field", sargs.export_field, "also write field.csv");

  RunArgs rargs;
  auto* run = app.add_subcommand("run", "Monte Carlo experiment");
  run->add_option("experiment", rargs.experiment, "theorem1 | w1 | charge-demo")
      ->required()
      ->check(CLI::IsMember({"theorem1", "w1", "charge-demo"}));
  run->add_option("--config", rargs.config, "experiment config JSON")->required();
  run->add_option("--seed", rargs.seed, "master seed")->required();
  run->add_option("--workers", rargs.workers, "worker threads (outputs do not depend on it)");
  run->add_option("--out-dir", rargs.out_dir, "output directory");
  run->add_option("--s-grid", rargs.s_grid, "override the s (or eps) grid")->delimiter(',');
  run->add_option("--trials", rargs.trials, "override the trial count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }

  try {
    if (*dsym) code = cmd_dsym(gx, gy);
    else if (*cluster) code = cmd_cluster(gx, radius);
    else if (*separate) code = cmd_separate(gx, gy, radius);
    else if (*spec) code = cmd_spectrum(sargs);
    else if (*run) code = cmd_run(rargs);
  } catch (const ResourceCap& e) {
    std::cerr << "mpres: resource cap: " << e.what() << " (dimension " << e.requested() << ", cap " << e.cap()
              << "; raise MPRES_DIM_CAP to override)\n";
    return kCap;
  } catch (const HypothesisViolation& e) {
    std::cerr << "mpres: " << e.what() << "\n";
    return kHypothesis;
  } catch (const std::invalid_argument& e) {
    std::cerr << "mpres: invalid input: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "mpres: error: " << e.what() << "\n";
    return 1;
  }
  return code;
}
