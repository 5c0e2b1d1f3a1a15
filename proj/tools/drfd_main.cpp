#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "drfd/ambiguity.hpp"
#include "drfd/calibrate.hpp"
#include "drfd/design.hpp"
#include "drfd/io.hpp"
#include "drfd/mc.hpp"
#include "drfd/residual.hpp"
#include "drfd/rng.hpp"
#include "drfd/sdp.hpp"
#include "drfd/sim.hpp"

namespace {

using namespace drfd;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitInfeasible = 2;
constexpr int kExitSolverFailure = 3;
constexpr int kExitBadConfig = 4;

Vector vector_from_json(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

sim::StateSpaceModel load_model(const std::string& path) {
  if (path.empty()) return sim::three_tank_model();
  return io::read_model_json(path);
}

sim::DisturbanceSpec disturbance_from_json(const json& j, Eigen::Index nd) {
  sim::DisturbanceSpec spec;
  const std::string kind = j.value("kind", "laplace");
  if (kind == "laplace") spec.kind = sim::DisturbanceKind::Laplace;
  else if (kind == "gaussian") spec.kind = sim::DisturbanceKind::Gaussian;
  else if (kind == "empirical-file") spec.kind = sim::DisturbanceKind::EmpiricalFile;
  else throw std::runtime_error("unknown disturbance kind: " + kind);
  spec.mean = j.contains("mean") ? vector_from_json(j["mean"]) : Vector::Zero(nd);
  if (j.contains("covariance")) {
    const auto& c = j["covariance"];
    if (c.is_number()) {
      spec.covariance = c.get<double>() * Matrix::Identity(nd, nd);
    } else {
      spec.covariance.resize(nd, nd);
      for (Eigen::Index r = 0; r < nd; ++r)
        for (Eigen::Index cc = 0; cc < nd; ++cc)
          spec.covariance(r, cc) = c[r][cc].get<double>();
    }
  } else {
    spec.covariance = j.value("variance", 1.0) * Matrix::Identity(nd, nd);
  }
  if (spec.kind == sim::DisturbanceKind::EmpiricalFile) {
    spec.source_path = j.at("source").get<std::string>();
    spec.empirical = io::read_samples_csv(spec.source_path);
    spec.empirical.transposeInPlace();  // pool rows
  }
  return spec;
}

sim::DisturbanceSpec default_laplace(Eigen::Index nd, double variance) {
  sim::DisturbanceSpec spec;
  spec.kind = sim::DisturbanceKind::Laplace;
  spec.mean = Vector::Zero(nd);
  spec.covariance = variance * Matrix::Identity(nd, nd);
  return spec;
}

int cmd_simulate(const std::string& config_path, const std::string& out) {
  json j;
  {
    std::ifstream is(config_path);
    if (!is) throw std::runtime_error("cannot read " + config_path);
    is >> j;
  }
  sim::StateSpaceModel model;
  if (!j.contains("model") || j["model"].is_string()) {
    const std::string name = j.value("model", "three-tank");
    if (name != "three-tank") throw std::runtime_error("unknown model preset: " + name);
    model = sim::three_tank_model();
  } else {
    const json& m = j["model"];
    auto mat = [&](const char* key) {
      Matrix M(static_cast<Eigen::Index>(m.at(key).size()),
               static_cast<Eigen::Index>(m.at(key)[0].size()));
      for (Eigen::Index r = 0; r < M.rows(); ++r)
        for (Eigen::Index c = 0; c < M.cols(); ++c)
          M(r, c) = m[key][r][c].get<double>();
      return M;
    };
    model.A = mat("A"); model.B = mat("B"); model.Bd = mat("Bd"); model.Bf = mat("Bf");
    model.C = mat("C"); model.D = mat("D"); model.Dd = mat("Dd"); model.Df = mat("Df");
    model.validate();
  }

  const auto T = j.value("T", 800);
  const std::uint64_t seed = io::env_seed(j.value("seed", 1));
  const auto dist = j.contains("disturbance")
                        ? disturbance_from_json(j["disturbance"], model.nd())
                        : default_laplace(model.nd(), 0.4);

  sim::FaultScenario fault = sim::FaultScenario::none(model.nf());
  if (j.contains("fault")) {
    fault.profile = vector_from_json(j["fault"].at("profile"));
    fault.onset = j["fault"].value("onset", 0);
    if (j["fault"].contains("duration"))
      fault.duration = j["fault"]["duration"].get<Eigen::Index>();
    else
      fault.duration.reset();
  }

  Matrix U = Matrix::Zero(T, model.nu());
  if (j.contains("input") && j["input"].value("kind", "zero") == "prbs")
    U = sim::prbs_input(T, model.nu(), j["input"].value("amplitude", 1.0),
                        j["input"].value("hold", 1), seed ^ 0x5eedu);

  Vector x0 = j.contains("x0") ? vector_from_json(j["x0"]) : Vector::Zero(model.nx());
  const auto traj = sim::simulate(model, U, dist, fault, x0, seed);
  io::write_trajectory_csv(out, traj);
  std::printf("wrote %s (%lld samples)\n", out.c_str(),
              static_cast<long long>(traj.length()));
  return kExitOk;
}

int cmd_residuals(const std::string& traj_path, const std::string& method,
                  Eigen::Index order, Eigen::Index stride,
                  const std::string& model_path, Eigen::Index nx,
                  const std::string& out) {
  io::SampleMeta meta;
  meta.s = order;
  meta.stride = stride;
  Matrix samples;
  if (method == "parity") {
    const auto model = load_model(model_path);
    const auto traj = io::read_trajectory_csv(traj_path, model.nu(), model.ny(),
                                              model.nd(), model.nf());
    const auto pm = residual::build_parity(model, order);
    samples = residual::collect_primary_residuals(pm.basis(), traj, stride);
    meta.kind = "parity";
    meta.scaling = "none";
  } else if (method == "skr") {
    const auto traj = io::read_trajectory_csv(traj_path);
    const Eigen::Index rows_per_win = order + 1;
    const Eigen::Index T = traj.length();
    const Eigen::Index N = T - 2 * rows_per_win + 1;
    if (N < 1) throw std::runtime_error("trajectory too short for SKR depth");
    // past block ends at k - s - 1, future at k
    const Matrix Up_full = sim::hankel(traj.U.topRows(T - rows_per_win), order, N);
    const Matrix Yp_full = sim::hankel(traj.Y.topRows(T - rows_per_win), order, N);
    const Matrix Uf = sim::hankel(traj.U, order, N);
    const Matrix Yf = sim::hankel(traj.Y, order, N);
    const auto skr = residual::build_skr_qr(Up_full, Yp_full, Uf, Yf, nx);
    samples = residual::collect_primary_residuals(skr.basis(), traj, stride);
    meta.kind = "skr";
    meta.scaling = "none";
  } else {
    throw std::runtime_error("method must be parity or skr");
  }
  io::write_samples_csv(out, samples, meta);
  std::printf("wrote %s (%lld samples of dimension %lld)\n", out.c_str(),
              static_cast<long long>(samples.cols()),
              static_cast<long long>(samples.rows()));
  return kExitOk;
}

Matrix metric_basis(const std::string& name, const residual::ParityModel& pm) {
  if (name == "identity") return Matrix::Identity(pm.n_xi(), pm.n_xi());
  if (name == "stacked") return pm.V;
  if (name == "lifted")
    return residual::lift_constant_fault(pm.V, pm.V.cols() / (pm.s + 1), pm.s);
  throw std::runtime_error("metric_basis must be identity, stacked or lifted");
}

int cmd_design(const std::string& samples_path, const std::string& config_path,
               const std::string& model_path, Eigen::Index order,
               const std::string& out) {
  auto cfgfile = io::read_design_config_json(config_path);
  auto& cfg = cfgfile.config;

  const auto samples = io::read_samples_csv(samples_path);
  Eigen::Index s = order;
  try {
    const auto meta = io::read_sample_meta(samples_path);
    if (order < 0) s = meta.s;
  } catch (const std::exception&) {
    if (order < 0) throw std::runtime_error("no sample metadata; pass --order");
  }

  const auto model = load_model(model_path);
  const auto pm = residual::build_parity(model, s);
  if (pm.n_xi() != samples.rows())
    throw std::runtime_error("sample dimension does not match the parity space");
  const Matrix Vbar = residual::lift_constant_fault(pm.V, model.nf(), s);

  json raw;
  {
    std::ifstream is(config_path);
    is >> raw;
  }
  const std::string basis_name = raw.value("metric_basis", "identity");
  const Matrix V = metric_basis(basis_name, pm);

  std::size_t fi = 0;
  for (auto& f : cfg.faults) {
    const auto& fj = raw["faults"][fi];
    if (fj.contains("signature"))
      f.signature = vector_from_json(fj["signature"]);
    else
      f.signature = Vbar * cfgfile.profiles[fi];
    ++fi;
  }

  ambiguity::WassersteinBall ball;
  ball.samples = samples;
  ball.theta = cfg.theta;

  const auto result = cfg.faults.empty()
                          ? design::generic_design(cfg, ball, V)
                          : design::sequential_design(cfg, ball, V);
  io::write_design_result_json(out, result, "parity", s);
  std::printf("design status: %s  objective: %g  oracle FAR: %g  (%d iterations, %.1f s)\n",
              design::to_string(result.status), result.objective,
              result.oracle_far, result.iterations, result.seconds);
  if (result.status == design::DesignStatus::Infeasible) return kExitInfeasible;
  if (result.status == design::DesignStatus::NumericalFailure) return kExitSolverFailure;
  return kExitOk;
}

int cmd_evaluate(const std::string& design_path, const std::string& mc_path,
                 const std::string& model_path, const std::string& out) {
  const auto file = io::read_design_result_json(design_path);
  if (file.result.status == design::DesignStatus::Infeasible)
    throw std::runtime_error("cannot evaluate an infeasible design");
  const auto mcfg = io::read_mc_config_json(mc_path);
  const auto model = load_model(model_path);
  const auto pm = residual::build_parity(model, file.order);

  residual::ResidualGenerator gen;
  gen.basis = pm.basis();
  gen.P = file.result.P;
  gen.W = pm.W;
  gen.V = pm.V;

  const auto dist = default_laplace(model.nd(), 0.4);
  auto row = mc::run_monte_carlo(model, gen, dist, mcfg, "design");
  for (Eigen::Index j = 0; j < file.result.eta.size(); ++j)
    row.eta.push_back(file.result.eta(j));
  row.iterations = file.result.iterations;
  row.seconds = file.result.seconds;
  io::write_rates_csv(out, {row});
  std::printf("FAR %.3f%%", row.far_pct);
  for (std::size_t j = 0; j < row.fdr_pct.size(); ++j)
    std::printf("  FDR%zu %.2f%%", j + 1, row.fdr_pct[j]);
  std::printf("\n");
  return kExitOk;
}

int cmd_calibrate(const std::string& samples_path, const std::vector<double>& grid,
                  int folds, double alpha, const std::string& metric,
                  std::uint64_t seed, bool select_min, const std::string& out) {
  const auto samples = io::read_samples_csv(samples_path);
  design::DesignConfig base;
  base.max_iters = 12;
  base.conv_tol = 1e-5;
  const auto m = metric == "rho2" ? design::Metric::Rho2 : design::Metric::Rho1;
  try {
    const auto report = calibrate::cross_validate(samples, grid, folds, alpha, m,
                                                  io::env_seed(seed), base,
                                                  select_min);
    if (!out.empty()) io::write_calibration_csv(out, report);
    std::printf("selected theta = %g (mean held-out FAR %.4f)\n",
                report.selected_theta,
                report.mean_far[static_cast<std::size_t>(report.selected_index)]);
    return kExitOk;
  } catch (const calibrate::GridExhausted& e) {
    if (!out.empty()) io::write_calibration_csv(out, e.report);
    std::fprintf(stderr, "%s\n", e.what());
    return kExitInfeasible;
  }
}

int cmd_sweep(const std::string& samples_path, const std::string& config_path,
              const std::string& model_path, Eigen::Index order,
              const std::vector<double>& gammas, const std::vector<double>& betas,
              const std::string& out, const std::string& plot) {
  auto cfgfile = io::read_design_config_json(config_path);
  auto& cfg = cfgfile.config;
  const auto samples = io::read_samples_csv(samples_path);
  Eigen::Index s = order;
  if (order < 0) s = io::read_sample_meta(samples_path).s;
  const auto model = load_model(model_path);
  const auto pm = residual::build_parity(model, s);
  const Matrix Vbar = residual::lift_constant_fault(pm.V, model.nf(), s);
  json raw;
  {
    std::ifstream is(config_path);
    is >> raw;
  }
  const Matrix V = metric_basis(raw.value("metric_basis", "identity"), pm);
  std::size_t fi = 0;
  for (auto& f : cfg.faults) f.signature = Vbar * cfgfile.profiles[fi++];
  if (cfg.faults.empty()) throw std::runtime_error("sweep requires a fault in the config");

  ambiguity::WassersteinBall ball;
  ball.samples = samples;
  ball.theta = cfg.theta;
  const auto points = mc::tradeoff_sweep(cfg, gammas, betas, ball, V);

  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot write " + out);
  os << "beta,gamma,rho,eta,status\n";
  for (const auto& p : points)
    os << io::format_double(p.beta) << ',' << io::format_double(p.gamma) << ','
       << io::format_double(p.rho) << ',' << io::format_double(p.eta) << ','
       << p.status << "\n";
  for (const auto& p : points)
    std::printf("beta=%g gamma=%g: rho=%.5f eta=%.5f (%s)\n", p.beta, p.gamma,
                p.rho, p.eta, p.status.c_str());

  if (!plot.empty() && betas.size() == 1) {
    std::vector<double> xs;
    std::vector<double> rho_s, eta_s;
    for (const auto& p : points) {
      xs.push_back(p.gamma);
      rho_s.push_back(p.rho);
      eta_s.push_back(p.eta);
    }
    io::write_svg_curve(plot, xs, {rho_s, eta_s}, {"rho", "eta"}, "gamma", "value");
  }
  return kExitOk;
}

int cmd_bench(const std::string& samples_path, const std::string& config_path,
              const std::string& model_path, Eigen::Index order,
              const std::vector<Eigen::Index>& sizes, const std::string& out,
              const std::string& plot) {
  auto cfgfile = io::read_design_config_json(config_path);
  auto& cfg = cfgfile.config;
  const auto samples = io::read_samples_csv(samples_path);
  Eigen::Index s = order;
  if (order < 0) s = io::read_sample_meta(samples_path).s;
  const auto model = load_model(model_path);
  const auto pm = residual::build_parity(model, s);
  const Matrix Vbar = residual::lift_constant_fault(pm.V, model.nf(), s);
  json raw;
  {
    std::ifstream is(config_path);
    is >> raw;
  }
  const Matrix V = metric_basis(raw.value("metric_basis", "identity"), pm);
  std::size_t fi = 0;
  for (auto& f : cfg.faults) f.signature = Vbar * cfgfile.profiles[fi++];

  ambiguity::WassersteinBall ball;
  ball.samples = samples;
  ball.theta = cfg.theta;
  const auto points = mc::timing_benchmark(sizes, cfg, ball, V);

  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot write " + out);
  os << "N,seconds,iterations\n";
  for (const auto& p : points) {
    os << p.N << ',' << io::format_double(p.seconds) << ',' << p.iterations << "\n";
    std::printf("N=%lld: %.2f s, %d iterations\n", static_cast<long long>(p.N),
                p.seconds, p.iterations);
  }
  if (!plot.empty()) {
    std::vector<double> xs, secs;
    for (const auto& p : points) {
      xs.push_back(static_cast<double>(p.N));
      secs.push_back(p.seconds);
    }
    io::write_svg_curve(plot, xs, {secs}, {"seconds"}, "N", "seconds");
  }
  return kExitOk;
}

int cmd_verify(int count, std::uint64_t seed) {
  Rng rng(seed);
  int failures = 0;
  auto random_psd = [&](Eigen::Index n, bool allow_rank_deficient) {
    Matrix A(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) A(r, c) = rng.gaussian();
    Eigen::HouseholderQR<Matrix> qr(A);
    Matrix Q = qr.householderQ();
    Vector ev(n);
    for (Eigen::Index i = 0; i < n; ++i) ev(i) = 0.1 + 4.9 * rng.uniform();
    if (allow_rank_deficient && rng.uniform() < 0.4) {
      const auto kill = static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(n));
      for (Eigen::Index i = 0; i < kill; ++i) ev(i) = 0.0;
    }
    return Matrix(Q * ev.asDiagonal() * Q.transpose());
  };

  double worst = 0.0;
  for (int it = 0; it < count; ++it) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.next_u64() % 7);
    const Matrix P = random_psd(n, true);
    Vector c(n), xi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      c(i) = rng.gaussian();
      xi(i) = 2.0 * rng.gaussian();
    }
    const double oracle = ambiguity::dist_to_faulted_set(xi, P, c);
    auto dp = design::distance_sdp(xi, P, c);
    const auto sol = sdp::solve(dp.problem);
    if (sol.status != sdp::Status::Optimal) {
      ++failures;
      continue;
    }
    worst = std::max(worst, std::abs(sol.value(dp.u) - oracle));
  }
  std::printf("[%s] distance SDP vs secular-equation oracle: worst |diff| = %.2e over %d instances\n",
              failures == 0 && worst < 1e-5 ? "PASS" : "FAIL", worst, count);
  if (failures || worst >= 1e-5) return kExitSolverFailure;
  return kExitOk;
}

std::vector<double> parse_list(const std::string& csv) {
  std::vector<double> out;
  std::string cur;
  for (const char ch : csv + ",") {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(std::stod(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributionally robust fault detection designer"};
  app.require_subcommand(1);

  std::string config_path, out_path, traj_path, samples_path, model_path,
      design_path, mc_path, method = "parity", metric = "rho1", plot_path;
  std::string grid_csv, gamma_csv, beta_csv, sizes_csv, suite = "oracles";
  Eigen::Index order = -1, stride = 1, nx = -1;
  int folds = 5, count = 100;
  double alpha = 0.01;
  std::uint64_t seed = 1;
  bool select_min = false;

  auto* simc = app.add_subcommand("simulate", "simulate the LTI plant to a trajectory CSV");
  simc->add_option("--config", config_path)->required();
  simc->add_option("--out", out_path)->required();

  auto* res = app.add_subcommand("residuals", "collect primary residual samples from a trajectory");
  res->add_option("--traj", traj_path)->required();
  res->add_option("--method", method)->check(CLI::IsMember({"parity", "skr"}));
  res->add_option("--order", order);
  res->add_option("--stride", stride);
  res->add_option("--model", model_path);
  res->add_option("--nx", nx);
  res->add_option("--out", out_path)->required();

  auto* cal = app.add_subcommand("calibrate", "cross-validate the Wasserstein radius");
  cal->add_option("--samples", samples_path)->required();
  cal->add_option("--grid", grid_csv)->required();
  cal->add_option("--folds", folds);
  cal->add_option("--alpha", alpha);
  cal->add_option("--metric", metric)->check(CLI::IsMember({"rho1", "rho2"}));
  cal->add_option("--seed", seed);
  cal->add_flag("--select-min", select_min);
  cal->add_option("--out", out_path);

  auto* des = app.add_subcommand("design", "solve the trade-off (or generic) design");
  des->add_option("--samples", samples_path)->required();
  des->add_option("--config", config_path)->required();
  des->add_option("--model", model_path);
  des->add_option("--order", order);
  des->add_option("--out", out_path)->required();

  auto* ev = app.add_subcommand("evaluate", "Monte Carlo FAR/FDR of a designed detector");
  ev->add_option("--design", design_path)->required();
  ev->add_option("--mc", mc_path)->required();
  ev->add_option("--model", model_path);
  ev->add_option("--out", out_path)->required();

  auto* sw = app.add_subcommand("sweep", "trade-off sweep over (beta, gamma)");
  sw->add_option("--samples", samples_path)->required();
  sw->add_option("--config", config_path)->required();
  sw->add_option("--model", model_path);
  sw->add_option("--order", order);
  sw->add_option("--gamma", gamma_csv)->required();
  sw->add_option("--beta", beta_csv)->required();
  sw->add_option("--out", out_path)->required();
  sw->add_option("--plot", plot_path);

  auto* be = app.add_subcommand("bench", "design wallclock across sample sizes");
  be->add_option("--samples", samples_path)->required();
  be->add_option("--config", config_path)->required();
  be->add_option("--model", model_path);
  be->add_option("--order", order);
  be->add_option("--sizes", sizes_csv)->required();
  be->add_option("--out", out_path)->required();
  be->add_option("--plot", plot_path);

  auto* vf = app.add_subcommand("verify", "oracle self-checks for the SDP machinery");
  vf->add_option("--suite", suite)->check(CLI::IsMember({"oracles"}));
  vf->add_option("--count", count);
  vf->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitBadConfig;
  }

  try {
    if (simc->parsed()) return cmd_simulate(config_path, out_path);
    if (res->parsed())
      return cmd_residuals(traj_path, method, order < 0 ? 4 : order, stride,
                           model_path, nx, out_path);
    if (cal->parsed())
      return cmd_calibrate(samples_path, parse_list(grid_csv), folds, alpha,
                           metric, seed, select_min, out_path);
    if (des->parsed())
      return cmd_design(samples_path, config_path, model_path, order, out_path);
    if (ev->parsed())
      return cmd_evaluate(design_path, mc_path, model_path, out_path);
    if (sw->parsed())
      return cmd_sweep(samples_path, config_path, model_path, order,
                       parse_list(gamma_csv), parse_list(beta_csv), out_path,
                       plot_path);
    if (be->parsed()) {
      std::vector<Eigen::Index> sizes;
      for (const double v : parse_list(sizes_csv))
        sizes.push_back(static_cast<Eigen::Index>(v));
      return cmd_bench(samples_path, config_path, model_path, order, sizes,
                       out_path, plot_path);
    }
    if (vf->parsed()) return cmd_verify(count, io::env_seed(seed));
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadConfig;
  } catch (const std::runtime_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadConfig;
  }
  return kExitBadConfig;
}
