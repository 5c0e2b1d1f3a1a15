#include "drfd/io.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace drfd::io {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return is;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw std::runtime_error("bad numeric field: '" + s + "'");
  }
}

json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty())
    throw std::runtime_error("expected a nested array matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols)
      throw std::runtime_error("ragged matrix rows");
    for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = j[r][c].get<double>();
  }
  return M;
}

Vector vector_from_json(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace

void write_trajectory_csv(const std::string& path, const sim::Trajectory& traj) {
  auto os = open_out(path);
  os << "k";
  for (Eigen::Index j = 0; j < traj.U.cols(); ++j) os << ",u" << j + 1;
  for (Eigen::Index j = 0; j < traj.Y.cols(); ++j) os << ",y" << j + 1;
  for (Eigen::Index j = 0; j < traj.D.cols(); ++j) os << ",d" << j + 1;
  for (Eigen::Index j = 0; j < traj.F.cols(); ++j) os << ",f" << j + 1;
  os << "\n";
  for (Eigen::Index k = 0; k < traj.length(); ++k) {
    os << k;
    for (Eigen::Index j = 0; j < traj.U.cols(); ++j) os << ',' << format_double(traj.U(k, j));
    for (Eigen::Index j = 0; j < traj.Y.cols(); ++j) os << ',' << format_double(traj.Y(k, j));
    for (Eigen::Index j = 0; j < traj.D.cols(); ++j) os << ',' << format_double(traj.D(k, j));
    for (Eigen::Index j = 0; j < traj.F.cols(); ++j) os << ',' << format_double(traj.F(k, j));
    os << "\n";
  }
}

sim::Trajectory read_trajectory_csv(const std::string& path) {
  auto is = open_in(path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty trajectory file");
  const auto header = split_csv(line);
  Eigen::Index nu = 0, ny = 0, nd = 0, nf = 0;
  for (const auto& h : header) {
    if (h.rfind("u", 0) == 0 && h != "u") ++nu;
    else if (h.rfind("y", 0) == 0) ++ny;
    else if (h.rfind("d", 0) == 0) ++nd;
    else if (h.rfind("f", 0) == 0) ++nf;
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (static_cast<Eigen::Index>(fields.size()) != 1 + nu + ny + nd + nf)
      throw std::runtime_error("trajectory row has wrong field count");
    std::vector<double> row;
    for (std::size_t i = 1; i < fields.size(); ++i) row.push_back(parse_double(fields[i]));
    rows.push_back(std::move(row));
  }
  const auto T = static_cast<Eigen::Index>(rows.size());
  sim::Trajectory traj;
  traj.U.resize(T, nu);
  traj.Y.resize(T, ny);
  traj.D.resize(T, nd);
  traj.F.resize(T, nf);
  for (Eigen::Index k = 0; k < T; ++k) {
    Eigen::Index pos = 0;
    for (Eigen::Index j = 0; j < nu; ++j) traj.U(k, j) = rows[k][pos++];
    for (Eigen::Index j = 0; j < ny; ++j) traj.Y(k, j) = rows[k][pos++];
    for (Eigen::Index j = 0; j < nd; ++j) traj.D(k, j) = rows[k][pos++];
    for (Eigen::Index j = 0; j < nf; ++j) traj.F(k, j) = rows[k][pos++];
  }
  traj.x0 = Vector::Zero(0);
  return traj;
}

sim::Trajectory read_trajectory_csv(const std::string& path, Eigen::Index nu,
                                    Eigen::Index ny, Eigen::Index nd,
                                    Eigen::Index nf) {
  auto traj = read_trajectory_csv(path);
  if (traj.U.cols() != nu || traj.Y.cols() != ny || traj.D.cols() != nd ||
      traj.F.cols() != nf)
    throw std::runtime_error("trajectory channel counts do not match the model");
  return traj;
}

void write_model_json(const std::string& path, const sim::StateSpaceModel& m) {
  json j;
  j["A"] = matrix_to_json(m.A);
  j["B"] = matrix_to_json(m.B);
  j["Bd"] = matrix_to_json(m.Bd);
  j["Bf"] = matrix_to_json(m.Bf);
  j["C"] = matrix_to_json(m.C);
  j["D"] = matrix_to_json(m.D);
  j["Dd"] = matrix_to_json(m.Dd);
  j["Df"] = matrix_to_json(m.Df);
  open_out(path) << j.dump(2) << "\n";
}

sim::StateSpaceModel read_model_json(const std::string& path) {
  json j;
  open_in(path) >> j;
  sim::StateSpaceModel m;
  m.A = matrix_from_json(j.at("A"));
  m.B = matrix_from_json(j.at("B"));
  m.Bd = matrix_from_json(j.at("Bd"));
  m.Bf = matrix_from_json(j.at("Bf"));
  m.C = matrix_from_json(j.at("C"));
  m.D = matrix_from_json(j.at("D"));
  m.Dd = matrix_from_json(j.at("Dd"));
  m.Df = matrix_from_json(j.at("Df"));
  m.validate();
  return m;
}

void write_samples_csv(const std::string& path, const MatrixRef& samples,
                       const SampleMeta& meta) {
  auto os = open_out(path);
  for (Eigen::Index j = 0; j < samples.rows(); ++j)
    os << (j ? "," : "") << "xi_" << j + 1;
  os << "\n";
  for (Eigen::Index i = 0; i < samples.cols(); ++i) {
    for (Eigen::Index j = 0; j < samples.rows(); ++j)
      os << (j ? "," : "") << format_double(samples(j, i));
    os << "\n";
  }
  json j;
  j["kind"] = meta.kind;
  j["s"] = meta.s;
  j["stride"] = meta.stride;
  j["n_xi"] = samples.rows();
  j["scaling"] = meta.scaling;
  open_out(path + ".meta.json") << j.dump(2) << "\n";
}

Matrix read_samples_csv(const std::string& path) {
  auto is = open_in(path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty samples file");
  const auto n = static_cast<Eigen::Index>(split_csv(line).size());
  std::vector<Vector> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (static_cast<Eigen::Index>(fields.size()) != n)
      throw std::runtime_error("sample row has wrong field count");
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = parse_double(fields[static_cast<std::size_t>(i)]);
    rows.push_back(std::move(v));
  }
  Matrix out(n, static_cast<Eigen::Index>(rows.size()));
  for (Eigen::Index i = 0; i < out.cols(); ++i) out.col(i) = rows[static_cast<std::size_t>(i)];
  return out;
}

SampleMeta read_sample_meta(const std::string& path) {
  json j;
  open_in(path + ".meta.json") >> j;
  SampleMeta meta;
  meta.kind = j.value("kind", "parity");
  meta.s = j.value("s", 0);
  meta.stride = j.value("stride", 1);
  meta.n_xi = j.value("n_xi", 0);
  meta.scaling = j.value("scaling", "none");
  return meta;
}

DesignConfigFile read_design_config_json(const std::string& path) {
  json j;
  open_in(path) >> j;
  DesignConfigFile out;
  auto& cfg = out.config;
  cfg.alpha = j.value("alpha", 0.01);
  cfg.theta = j.value("theta", 0.0);
  const std::string metric = j.value("metric", "rho1");
  if (metric == "rho1") cfg.metric = design::Metric::Rho1;
  else if (metric == "rho2") cfg.metric = design::Metric::Rho2;
  else throw std::runtime_error("metric must be rho1 or rho2");
  cfg.conv_tol = j.value("conv_tol", 1e-6);
  cfg.max_iters = j.value("max_iters", 50);
  if (j.contains("init_iters")) cfg.init_iters = j["init_iters"].get<int>();
  if (j.contains("mult_headroom")) cfg.mult_headroom = j["mult_headroom"].get<double>();
  for (const auto& f : j.value("faults", json::array())) {
    design::FaultSpec spec;
    spec.beta = f.value("beta", 0.9);
    spec.gamma = f.value("gamma", 0.0);
    out.profiles.push_back(vector_from_json(f.at("profile")));
    cfg.faults.push_back(spec);  // signature filled by the caller via Vbar
  }
  for (const auto& e : j.value("support", json::array())) {
    design::SupportEllipsoid ell;
    ell.omega = matrix_from_json(e.at("omega"));
    ell.center = vector_from_json(e.at("center"));
    cfg.support.push_back(std::move(ell));
  }
  return out;
}

void write_design_result_json(const std::string& path,
                              const design::DesignResult& result,
                              const std::string& generator_kind,
                              Eigen::Index order) {
  json j;
  j["P_bar"] = matrix_to_json(result.Pbar);
  j["P"] = matrix_to_json(result.P);
  j["eta"] = vector_to_json(result.eta);
  j["objective_trace"] = result.objective_trace;
  j["status"] = design::to_string(result.status);
  j["oracle_far"] = result.oracle_far;
  j["oracle_fdr_deficit"] = result.oracle_fdr_deficit;
  j["seconds"] = result.seconds;
  j["iterations"] = result.iterations;
  j["objective"] = result.objective;
  j["generator"] = {{"kind", generator_kind}, {"order", order}};
  open_out(path) << j.dump(2) << "\n";
}

DesignResultFile read_design_result_json(const std::string& path) {
  json j;
  open_in(path) >> j;
  DesignResultFile out;
  auto& r = out.result;
  r.Pbar = matrix_from_json(j.at("P_bar"));
  r.P = matrix_from_json(j.at("P"));
  r.eta = vector_from_json(j.value("eta", json::array()));
  r.objective_trace = j.value("objective_trace", std::vector<double>{});
  const std::string st = j.value("status", "converged");
  if (st == "converged") r.status = design::DesignStatus::Converged;
  else if (st == "max-iters") r.status = design::DesignStatus::MaxIters;
  else if (st == "infeasible") r.status = design::DesignStatus::Infeasible;
  else r.status = design::DesignStatus::NumericalFailure;
  r.oracle_far = j.value("oracle_far", 0.0);
  r.oracle_fdr_deficit = j.value("oracle_fdr_deficit", std::vector<double>{});
  r.seconds = j.value("seconds", 0.0);
  r.iterations = j.value("iterations", 0);
  r.objective = j.value("objective", 0.0);
  if (j.contains("generator")) {
    out.generator_kind = j["generator"].value("kind", "parity");
    out.order = j["generator"].value("order", 0);
  }
  return out;
}

mc::McConfig read_mc_config_json(const std::string& path) {
  json j;
  open_in(path) >> j;
  mc::McConfig cfg;
  cfg.runs = j.value("runs", 250);
  cfg.T = j.value("T", 800);
  cfg.onset = j.value("onset", 400);
  cfg.seed = j.value("seed", 1);
  cfg.parallelism = j.value("parallelism", 0);
  for (const auto& f : j.value("faults", json::array()))
    cfg.faults.push_back(vector_from_json(f));
  return cfg;
}

void write_rates_csv(const std::string& path, const std::vector<mc::RatesRow>& rows) {
  auto os = open_out(path);
  std::size_t nf = 0, ne = 0;
  for (const auto& r : rows) {
    nf = std::max(nf, r.fdr_pct.size());
    ne = std::max(ne, r.eta.size());
  }
  os << "name,far_pct";
  for (std::size_t j = 0; j < nf; ++j) os << ",fdr" << j + 1 << "_pct";
  for (std::size_t j = 0; j < ne; ++j) os << ",eta" << j + 1;
  os << ",rho,iterations,seconds\n";
  for (const auto& r : rows) {
    os << r.name << ',' << format_double(r.far_pct);
    for (std::size_t j = 0; j < nf; ++j)
      os << ',' << (j < r.fdr_pct.size() ? format_double(r.fdr_pct[j]) : "");
    for (std::size_t j = 0; j < ne; ++j)
      os << ',' << (j < r.eta.size() ? format_double(r.eta[j]) : "");
    os << ',' << format_double(r.rho) << ',' << r.iterations << ','
       << format_double(r.seconds) << "\n";
  }
}

void write_calibration_csv(const std::string& path,
                           const calibrate::CalibrationReport& report) {
  auto os = open_out(path);
  os << "theta,mean_far";
  for (int k = 0; k < report.folds; ++k) os << ",fold" << k + 1 << "_far";
  os << ",selected\n";
  for (std::size_t gi = 0; gi < report.grid.size(); ++gi) {
    os << format_double(report.grid[gi]) << ','
       << format_double(report.mean_far[gi]);
    for (int k = 0; k < report.folds; ++k)
      os << ',' << format_double(report.fold_fars(static_cast<Eigen::Index>(gi), k));
    os << ',' << (static_cast<int>(gi) == report.selected_index ? 1 : 0) << "\n";
  }
}

void write_svg_curve(const std::string& path, const std::vector<double>& x,
                     const std::vector<std::vector<double>>& series,
                     const std::vector<std::string>& labels,
                     const std::string& x_label, const std::string& y_label) {
  if (x.empty() || series.empty()) throw std::invalid_argument("empty plot data");
  const int W = 640, Hh = 420, ml = 60, mr = 20, mt = 20, mb = 45;
  double xmin = x.front(), xmax = x.front(), ymin = 0, ymax = 1;
  for (const double v : x) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
  bool first = true;
  for (const auto& s : series)
    for (const double v : s) {
      if (first) { ymin = ymax = v; first = false; }
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double v) { return Hh - mb - (v - ymin) / (ymax - ymin) * (Hh - mt - mb); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  auto os = open_out(path);
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='"
     << Hh << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  os << "<line x1='" << ml << "' y1='" << Hh - mb << "' x2='" << W - mr
     << "' y2='" << Hh - mb << "' stroke='black'/>\n";
  os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='"
     << Hh - mb << "' stroke='black'/>\n";
  os << "<text x='" << (W / 2) << "' y='" << Hh - 10
     << "' text-anchor='middle' font-size='13'>" << x_label << "</text>\n";
  os << "<text x='15' y='" << (Hh / 2)
     << "' text-anchor='middle' font-size='13' transform='rotate(-90 15 "
     << (Hh / 2) << ")'>" << y_label << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    os << "<polyline fill='none' stroke='" << colors[si % 5]
       << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < x.size() && i < series[si].size(); ++i)
      os << px(x[i]) << ',' << py(series[si][i]) << ' ';
    os << "'/>\n";
    if (si < labels.size())
      os << "<text x='" << W - mr - 150 << "' y='" << mt + 16 * (si + 1)
         << "' font-size='12' fill='" << colors[si % 5] << "'>" << labels[si]
         << "</text>\n";
  }
  os << "</svg>\n";
}

std::uint64_t env_seed(std::uint64_t fallback) {
  const char* e = std::getenv("DRFD_SEED");
  if (!e) return fallback;
  return std::strtoull(e, nullptr, 10);
}

int env_threads(int fallback) {
  const char* e = std::getenv("DRFD_THREADS");
  if (!e) return std::max(1, fallback);
  return std::max(1, static_cast<int>(std::strtol(e, nullptr, 10)));
}

}  // namespace drfd::io
