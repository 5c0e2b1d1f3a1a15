#pragma once

#include <string>
#include <vector>

#include "drfd/calibrate.hpp"
#include "drfd/design.hpp"
#include "drfd/mc.hpp"
#include "drfd/residual.hpp"
#include "drfd/sim.hpp"
#include "drfd/types.hpp"

namespace drfd::io {

/// Shortest round-trip decimal text for a double (deterministic output).
std::string format_double(double v);

// Trajectory CSV: header k,u1..,y1..,d1..,f1.., one row per sample, k from 0.
void write_trajectory_csv(const std::string& path, const sim::Trajectory& traj);
sim::Trajectory read_trajectory_csv(const std::string& path, Eigen::Index nu,
                                    Eigen::Index ny, Eigen::Index nd,
                                    Eigen::Index nf);
/// Column split inferred from the header counts (u*, y*, d*, f*).
sim::Trajectory read_trajectory_csv(const std::string& path);

// Model JSON: keys A,B,Bd,Bf,C,D,Dd,Df as row-major nested arrays.
void write_model_json(const std::string& path, const sim::StateSpaceModel& m);
sim::StateSpaceModel read_model_json(const std::string& path);

struct SampleMeta {
  std::string kind;   // "parity" | "skr"
  Eigen::Index s = 0;
  Eigen::Index stride = 1;
  Eigen::Index n_xi = 0;
  std::string scaling = "none";
};

// Sample CSV: header xi_1..xi_n, one sample per row; metadata sidecar JSON
// at <path>.meta.json.
void write_samples_csv(const std::string& path, const MatrixRef& samples,
                       const SampleMeta& meta);
Matrix read_samples_csv(const std::string& path);
SampleMeta read_sample_meta(const std::string& path);

// Design configuration JSON: alpha, theta, metric, conv_tol, max_iters,
// faults [{profile, beta, gamma}], support [{omega, center}]. Profiles are
// turned into signatures by the caller (they need the fault basis Vbar).
struct DesignConfigFile {
  design::DesignConfig config;
  std::vector<Vector> profiles;  // aligned with config.faults
};
DesignConfigFile read_design_config_json(const std::string& path);

void write_design_result_json(const std::string& path,
                              const design::DesignResult& result,
                              const std::string& generator_kind,
                              Eigen::Index order);
struct DesignResultFile {
  design::DesignResult result;
  std::string generator_kind;
  Eigen::Index order = 0;
};
DesignResultFile read_design_result_json(const std::string& path);

// Monte Carlo configuration JSON: runs, T, onset, faults, seed, parallelism.
mc::McConfig read_mc_config_json(const std::string& path);

void write_rates_csv(const std::string& path, const std::vector<mc::RatesRow>& rows);
void write_calibration_csv(const std::string& path,
                           const calibrate::CalibrationReport& report);

/// Minimal SVG polyline chart for sweep/bench outputs.
void write_svg_curve(const std::string& path, const std::vector<double>& x,
                     const std::vector<std::vector<double>>& series,
                     const std::vector<std::string>& labels,
                     const std::string& x_label, const std::string& y_label);

std::uint64_t env_seed(std::uint64_t fallback);
int env_threads(int fallback);

}  // namespace drfd::io
