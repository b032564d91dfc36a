#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sqr/joint_sampler.hpp"
#include "sqr/random.hpp"

namespace sqr {

enum class PriceMode { linear, nonlinear };

struct SimConfig {
  int years = 100;
  int counties = 500;
  int replicates = 100;
  PriceMode price_mode = PriceMode::linear;
  double alpha_price = 3.0;
  double alpha_yield = -3.0;
  double stocks_a = 7.0;
  double stocks_b = 44.0;

  void validate() const;
};

/// Data-generating process of the synthetic study.
double price_location(double stocks, PriceMode mode);
double price_scale(double stocks, PriceMode mode);
double yield_location(double price, double stocks);
double yield_scale(double price, double stocks);

/// s~_t ~ Beta(a, b), p~_t = mu_p(s~) + sigma_p(s~) eps_p, and for each of
/// n_t counties y~_jt = mu_y(p~, s~) + sigma_y eps_y.
DetrendedPanel generate_panel(const SimConfig& config, const RandomStream& rng);

double true_quantile_price(double tau, double stocks, PriceMode mode, double alpha = 3.0);
double true_quantile_yield(double tau, double price, double stocks, double alpha = -3.0);
/// g(y~ | p~, s~) g(p~ | s~).
double true_joint_density(double yield, double price, double stocks, PriceMode mode, double alpha_price = 3.0,
                          double alpha_yield = -3.0);

/// Beta(a, b) quantile.
double beta_quantile(double p, double a, double b);

/// Density on a rectangular grid; values(i, j) is at (y_axis[i], p_axis[j]).
struct DensityGrid {
  std::vector<double> y_axis;
  std::vector<double> p_axis;
  Eigen::MatrixXd values;
  double bandwidth_y = 0.0;
  double bandwidth_p = 0.0;

  double cell_area() const;
};

/// 1.06 min(sd, IQR / 1.34) n^(-1/5).
double reference_bandwidth(std::span<const double> x);

/// Gaussian product-kernel density of (y, p) pairs on a grid x grid lattice
/// spanning each sample range widened by three bandwidths.
DensityGrid kde2d(std::span<const double> y, std::span<const double> p, std::size_t grid = 25,
                  std::optional<std::pair<double, double>> bandwidths = std::nullopt);

/// Uniform-weight mean over grid cells of (estimate - truth)^2.
double mise(const DensityGrid& estimate, const std::function<double(double y, double p)>& truth);
/// Same against a density stored on the identical grid.
double mise(const DensityGrid& estimate, const DensityGrid& truth);

/// Model options of the synthetic study: supports [-1, 1] for p~ and [0, 1]
/// for s~.
JointModelOptions simulation_model_options();

struct SimStudyOptions {
  SimConfig config;
  std::vector<double> density_stocks{0.093, 0.173, 0.281};
  std::size_t draws = 10000;
  std::size_t density_grid = 25;
  std::vector<double> curve_taus{0.1, 0.25, 0.5, 0.75, 0.9};
  /// Evaluation points for quantile curves; empty: 50 points spanning the
  /// 0.005 and 0.995 quantiles of the stocks distribution.
  std::vector<double> curve_stocks;
  /// Fit only the price model (quantile recovery runs).
  bool price_only = false;
  JointModelOptions model = simulation_model_options();
  std::size_t workers = 1;
  /// Called after each replicate with its index.
  std::function<void(std::size_t)> progress;
};

struct SimReplicate {
  std::vector<double> mise;            // per density stock value
  Eigen::MatrixXd price_curves;        // tau x curve point
  std::vector<double> clamp_fraction;  // per density stock value
  double price_lambda = 0.0;
  double yield_lambda = 0.0;
};

struct SimStudyResult {
  std::vector<double> curve_stocks;
  std::vector<double> curve_taus;
  std::vector<double> density_stocks;
  std::vector<SimReplicate> replicates;
  /// Mean over replicates of each MISE value.
  std::vector<double> mean_mise;
  Eigen::MatrixXd true_curves;
  Eigen::MatrixXd band_lower;  // empirical 0.025 quantile over replicates
  Eigen::MatrixXd band_upper;  // empirical 0.975 quantile
  /// Per tau: fraction of curve points with the truth inside the band.
  std::vector<double> coverage;
};

SimStudyResult run_simstudy(const SimStudyOptions& options, const RandomStream& rng);

}  // namespace sqr
