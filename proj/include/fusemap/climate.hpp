#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fusemap/common.hpp"
#include "fusemap/csvio.hpp"
#include "fusemap/formula.hpp"
#include "fusemap/lgm.hpp"

namespace fusemap::climate {

/// Matern covariance parameters with smoothness fixed at 1.
struct MaternParams {
  double sigma2 = 1.0;   // marginal variance
  double range_km = 1.0; // spatial range; kappa = sqrt(8)/range

  double kappa() const;
};

double kappa_from_range(double range_km);
double range_from_kappa(double kappa);

/// Matern covariance at distance d (km), smoothness 1:
/// sigma2 * (kappa d) * K_1(kappa d), with the d -> 0 limit sigma2.
double matern_cov(double d, const MaternParams& p);

/// Regular lattice; node (ix, iy) sits at (x0 + ix h, y0 + iy h) with
/// row-major index iy * nx + ix.
struct Lattice {
  int nx = 0, ny = 0;
  double x0 = 0.0, y0 = 0.0, h = 1.0;

  int n_nodes() const { return nx * ny; }
  std::vector<std::pair<double, double>> node_coords() const;
};

/// Sparse SPDE precision for a Matern-1 field on the lattice:
/// (kappa^2 I - lap_h)^2 with reflecting boundary, scaled so the interior
/// marginal variance matches sigma2.
SpMat grid_spde_precision(const Lattice& lat, const MaternParams& p);

/// Interpolation weights from field nodes to target locations; every row
/// sums to 1.
struct ProjectionMatrix {
  SpMat B;                       // targets x nodes
  std::vector<bool> fallback;    // targets clamped to the nearest node
};

ProjectionMatrix projection_nearest(const std::vector<std::pair<double, double>>& nodes,
                                    const std::vector<std::pair<double, double>>& targets);
ProjectionMatrix projection_bilinear(const Lattice& lat,
                                     const std::vector<std::pair<double, double>>& targets);
ProjectionMatrix projection(const std::vector<std::pair<double, double>>& nodes,
                            const std::vector<std::pair<double, double>>& targets);

/// Latent climate field: Matern in space crossed with stationary AR1 in
/// time. Design rows are per (node, time), node fastest.
struct StFieldSpec {
  std::vector<std::pair<double, double>> node_locations;
  int T = 1;
  MaternParams matern;
  double ar = 0.0;  // phi_1
};

/// Dense separable covariance over nodes x T (node fastest); stationary
/// start so the marginal spatial variance is sigma2 / (1 - phi^2).
Eigen::MatrixXd st_joint_covariance(const StFieldSpec& spec, int dense_limit = 4000);

/// One observation of a point-referenced series.
struct PointObs {
  std::string id;
  double x = 0, y = 0;
  int t = 0;  // 1-based time index
  double value = 0;
  std::map<std::string, double> covariates;
};

struct Stage1Data {
  std::vector<PointObs> stations;
  std::vector<PointObs> gridded;   // empty for stations-only
  int T = 0;
};

Stage1Data read_stage1_data(const std::string& stations_csv,
                            const std::optional<std::string>& gridded_csv);
std::vector<PointObs> parse_point_obs(const csvio::Table& t, const std::string& id_col);

enum class Stage1Family { StationsOnly, Fusion };

struct Stage1Config {
  Stage1Family family = Stage1Family::StationsOnly;
  std::vector<formula::Term> covariates;     // z(s, t) terms
  std::vector<double> alpha1_grid = {0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4};
  std::vector<double> alpha1_log_prior;      // empty = uniform over grid
  int dense_limit = 4000;
  std::optional<Lattice> lattice;            // SPDE mode when set
  lgm::ExploreStrategy strategy = lgm::ExploreStrategy::mode_only();
};

/// Latent layout of an assembled stage-1 model.
struct Stage1Layout {
  int beta0 = 0;
  std::vector<int> beta;                      // covariate coefficient slots
  int xi_offset = 0;                          // nodes x T block, node fastest
  int alpha0_offset = -1;                     // fusion only
  int n_nodes = 0;
  int T = 0;
  std::vector<std::pair<double, double>> nodes;
  std::vector<std::string> covariate_names;
  double alpha1 = 1.0;                        // conditioning value (fusion)
  std::optional<Lattice> lattice;
};

struct Stage1Model {
  lgm::LatentGaussianModel model;
  Stage1Layout layout;
};

/// Assemble the stations-only or fusion observation model conditional on
/// alpha1. Hyperparameter anchors (empirical sd, one-third max distance)
/// are derived from the data.
Stage1Model assemble_stage1(const Stage1Data& data, const Stage1Config& config, double alpha1 = 1.0);

struct Stage1Fit {
  std::vector<lgm::LgmFit> fits;      // one per alpha1 value (single entry for stations-only)
  std::vector<Stage1Layout> layouts;
  std::vector<double> alphas;
  Eigen::VectorXd weights;            // BMA weights, sum to 1
  std::vector<std::string> warnings;
};

/// Fit the stage-1 model; for the fusion family, one conditional fit per
/// alpha1 grid value with Bayesian-model-averaging weights
/// w_l = pi(y | a_l) pi(a_l) / sum_l pi(y | a_l) pi(a_l).
Stage1Fit fit_stage1_bma(const Stage1Data& data, const Stage1Config& config, int jobs = 1);

/// BMA weights from conditional log marginal likelihoods and log priors
/// (log-sum-exp stabilized).
Eigen::VectorXd bma_weights(const std::vector<double>& log_mlik,
                            const std::vector<double>& log_prior);

struct PredictionTarget {
  std::string id;
  double x = 0, y = 0;
  std::map<std::string, double> covariates;  // static in time
};

enum class PredictMode { Mean, Sample };

/// Predicted field values at the targets for every time 1..T:
/// beta0 + beta' z + b' xi_t, using posterior means (Mean) or one joint
/// posterior draw (Sample).
Eigen::MatrixXd predict_points(const lgm::LgmFit& fit, const Stage1Layout& layout,
                               const std::vector<PredictionTarget>& targets,
                               const std::vector<formula::Term>& covariate_terms,
                               PredictMode mode, std::uint64_t seed = 0);

}  // namespace fusemap::climate
