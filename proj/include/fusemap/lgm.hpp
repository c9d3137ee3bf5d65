#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>

#include "fusemap/common.hpp"
#include "fusemap/gmrf.hpp"

namespace fusemap::lgm {

enum class Likelihood { Gaussian, Poisson };

/// One hyperparameter, handled internally on its transform scale.
/// log_prior includes the Jacobian of the transform.
struct Hyper {
  std::string name;
  std::function<double(double)> to_natural;
  std::function<double(double)> log_prior;
  double init = 0.0;  // internal scale
};

/// Hyper factories wiring the transforms and priors used across the
/// project. theta is the internal value; natural-scale meaning in the name.
Hyper hyper_log_precision_pc(const std::string& name, double u, double alpha, double init = 0.0);
Hyper hyper_log_precision_loggamma(const std::string& name, double shape, double rate, double init = 0.0);
Hyper hyper_ar_correlation(const std::string& name, double mean, double variance, double init = 0.0);
Hyper hyper_logit(const std::string& name, std::function<double(double)> log_prior_internal, double init = 0.0);
/// Internal scale log(range); P(range < range0) = alpha, spatial dimension 2.
Hyper hyper_log_range_pc(const std::string& name, double range0, double alpha, double init);
/// Internal scale log(variance), natural value the VARIANCE (usable as a
/// var_slot hyper); PC exponential prior on the standard deviation with
/// P(sd > sd0) = alpha.
Hyper hyper_log_variance_pc_sd(const std::string& name, double sd0, double alpha, double init);

/// Generic latent Gaussian model: Gaussian/Poisson observations with a
/// sparse linear map into the latent vector, a prior precision builder over
/// hyperparameters, and per-hyperparameter transforms and priors.
struct LatentGaussianModel {
  int n_latent = 0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> design;  // n_obs x n_latent
  Eigen::VectorXd y;
  Eigen::VectorXd log_offset;            // Poisson rows: log E; 0 elsewhere
  std::vector<Likelihood> lik;           // per observation row
  Eigen::VectorXi var_slot;              // Gaussian rows: hyper index or -1
  Eigen::VectorXd fixed_var;             // Gaussian rows with var_slot < 0
  std::vector<Hyper> hypers;
  std::function<gmrf::PrecisionSpec(const Eigen::VectorXd&)> prior;
  std::vector<std::string> latent_names;

  int n_obs() const { return static_cast<int>(y.size()); }
  int n_hyper() const { return static_cast<int>(hypers.size()); }
  Eigen::VectorXd theta_init() const;
  double log_prior_hyper(const Eigen::VectorXd& theta) const;
};

/// Gaussian approximation to pi(x | y, theta) at fixed hyperparameters.
/// Qpost and mode_unc live on the proper sampling parameterization; mode,
/// samples and marginal variances are conditioned on the constraints.
struct GaussianApprox {
  Eigen::VectorXd mode;      // constrained
  Eigen::VectorXd mode_unc;  // before constraint correction
  SpMat Qpost;
  std::shared_ptr<Eigen::SimplicialLLT<SpMat>> chol;
  double log_det_post = 0.0;
  Eigen::MatrixXd A;          // constraint rows (0 x n when none)
  Eigen::MatrixXd QinvAt;     // posterior Q^-1 A^T
  Eigen::MatrixXd S_post;     // A Qpost^-1 A^T
  Eigen::LLT<Eigen::MatrixXd> S_llt;
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  double log_mlik = 0.0;      // conditional log marginal likelihood pi(y|theta)

  Eigen::VectorXd sample(Rng& rng) const;
  /// Constrained marginal standard deviations for the given latent indices.
  Eigen::VectorXd marginal_sd(const std::vector<int>& idx) const;
  Eigen::VectorXd marginal_sd_all() const;
};

struct LaplaceOptions {
  int max_iterations = 100;
  double grad_tol = 1e-6;
  std::optional<Eigen::VectorXd> x_init;
};

GaussianApprox laplace_at(const LatentGaussianModel& model, const Eigen::VectorXd& theta,
                          const LaplaceOptions& opts = {});

/// Laplace identity log pi(y|theta); equals the exact marginal likelihood
/// for all-Gaussian models. Recomputed from the stored approximation.
double log_marginal_likelihood(const LatentGaussianModel& model, const Eigen::VectorXd& theta,
                               const GaussianApprox& approx);

struct OptimizeResult {
  Eigen::VectorXd theta;
  double objective = 0.0;  // log pi(y|theta) + log pi(theta)
  bool converged = false;
  int evaluations = 0;
};

/// Nelder-Mead maximization of log pi(y|theta) + log pi(theta) on the
/// transform scale.
OptimizeResult optimize_hyper(const LatentGaussianModel& model, const Eigen::VectorXd& theta0,
                              int max_evaluations = 400, double simplex_tol = 1e-4);

struct ThetaPoint {
  Eigen::VectorXd theta;
  double weight = 1.0;
  double log_joint = 0.0;
  GaussianApprox approx;
};

struct LgmFit {
  std::vector<ThetaPoint> points;
  Eigen::VectorXd theta_mode;
  double log_mlik = 0.0;  // integrated over theta (Laplace, diagonal Hessian)
  bool hyper_converged = true;
  std::vector<std::string> warnings;

  Eigen::VectorXd latent_mean() const;
  Eigen::VectorXd latent_sd() const;
  /// Weighted mixture summary (mean, sd) for one latent coordinate.
  void mixture_moments(int idx, double& mean, double& sd) const;
};

struct ExploreStrategy {
  enum class Kind { ModeOnly, AxisGrid } kind = Kind::ModeOnly;
  int grid_points = 1;   // k: points on each side per axis
  double step = 1.0;     // in units of the axis scale
  static ExploreStrategy mode_only() { return {}; }
  static ExploreStrategy axis_grid(int k, double step) {
    return {Kind::AxisGrid, k, step};
  }
};

LgmFit explore_hyper(const LatentGaussianModel& model, const Eigen::VectorXd& theta_hat,
                     const ExploreStrategy& strategy);

/// optimize_hyper followed by explore_hyper; theta0 defaults to the
/// model's hyper inits.
LgmFit fit_lgm(const LatentGaussianModel& model, const ExploreStrategy& strategy,
               std::optional<Eigen::VectorXd> theta0 = std::nullopt);

/// Joint posterior draws: pick a theta point by weight, then draw from its
/// constrained Gaussian approximation. Deterministic given seed.
std::vector<Eigen::VectorXd> sample_latent(const LgmFit& fit, int n, std::uint64_t seed);

struct PredictiveDiagnostics {
  double waic = 0.0;
  double p_waic = 0.0;
  double lppd = 0.0;
  double neg_sum_log_cpo = 0.0;
  std::vector<int> zero_cpo_rows;
};

PredictiveDiagnostics predictive_diagnostics(const LgmFit& fit, const LatentGaussianModel& model,
                                             int n_draws = 1000, std::uint64_t seed = 12345);

double waic(const LgmFit& fit, const LatentGaussianModel& model, int n_draws = 1000,
            std::uint64_t seed = 12345);
double cpo_sum(const LgmFit& fit, const LatentGaussianModel& model, int n_draws = 1000,
               std::uint64_t seed = 12345);

/// Per-observation log density at latent vector x.
double log_likelihood(const LatentGaussianModel& model, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& theta);
Eigen::VectorXd pointwise_log_likelihood(const LatentGaussianModel& model, const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& theta);

/// Mixture-of-Gaussians quantile on a shared grid (used for all reported
/// quantile columns).
double mixture_quantile(const std::vector<double>& weights, const std::vector<double>& means,
                        const std::vector<double>& sds, double p, int grid_points = 2001);

/// Fit summary row: mean, sd, and the quantile ladder used by the CSV
/// exports (q0.025, q0.05, q0.5, q0.95, q0.975).
struct SummaryRow {
  std::string name;
  double mean = 0.0, sd = 0.0, q025 = 0.0, q05 = 0.0, q50 = 0.0, q95 = 0.0, q975 = 0.0;
};

std::vector<SummaryRow> summarize_latent(const LgmFit& fit, const std::vector<int>& idx,
                                         const std::vector<std::string>& names);

}  // namespace fusemap::lgm
