#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fusemap/common.hpp"
#include "fusemap/csvio.hpp"
#include "fusemap/formula.hpp"
#include "fusemap/gmrf.hpp"
#include "fusemap/graph.hpp"
#include "fusemap/lgm.hpp"

namespace fusemap::health {

/// Rectangular panel of case counts and populations over areas x times.
/// Missing cells are marked and excluded from the likelihood.
struct CasePanel {
  int n_areas = 0;
  int T = 0;
  std::vector<std::string> area_ids;
  Eigen::MatrixXd cases;       // areas x T
  Eigen::MatrixXd population;  // areas x T
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> observed;

  int cell_count() const { return n_areas * T; }
};

CasePanel read_case_panel(const std::string& path, const std::vector<std::string>& area_ids);

struct ExpectedTable {
  Eigen::MatrixXd expected;   // areas x T
  Eigen::VectorXd rate;       // global rate r_t per time
  std::vector<int> zero_case_times;
};

/// Internal standardization: r_t = sum_i y / sum_i n, E = n * r_t.
ExpectedTable expected_cases(const CasePanel& panel);

struct SirTable {
  Eigen::MatrixXd sir;   // y / E, NaN where E == 0
  Eigen::MatrixXd sd;    // sqrt(y) / E (Poisson delta method)
};

SirTable sir(const CasePanel& panel, const ExpectedTable& expected);

/// Covariate table in wide format: one value per (area, time, column).
struct CovariateTable {
  std::vector<std::string> names;
  // per column: areas x T values
  std::vector<Eigen::MatrixXd> values;
  int col(const std::string& name) const;

  double value(const std::string& name, int area, int t) const;
  void add_column(const std::string& name, const Eigen::MatrixXd& v);
};

CovariateTable read_covariates(const std::string& path, const std::vector<std::string>& area_ids,
                               int T);

struct HealthModelSpec {
  std::vector<formula::Term> formula;
  bool bym2_space = true;
  bool rw2_time = true;
  bool iid_time = true;
  std::optional<gmrf::InteractionKind> interaction = gmrf::InteractionKind::II;
  bool component_intercepts = true;
  bool scale_rw2 = true;
};

/// Latent layout of an assembled health model.
struct HealthLayout {
  int intercept = 0;
  std::vector<int> comp_intercepts;  // deviations for components 2..C
  std::vector<int> gamma;            // formula coefficients
  int psi_offset = -1;               // BYM2 psi block (N)
  int u_offset = -1;                 // BYM2 u block (N)
  int rw2_offset = -1;               // T
  int iid_offset = -1;               // T
  int inter_offset = -1;             // N*T, area fastest
  int n_areas = 0;
  int T = 0;
  int n_latent = 0;
  std::vector<std::string> fixed_names;
  std::vector<int> obs_area, obs_time;  // per observation row

  int n_fixed() const { return 1 + static_cast<int>(comp_intercepts.size() + gamma.size()); }
};

struct HealthModel {
  lgm::LatentGaussianModel model;
  HealthLayout layout;
  HealthModelSpec spec;
};

/// Assemble the Poisson model with offset log E and the requested effect
/// structure; hyperparameters carry the project's prior settings.
HealthModel assemble_health(const HealthModelSpec& spec, const CasePanel& panel,
                            const ExpectedTable& expected, const CovariateTable& covariates,
                            const graph::AdjacencyGraph& g);

struct HealthFit {
  lgm::LgmFit fit;
  double mlik = 0.0;
  double waic = 0.0;
  double neg_sum_log_cpo = 0.0;
};

HealthFit fit_health(const HealthModel& model,
                     lgm::ExploreStrategy strategy = lgm::ExploreStrategy::axis_grid(1, 1.0),
                     std::optional<Eigen::VectorXd> theta0 = std::nullopt,
                     int diag_draws = 1000);

struct RiskTable {
  std::vector<int> area, time;           // observed cells, row order area-fastest
  Eigen::VectorXd mean, sd, q025, q975;  // of lambda = exp(eta)
};

/// lambda(B, t) summarized from linear-predictor draws.
RiskTable risk_estimates(const HealthFit& fit, const HealthModel& model, int n_draws = 1000,
                         std::uint64_t seed = 2024);

/// P(lambda > threshold) per observed cell, from the same draw machinery.
Eigen::VectorXd exceedance(const HealthFit& fit, const HealthModel& model, double threshold = 1.0,
                           int n_draws = 1000, std::uint64_t seed = 2024);

}  // namespace fusemap::health
