#include "fusemap/climate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <set>

#include "fusemap/gmrf.hpp"

namespace fusemap::formula {

Term parse_term(const std::string& text) {
  auto strip = [](std::string s) {
    size_t b = s.find_first_not_of(" \t");
    size_t e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::string s = strip(text);
  if (s.empty()) throw ValidationError("empty formula term");
  if (s.rfind("log(", 0) == 0 && s.back() == ')') return log_term(strip(s.substr(4, s.size() - 5)));
  if (s.size() > 2 && s.substr(s.size() - 2) == "^2") return square_term(strip(s.substr(0, s.size() - 2)));
  auto star = s.find('*');
  if (star != std::string::npos)
    return product_term(strip(s.substr(0, star)), strip(s.substr(star + 1)));
  return main_term(s);
}

std::vector<Term> parse_terms(const std::vector<std::string>& texts) {
  std::vector<Term> out;
  for (const auto& t : texts) out.push_back(parse_term(t));
  return out;
}

std::vector<Term> climate_preset(const std::string& name) {
  if (name == "temperature")
    return {log_term("Elevation"), main_term("Cool"), main_term("ClimateType")};
  if (name == "log_rh")
    return {log_term("Temperature"), square_term("logTemperature"), log_term("Elevation"),
            main_term("ClimateType")};
  if (name == "log_rain")
    return {log_term("Temperature"), square_term("logTemperature"), main_term("Season"),
            main_term("ClimateType"), product_term("Season", "ClimateType")};
  if (name == "none") return {};
  throw ValidationError("unknown climate covariate preset '" + name + "'");
}

}  // namespace fusemap::formula

namespace fusemap::climate {

double kappa_from_range(double range_km) {
  if (!(range_km > 0.0)) throw ValidationError("range must be positive");
  return std::sqrt(8.0) / range_km;  // nu = 1
}

double range_from_kappa(double kappa) {
  if (!(kappa > 0.0)) throw ValidationError("kappa must be positive");
  return std::sqrt(8.0) / kappa;
}

double MaternParams::kappa() const { return kappa_from_range(range_km); }

double matern_cov(double d, const MaternParams& p) {
  if (d < 0.0) throw ValidationError("matern_cov: negative distance");
  if (!(p.sigma2 > 0.0) || !(p.range_km > 0.0)) throw ValidationError("matern_cov: invalid parameters");
  const double x = p.kappa() * d;
  if (x < 1e-8) return p.sigma2;  // x K_1(x) -> 1
  return p.sigma2 * x * std::cyl_bessel_k(1.0, x);
}

std::vector<std::pair<double, double>> Lattice::node_coords() const {
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<size_t>(nx) * ny);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) out.emplace_back(x0 + ix * h, y0 + iy * h);
  return out;
}

SpMat grid_spde_precision(const Lattice& lat, const MaternParams& p) {
  if (lat.nx < 3 || lat.ny < 3) throw ValidationError("grid_spde_precision: lattice must be at least 3x3");
  if (!(lat.h > 0.0)) throw ValidationError("grid_spde_precision: spacing must be positive");
  const double kappa = p.kappa();
  const double h2 = lat.h * lat.h;
  const int n = lat.n_nodes();
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(n) * 5);
  auto idx = [&](int ix, int iy) { return iy * lat.nx + ix; };
  for (int iy = 0; iy < lat.ny; ++iy) {
    for (int ix = 0; ix < lat.nx; ++ix) {
      int deg = 0;
      const int i = idx(ix, iy);
      const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        const int jx = ix + dx[k], jy = iy + dy[k];
        if (jx < 0 || jx >= lat.nx || jy < 0 || jy >= lat.ny) continue;
        ++deg;
        trips.emplace_back(i, idx(jx, jy), -1.0 / h2);
      }
      trips.emplace_back(i, i, kappa * kappa + deg / h2);
    }
  }
  SpMat k_op(n, n);
  k_op.setFromTriplets(trips.begin(), trips.end());
  // white-noise discretization gives Q = tau^2 h^2 K^2 with the Matern-1
  // variance identity sigma2 = 1 / (4 pi kappa^2 tau^2)
  const double scale = h2 / (4.0 * M_PI * kappa * kappa * p.sigma2);
  return SpMat((k_op * k_op) * scale);
}

Eigen::MatrixXd st_joint_covariance(const StFieldSpec& spec, int dense_limit) {
  const int n = static_cast<int>(spec.node_locations.size());
  if (n == 0) throw ValidationError("st_joint_covariance: empty node set");
  if (!(std::abs(spec.ar) < 1.0)) throw ValidationError("st_joint_covariance: |phi| must be < 1");
  if (n * spec.T > dense_limit)
    throw NumericalError("st_joint_covariance: nodes x T exceeds the dense limit; use grid_spde_precision");

  Eigen::MatrixXd sigma(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double dx = spec.node_locations[i].first - spec.node_locations[j].first;
      const double dy = spec.node_locations[i].second - spec.node_locations[j].second;
      sigma(i, j) = sigma(j, i) = matern_cov(std::sqrt(dx * dx + dy * dy), spec.matern);
    }
  }
  const double stat = 1.0 / (1.0 - spec.ar * spec.ar);
  Eigen::MatrixXd joint(n * spec.T, n * spec.T);
  for (int t = 0; t < spec.T; ++t)
    for (int u = 0; u < spec.T; ++u)
      joint.block(t * n, u * n, n, n) = std::pow(spec.ar, std::abs(t - u)) * stat * sigma;
  return joint;
}

ProjectionMatrix projection_nearest(const std::vector<std::pair<double, double>>& nodes,
                                    const std::vector<std::pair<double, double>>& targets) {
  if (targets.empty()) throw ValidationError("projection: empty targets");
  if (nodes.empty()) throw ValidationError("projection: empty node set");
  ProjectionMatrix out;
  out.fallback.assign(targets.size(), false);
  std::vector<Triplet> trips;
  for (size_t r = 0; r < targets.size(); ++r) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < nodes.size(); ++j) {
      const double dx = targets[r].first - nodes[j].first;
      const double dy = targets[r].second - nodes[j].second;
      const double d = dx * dx + dy * dy;
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    trips.emplace_back(static_cast<int>(r), best, 1.0);
  }
  out.B = SpMat(static_cast<int>(targets.size()), static_cast<int>(nodes.size()));
  out.B.setFromTriplets(trips.begin(), trips.end());
  return out;
}

ProjectionMatrix projection_bilinear(const Lattice& lat,
                                     const std::vector<std::pair<double, double>>& targets) {
  if (targets.empty()) throw ValidationError("projection: empty targets");
  ProjectionMatrix out;
  out.fallback.assign(targets.size(), false);
  std::vector<Triplet> trips;
  auto idx = [&](int ix, int iy) { return iy * lat.nx + ix; };
  for (size_t r = 0; r < targets.size(); ++r) {
    const double gx = (targets[r].first - lat.x0) / lat.h;
    const double gy = (targets[r].second - lat.y0) / lat.h;
    if (gx < 0.0 || gx > lat.nx - 1 || gy < 0.0 || gy > lat.ny - 1) {
      const int ix = std::clamp(static_cast<int>(std::lround(gx)), 0, lat.nx - 1);
      const int iy = std::clamp(static_cast<int>(std::lround(gy)), 0, lat.ny - 1);
      trips.emplace_back(static_cast<int>(r), idx(ix, iy), 1.0);
      out.fallback[r] = true;
      continue;
    }
    int ix = std::min(static_cast<int>(gx), lat.nx - 2);
    int iy = std::min(static_cast<int>(gy), lat.ny - 2);
    const double fx = gx - ix, fy = gy - iy;
    const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy), w01 = (1 - fx) * fy, w11 = fx * fy;
    if (w00 > 0) trips.emplace_back(static_cast<int>(r), idx(ix, iy), w00);
    if (w10 > 0) trips.emplace_back(static_cast<int>(r), idx(ix + 1, iy), w10);
    if (w01 > 0) trips.emplace_back(static_cast<int>(r), idx(ix, iy + 1), w01);
    if (w11 > 0) trips.emplace_back(static_cast<int>(r), idx(ix + 1, iy + 1), w11);
  }
  out.B = SpMat(static_cast<int>(targets.size()), lat.n_nodes());
  out.B.setFromTriplets(trips.begin(), trips.end());
  return out;
}

ProjectionMatrix projection(const std::vector<std::pair<double, double>>& nodes,
                            const std::vector<std::pair<double, double>>& targets) {
  return projection_nearest(nodes, targets);
}

std::vector<PointObs> parse_point_obs(const csvio::Table& t, const std::string& id_col) {
  const int c_id = t.col_index_required(id_col);
  const int c_x = t.col_index_required("lon_km");
  const int c_y = t.col_index_required("lat_km");
  const int c_t = t.col_index_required("time_index");
  const int c_v = t.col_index_required("value");
  std::vector<int> extra;
  for (size_t c = 0; c < t.columns.size(); ++c)
    if (static_cast<int>(c) != c_id && static_cast<int>(c) != c_x && static_cast<int>(c) != c_y &&
        static_cast<int>(c) != c_t && static_cast<int>(c) != c_v)
      extra.push_back(static_cast<int>(c));

  std::vector<PointObs> out;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string ctx = "row " + std::to_string(r + 2);
    PointObs o;
    o.id = row[c_id];
    o.x = csvio::to_double(row[c_x], ctx);
    o.y = csvio::to_double(row[c_y], ctx);
    o.t = static_cast<int>(csvio::to_long(row[c_t], ctx));
    o.value = csvio::to_double(row[c_v], ctx);
    for (int c : extra) o.covariates[t.columns[c]] = csvio::to_double(row[c], ctx);
    out.push_back(std::move(o));
  }
  return out;
}

Stage1Data read_stage1_data(const std::string& stations_csv,
                            const std::optional<std::string>& gridded_csv) {
  Stage1Data d;
  d.stations = parse_point_obs(csvio::read_csv(stations_csv), "station_id");
  if (gridded_csv) d.gridded = parse_point_obs(csvio::read_csv(*gridded_csv), "cell_id");
  for (const auto& o : d.stations) d.T = std::max(d.T, o.t);
  for (const auto& o : d.gridded) d.T = std::max(d.T, o.t);
  return d;
}

namespace {

std::vector<std::pair<double, double>> unique_coords(const Stage1Data& data) {
  std::vector<std::pair<double, double>> nodes;
  auto add = [&](double x, double y) {
    for (const auto& n : nodes)
      if (n.first == x && n.second == y) return;
    nodes.emplace_back(x, y);
  };
  for (const auto& o : data.stations) add(o.x, o.y);
  for (const auto& o : data.gridded) add(o.x, o.y);
  return nodes;
}

double empirical_sd(const std::vector<PointObs>& obs) {
  if (obs.size() < 2) return 1.0;
  double m = 0.0;
  for (const auto& o : obs) m += o.value;
  m /= obs.size();
  double v = 0.0;
  for (const auto& o : obs) v += (o.value - m) * (o.value - m);
  return std::sqrt(std::max(v / (obs.size() - 1), 1e-12));
}

double max_pair_distance(const std::vector<std::pair<double, double>>& pts) {
  double d2 = 0.0;
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j) {
      const double dx = pts[i].first - pts[j].first, dy = pts[i].second - pts[j].second;
      d2 = std::max(d2, dx * dx + dy * dy);
    }
  return std::sqrt(d2);
}

void check_time_coverage(const Stage1Data& data) {
  std::set<int> seen;
  for (const auto& o : data.stations) seen.insert(o.t);
  for (const auto& o : data.gridded) seen.insert(o.t);
  if (seen.empty()) throw ValidationError("stage1: no observations");
  if (*seen.begin() < 1) throw ValidationError("stage1: time indices must start at 1");
  for (int t = 1; t <= data.T; ++t)
    if (!seen.count(t)) throw ValidationError("stage1: time index gap at t=" + std::to_string(t));
}

SpMat dense_to_sparse(const Eigen::MatrixXd& m, double drop_tol = 0.0) {
  std::vector<Triplet> trips;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (std::abs(m(i, j)) > drop_tol) trips.emplace_back(static_cast<int>(i), static_cast<int>(j), m(i, j));
  SpMat out(m.rows(), m.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

}  // namespace

Stage1Model assemble_stage1(const Stage1Data& data, const Stage1Config& config, double alpha1) {
  if (data.stations.empty()) throw ValidationError("assemble_stage1: no station records");
  const bool fusion = config.family == Stage1Family::Fusion;
  if (fusion && data.gridded.empty())
    throw ValidationError("assemble_stage1: fusion family requires gridded records");
  check_time_coverage(data);

  Stage1Model out;
  Stage1Layout& lay = out.layout;
  lay.T = data.T;
  lay.alpha1 = alpha1;
  lay.lattice = config.lattice;
  lay.nodes = config.lattice ? config.lattice->node_coords() : unique_coords(data);
  lay.n_nodes = static_cast<int>(lay.nodes.size());
  for (const auto& t : config.covariates) lay.covariate_names.push_back(t.name());

  const int p = static_cast<int>(config.covariates.size());
  const int field = lay.n_nodes * lay.T;
  if (!config.lattice && field > config.dense_limit)
    throw NumericalError("assemble_stage1: dense field of size " + std::to_string(field) +
                         " exceeds dense_limit; supply a lattice");
  lay.beta0 = 0;
  for (int k = 0; k < p; ++k) lay.beta.push_back(1 + k);
  lay.xi_offset = 1 + p;
  int n_latent = 1 + p + field;
  if (fusion) {
    lay.alpha0_offset = n_latent;
    n_latent += field;
  }

  lgm::LatentGaussianModel& m = out.model;
  m.n_latent = n_latent;

  // hyperparameter anchors from data
  const double sd_w1 = empirical_sd(data.stations);
  const double sd_w2 = fusion ? empirical_sd(data.gridded) : 1.0;
  double range0 = max_pair_distance(lay.nodes) / 3.0;
  if (!(range0 > 0.0)) range0 = 1.0;

  m.hypers.push_back(lgm::hyper_log_range_pc("range1", range0, 0.5, std::log(range0)));
  m.hypers.push_back(lgm::hyper_log_variance_pc_sd("sigma2_1", sd_w1, 0.5, std::log(sd_w1 * sd_w1)));
  m.hypers.push_back(lgm::hyper_ar_correlation("phi1", 0.0, 0.15, 0.0));
  m.hypers.push_back(
      lgm::hyper_log_variance_pc_sd("noise1", 1.0, 0.5, std::log(std::max(0.1 * sd_w1 * sd_w1, 1e-3))));
  const int slot_noise1 = 3;
  int slot_noise2 = -1;
  if (fusion) {
    m.hypers.push_back(lgm::hyper_log_range_pc("range2", range0, 0.5, std::log(range0)));
    m.hypers.push_back(lgm::hyper_log_variance_pc_sd("sigma2_2", sd_w2, 0.5, std::log(sd_w2 * sd_w2)));
    m.hypers.push_back(lgm::hyper_ar_correlation("phi2", 0.0, 0.15, 0.0));
    m.hypers.push_back(
        lgm::hyper_log_variance_pc_sd("noise2", 1.0, 0.5, std::log(std::max(0.1 * sd_w2 * sd_w2, 1e-3))));
    slot_noise2 = 7;
  }

  // prior precision builder
  const auto nodes = lay.nodes;
  const auto lattice = config.lattice;
  const int t_len = lay.T;
  auto spatial_precision = [nodes, lattice](double sigma2, double range) {
    MaternParams mp{sigma2, range};
    if (lattice) return grid_spde_precision(*lattice, mp);
    const int n = static_cast<int>(nodes.size());
    Eigen::MatrixXd sigma(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) {
        const double dx = nodes[i].first - nodes[j].first;
        const double dy = nodes[i].second - nodes[j].second;
        sigma(i, j) = sigma(j, i) = matern_cov(std::sqrt(dx * dx + dy * dy), mp);
      }
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
      throw NumericalError("stage1 prior: Matern covariance not positive definite");
    Eigen::MatrixXd q = llt.solve(Eigen::MatrixXd::Identity(n, n));
    return dense_to_sparse(q);
  };

  m.prior = [p, fusion, t_len, spatial_precision](const Eigen::VectorXd& theta) {
    std::vector<gmrf::PrecisionSpec> blocks;
    gmrf::PrecisionSpec fixed;
    std::vector<Triplet> ft;
    ft.emplace_back(0, 0, 1e-8);  // diffuse intercept
    for (int k = 0; k < p; ++k) ft.emplace_back(1 + k, 1 + k, 1e-3);
    fixed.Q = SpMat(1 + p, 1 + p);
    fixed.Q.setFromTriplets(ft.begin(), ft.end());
    blocks.push_back(std::move(fixed));

    auto field_block = [&](double range, double sigma2, double phi) {
      SpMat qs = spatial_precision(sigma2, range);
      gmrf::PrecisionSpec b;
      b.Q = gmrf::kronecker(gmrf::ar1_precision(t_len, phi).Q, SpMat((1.0 - phi * phi) * qs));
      return b;
    };
    blocks.push_back(field_block(std::exp(theta[0]), std::exp(theta[1]), std::tanh(0.5 * theta[2])));
    if (fusion)
      blocks.push_back(field_block(std::exp(theta[4]), std::exp(theta[5]), std::tanh(0.5 * theta[6])));
    return gmrf::block_diag(blocks);
  };

  // observation stack: stations then gridded
  std::vector<std::pair<double, double>> st_coords, gr_coords;
  for (const auto& o : data.stations) st_coords.emplace_back(o.x, o.y);
  for (const auto& o : data.gridded) gr_coords.emplace_back(o.x, o.y);
  ProjectionMatrix b1 = lattice ? projection_bilinear(*lattice, st_coords)
                                : projection_nearest(lay.nodes, st_coords);
  ProjectionMatrix b2;
  if (fusion)
    b2 = lattice ? projection_bilinear(*lattice, gr_coords) : projection_nearest(lay.nodes, gr_coords);

  const int n_obs = static_cast<int>(data.stations.size() + data.gridded.size());
  m.y.resize(n_obs);
  m.log_offset = Eigen::VectorXd::Zero(n_obs);
  m.lik.assign(n_obs, lgm::Likelihood::Gaussian);
  m.var_slot.resize(n_obs);
  m.fixed_var = Eigen::VectorXd::Ones(n_obs);

  std::vector<Triplet> dt;
  auto term_value = [&](const PointObs& o, const formula::Term& term) {
    return formula::evaluate(term, [&](const std::string& c) {
      auto it = o.covariates.find(c);
      if (it == o.covariates.end())
        throw ValidationError("stage1: covariate column '" + c + "' missing for record '" + o.id + "'");
      return it->second;
    });
  };

  // both latent fields are co-located on the same node set, so the gridded
  // projection serves the xi and alpha0 blocks alike
  Eigen::SparseMatrix<double, Eigen::RowMajor> b1r(b1.B), b2r;
  if (fusion) b2r = b2.B;

  int row = 0;
  for (size_t i = 0; i < data.stations.size(); ++i, ++row) {
    const PointObs& o = data.stations[i];
    m.y[row] = o.value;
    m.var_slot[row] = slot_noise1;
    dt.emplace_back(row, lay.beta0, 1.0);
    for (int k = 0; k < p; ++k) dt.emplace_back(row, lay.beta[k], term_value(o, config.covariates[k]));
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(b1r, static_cast<int>(i)); it; ++it)
      dt.emplace_back(row, lay.xi_offset + (o.t - 1) * lay.n_nodes + static_cast<int>(it.col()), it.value());
  }
  for (size_t j = 0; j < data.gridded.size(); ++j, ++row) {
    const PointObs& o = data.gridded[j];
    m.y[row] = o.value;
    m.var_slot[row] = slot_noise2;
    dt.emplace_back(row, lay.beta0, alpha1);
    for (int k = 0; k < p; ++k)
      dt.emplace_back(row, lay.beta[k], alpha1 * term_value(o, config.covariates[k]));
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(b2r, static_cast<int>(j)); it; ++it) {
      dt.emplace_back(row, lay.alpha0_offset + (o.t - 1) * lay.n_nodes + static_cast<int>(it.col()), it.value());
      dt.emplace_back(row, lay.xi_offset + (o.t - 1) * lay.n_nodes + static_cast<int>(it.col()),
                      alpha1 * it.value());
    }
  }
  m.design = Eigen::SparseMatrix<double, Eigen::RowMajor>(n_obs, n_latent);
  m.design.setFromTriplets(dt.begin(), dt.end());

  m.latent_names.assign(n_latent, "");
  m.latent_names[0] = "beta0";
  for (int k = 0; k < p; ++k) m.latent_names[1 + k] = "beta_" + lay.covariate_names[k];
  return out;
}

Eigen::VectorXd bma_weights(const std::vector<double>& log_mlik,
                            const std::vector<double>& log_prior) {
  if (log_mlik.empty() || log_mlik.size() != log_prior.size())
    throw ValidationError("bma_weights: misaligned inputs");
  std::vector<double> lj(log_mlik.size());
  for (size_t i = 0; i < lj.size(); ++i) lj[i] = log_mlik[i] + log_prior[i];
  const double lse = log_sum_exp(lj);
  Eigen::VectorXd w(static_cast<Eigen::Index>(lj.size()));
  for (size_t i = 0; i < lj.size(); ++i) w[static_cast<Eigen::Index>(i)] = std::exp(lj[i] - lse);
  w /= w.sum();
  return w;
}

Stage1Fit fit_stage1_bma(const Stage1Data& data, const Stage1Config& config, int jobs) {
  Stage1Fit out;
  if (config.family == Stage1Family::StationsOnly) {
    Stage1Model sm = assemble_stage1(data, config);
    out.fits.push_back(lgm::fit_lgm(sm.model, config.strategy));
    out.layouts.push_back(sm.layout);
    out.alphas.push_back(1.0);
    out.weights = Eigen::VectorXd::Ones(1);
    return out;
  }

  if (config.alpha1_grid.empty()) throw ValidationError("fit_stage1_bma: empty alpha1 grid");
  const int L = static_cast<int>(config.alpha1_grid.size());
  std::vector<std::optional<lgm::LgmFit>> fits(L);
  std::vector<std::optional<Stage1Layout>> layouts(L);
  std::vector<std::string> errors(L);

  auto run_one = [&](int l) {
    try {
      Stage1Model sm = assemble_stage1(data, config, config.alpha1_grid[l]);
      fits[l] = lgm::fit_lgm(sm.model, config.strategy);
      layouts[l] = sm.layout;
    } catch (const Error& e) {
      errors[l] = e.what();
    }
  };

  const int workers = std::max(1, std::min(jobs, L));
  if (workers == 1) {
    for (int l = 0; l < L; ++l) run_one(l);
  } else {
    std::vector<std::future<void>> futures;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w)
      futures.push_back(std::async(std::launch::async, [&]() {
        for (int l = next.fetch_add(1); l < L; l = next.fetch_add(1)) run_one(l);
      }));
    for (auto& f : futures) f.get();
  }

  std::vector<double> lm, lp;
  for (int l = 0; l < L; ++l) {
    if (!fits[l]) {
      out.warnings.push_back("alpha1=" + format_double(config.alpha1_grid[l]) +
                             " fit dropped: " + errors[l]);
      continue;
    }
    out.fits.push_back(std::move(*fits[l]));
    out.layouts.push_back(std::move(*layouts[l]));
    out.alphas.push_back(config.alpha1_grid[l]);
    lm.push_back(out.fits.back().log_mlik);
    lp.push_back(config.alpha1_log_prior.empty() ? 0.0 : config.alpha1_log_prior[l]);
  }
  if (out.fits.empty()) throw NumericalError("fit_stage1_bma: every conditional fit failed");
  out.weights = bma_weights(lm, lp);
  return out;
}

Eigen::MatrixXd predict_points(const lgm::LgmFit& fit, const Stage1Layout& layout,
                               const std::vector<PredictionTarget>& targets,
                               const std::vector<formula::Term>& covariate_terms,
                               PredictMode mode, std::uint64_t seed) {
  if (targets.empty()) throw ValidationError("predict_points: empty targets");
  Eigen::VectorXd x =
      mode == PredictMode::Mean ? fit.latent_mean() : lgm::sample_latent(fit, 1, seed)[0];

  std::vector<std::pair<double, double>> coords;
  for (const auto& t : targets) coords.emplace_back(t.x, t.y);
  ProjectionMatrix proj = layout.lattice ? projection_bilinear(*layout.lattice, coords)
                                         : projection_nearest(layout.nodes, coords);

  Eigen::MatrixXd out(static_cast<Eigen::Index>(targets.size()), layout.T);
  for (size_t i = 0; i < targets.size(); ++i) {
    double fixed = x[layout.beta0];
    for (size_t k = 0; k < covariate_terms.size(); ++k) {
      const double z = formula::evaluate(covariate_terms[k], [&](const std::string& c) {
        auto it = targets[i].covariates.find(c);
        if (it == targets[i].covariates.end())
          throw ValidationError("predict_points: covariate '" + c + "' missing at target '" +
                                targets[i].id + "'");
        return it->second;
      });
      fixed += z * x[layout.beta[k]];
    }
    for (int t = 0; t < layout.T; ++t) {
      double field = 0.0;
      for (int node = 0; node < layout.n_nodes; ++node) {
        const double w = proj.B.coeff(static_cast<int>(i), node);
        if (w != 0.0) field += w * x[layout.xi_offset + t * layout.n_nodes + node];
      }
      out(static_cast<Eigen::Index>(i), t) = fixed + field;
    }
  }
  return out;
}

}  // namespace fusemap::climate
