#include "fusemap/lgm.hpp"

#include <algorithm>
#include <cmath>

namespace fusemap::lgm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double chol_log_det(const Eigen::SimplicialLLT<SpMat>& llt) {
  double ld = 0.0;
  const auto& l = llt.matrixL();
  for (int i = 0; i < l.rows(); ++i) ld += std::log(l.coeff(i, i));
  return 2.0 * ld;
}

struct RowState {
  Eigen::VectorXd w;       // negative second derivative of loglik wrt eta
  Eigen::VectorXd r;       // first derivative of loglik wrt eta
  double loglik = 0.0;
  bool finite = true;
};

RowState likelihood_state(const LatentGaussianModel& model, const Eigen::VectorXd& eta,
                          const Eigen::VectorXd& theta) {
  const int n = model.n_obs();
  RowState st;
  st.w.resize(n);
  st.r.resize(n);
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(eta[i])) {
      st.finite = false;
      return st;
    }
    if (model.lik[i] == Likelihood::Gaussian) {
      const double var = model.var_slot[i] >= 0
                             ? model.hypers[model.var_slot[i]].to_natural(theta[model.var_slot[i]])
                             : model.fixed_var[i];
      if (!(var > 0.0)) throw NumericalError("laplace_at: non-positive observation variance");
      const double res = model.y[i] - eta[i];
      st.w[i] = 1.0 / var;
      st.r[i] = res / var;
      st.loglik += -0.5 * (kLog2Pi + std::log(var)) - 0.5 * res * res / var;
    } else {
      const double log_mu = eta[i] + model.log_offset[i];
      if (log_mu > 500.0) {
        st.finite = false;
        return st;
      }
      const double mu = std::exp(log_mu);
      st.w[i] = mu;
      st.r[i] = model.y[i] - mu;
      st.loglik += model.y[i] * log_mu - mu - std::lgamma(model.y[i] + 1.0);
    }
  }
  if (!std::isfinite(st.loglik)) st.finite = false;
  return st;
}

}  // namespace

Eigen::VectorXd LatentGaussianModel::theta_init() const {
  Eigen::VectorXd t(n_hyper());
  for (int j = 0; j < n_hyper(); ++j) t[j] = hypers[j].init;
  return t;
}

double LatentGaussianModel::log_prior_hyper(const Eigen::VectorXd& theta) const {
  double lp = 0.0;
  for (int j = 0; j < n_hyper(); ++j) lp += hypers[j].log_prior(theta[j]);
  return lp;
}

GaussianApprox laplace_at(const LatentGaussianModel& model, const Eigen::VectorXd& theta,
                          const LaplaceOptions& opts) {
  if (theta.size() != model.n_hyper()) throw ValidationError("laplace_at: theta dimension mismatch");
  const int n = model.n_latent;
  gmrf::PrecisionSpec prior = model.prior(theta);
  if (prior.dim() != n) throw NumericalError("laplace_at: prior dimension mismatch");
  SpMat q_s = gmrf::sampling_precision(prior);

  Eigen::VectorXd x = opts.x_init.value_or(Eigen::VectorXd::Zero(n));
  auto log_joint = [&](const Eigen::VectorXd& v, const RowState& st) {
    return st.loglik - 0.5 * v.dot(q_s * v);
  };

  GaussianApprox out;
  out.chol = std::make_shared<Eigen::SimplicialLLT<SpMat>>();
  bool pattern_ready = false;
  RowState st = likelihood_state(model, model.design * x, theta);
  if (!st.finite) throw NumericalError("laplace_at: non-finite likelihood at initial point");
  double lj = log_joint(x, st);

  SpMat q_po;
  double inflation = 0.0;
  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    Eigen::VectorXd grad = model.design.transpose() * st.r - q_s * x;
    q_po = q_s + SpMat(model.design.transpose() * st.w.asDiagonal() * model.design);
    if (inflation > 0.0) {
      SpMat eye(n, n);
      eye.setIdentity();
      q_po = q_po + SpMat(inflation * eye);
    }
    if (!pattern_ready) {
      out.chol->analyzePattern(q_po);
      pattern_ready = true;
    }
    out.chol->factorize(q_po);
    if (out.chol->info() != Eigen::Success) {
      // indefinite or numerically singular Hessian: inflate and retry
      double max_diag = q_po.diagonal().cwiseAbs().maxCoeff();
      inflation = inflation == 0.0 ? 1e-8 * max_diag : 2.0 * inflation;
      if (inflation > 1e2 * max_diag) throw NumericalError("laplace_at: Hessian factorization failed");
      --iter;
      continue;
    }

    // scaled gradient norm
    double gnorm = 0.0;
    Eigen::VectorXd diag = q_po.diagonal();
    for (int i = 0; i < n; ++i) gnorm = std::max(gnorm, std::abs(grad[i]) / std::sqrt(std::max(diag[i], 1e-300)));
    out.iterations = iter;
    out.grad_norm = gnorm;
    if (gnorm < opts.grad_tol) {
      out.converged = true;
      break;
    }

    Eigen::VectorXd delta = out.chol->solve(grad);
    double step = 1.0;
    for (int h = 0; h < 40; ++h) {
      Eigen::VectorXd x_new = x + step * delta;
      RowState st_new = likelihood_state(model, model.design * x_new, theta);
      if (st_new.finite) {
        const double lj_new = log_joint(x_new, st_new);
        if (lj_new >= lj - 1e-12 * std::abs(lj)) {
          x = std::move(x_new);
          st = std::move(st_new);
          lj = lj_new;
          break;
        }
      }
      step *= 0.5;
      if (h == 39) throw NumericalError("laplace_at: step halving failed to make progress");
    }
  }
  if (!out.converged)
    throw NumericalError("laplace_at: Newton did not converge in " +
                         std::to_string(opts.max_iterations) + " iterations");

  out.mode_unc = x;
  out.Qpost = q_po;
  out.log_det_post = chol_log_det(*out.chol);
  out.A = prior.constraints;
  if (out.A.rows() > 0) {
    out.QinvAt = out.chol->solve(out.A.transpose());
    out.S_post = out.A * out.QinvAt;
    out.S_llt.compute(out.S_post);
    if (out.S_llt.info() != Eigen::Success)
      throw NumericalError("laplace_at: constraint system A Q^-1 A^T not positive definite");
    out.mode = x - out.QinvAt * out.S_llt.solve(out.A * x);
  } else {
    out.mode = x;
  }

  // conditional log marginal likelihood, Laplace identity with constraint
  // corrections; exact for all-Gaussian models
  Eigen::SimplicialLLT<SpMat> prior_llt(q_s);
  if (prior_llt.info() != Eigen::Success)
    throw NumericalError("laplace_at: prior precision not positive definite on sampling parameterization");
  RowState st_c = likelihood_state(model, model.design * out.mode, theta);
  if (!st_c.finite) throw NumericalError("laplace_at: non-finite likelihood at constrained mode");
  const double lprior = 0.5 * chol_log_det(prior_llt) - 0.5 * out.mode.dot(q_s * out.mode);
  Eigen::VectorXd diff = out.mode - out.mode_unc;
  const double lpost = 0.5 * out.log_det_post - 0.5 * diff.dot(q_po * diff);
  double mlik = st_c.loglik + lprior - lpost;
  if (out.A.rows() > 0) {
    Eigen::MatrixXd qs_inv_at = prior_llt.solve(out.A.transpose());
    Eigen::MatrixXd s_pr = out.A * qs_inv_at;
    Eigen::LLT<Eigen::MatrixXd> s_pr_llt(s_pr);
    if (s_pr_llt.info() != Eigen::Success)
      throw NumericalError("laplace_at: prior constraint covariance not positive definite");
    double log_det_spr = 0.0, log_det_spo = 0.0;
    for (int i = 0; i < s_pr.rows(); ++i) {
      log_det_spr += 2.0 * std::log(s_pr_llt.matrixL()(i, i));
      log_det_spo += 2.0 * std::log(out.S_llt.matrixL()(i, i));
    }
    Eigen::VectorXd ax = out.A * out.mode_unc;
    mlik += 0.5 * log_det_spr - 0.5 * log_det_spo - 0.5 * ax.dot(out.S_llt.solve(ax));
  }
  out.log_mlik = mlik;
  return out;
}

double log_marginal_likelihood(const LatentGaussianModel& /*model*/, const Eigen::VectorXd& /*theta*/,
                               const GaussianApprox& approx) {
  if (!approx.converged) throw NumericalError("log_marginal_likelihood: approximation did not converge");
  return approx.log_mlik;
}

Eigen::VectorXd GaussianApprox::sample(Rng& rng) const {
  Eigen::VectorXd z = standard_normal(static_cast<int>(mode.size()), rng);
  Eigen::VectorXd x = mode_unc + chol->permutationPinv() * chol->matrixU().solve(z);
  if (A.rows() > 0) x -= QinvAt * S_llt.solve(A * x);
  return x;
}

Eigen::VectorXd GaussianApprox::marginal_sd(const std::vector<int>& idx) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  const int n = static_cast<int>(mode.size());
  for (size_t k = 0; k < idx.size(); ++k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[idx[k]] = 1.0;
    Eigen::VectorXd col = chol->solve(e);
    double v = col[idx[k]];
    if (A.rows() > 0) {
      Eigen::VectorXd qa_row = QinvAt.row(idx[k]);
      v -= qa_row.dot(S_llt.solve(qa_row));
    }
    out[static_cast<Eigen::Index>(k)] = std::sqrt(std::max(v, 0.0));
  }
  return out;
}

Eigen::VectorXd GaussianApprox::marginal_sd_all() const {
  std::vector<int> idx(mode.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return marginal_sd(idx);
}

namespace {

double hyper_objective(const LatentGaussianModel& model, const Eigen::VectorXd& theta,
                       GaussianApprox* approx_out = nullptr) {
  GaussianApprox ap = laplace_at(model, theta);
  double obj = ap.log_mlik + model.log_prior_hyper(theta);
  if (approx_out) *approx_out = std::move(ap);
  return obj;
}

}  // namespace

OptimizeResult optimize_hyper(const LatentGaussianModel& model, const Eigen::VectorXd& theta0,
                              int max_evaluations, double simplex_tol) {
  const int d = model.n_hyper();
  OptimizeResult res;
  if (d == 0) {
    res.theta = Eigen::VectorXd(0);
    res.objective = hyper_objective(model, res.theta);
    res.converged = true;
    res.evaluations = 1;
    return res;
  }

  auto safe_obj = [&](const Eigen::VectorXd& t) {
    ++res.evaluations;
    try {
      return hyper_objective(model, t);
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  // Nelder-Mead on the transform scale (maximization)
  std::vector<Eigen::VectorXd> verts(d + 1, theta0);
  std::vector<double> f(d + 1);
  for (int j = 0; j < d; ++j) verts[j + 1][j] += 0.7;
  for (int i = 0; i <= d; ++i) f[i] = safe_obj(verts[i]);

  auto order = [&]() {
    std::vector<int> idx(d + 1);
    for (int i = 0; i <= d; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return f[a] > f[b]; });
    std::vector<Eigen::VectorXd> v2(d + 1);
    std::vector<double> f2(d + 1);
    for (int i = 0; i <= d; ++i) {
      v2[i] = verts[idx[i]];
      f2[i] = f[idx[i]];
    }
    verts = std::move(v2);
    f = std::move(f2);
  };

  order();
  while (res.evaluations < max_evaluations) {
    double size = 0.0;
    for (int i = 1; i <= d; ++i) size = std::max(size, (verts[i] - verts[0]).cwiseAbs().maxCoeff());
    if (size < simplex_tol) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) centroid += verts[i];
    centroid /= d;

    Eigen::VectorXd xr = centroid + (centroid - verts[d]);
    double fr = safe_obj(xr);
    if (fr > f[0]) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - verts[d]);
      double fe = safe_obj(xe);
      if (fe > fr) {
        verts[d] = xe;
        f[d] = fe;
      } else {
        verts[d] = xr;
        f[d] = fr;
      }
    } else if (fr > f[d - 1]) {
      verts[d] = xr;
      f[d] = fr;
    } else {
      Eigen::VectorXd xc = centroid + 0.5 * (verts[d] - centroid);
      double fc = safe_obj(xc);
      if (fc > f[d]) {
        verts[d] = xc;
        f[d] = fc;
      } else {
        for (int i = 1; i <= d; ++i) {
          verts[i] = verts[0] + 0.5 * (verts[i] - verts[0]);
          f[i] = safe_obj(verts[i]);
        }
      }
    }
    order();
  }

  res.theta = verts[0];
  res.objective = f[0];
  if (!std::isfinite(res.objective))
    throw NumericalError("optimize_hyper: objective non-finite at every evaluated point");
  return res;
}

namespace {

// Diagonal curvature of the negative log joint, by central differences.
Eigen::VectorXd axis_curvature(const LatentGaussianModel& model, const Eigen::VectorXd& theta_hat,
                               double f_hat, double delta) {
  const int d = model.n_hyper();
  Eigen::VectorXd h(d);
  for (int j = 0; j < d; ++j) {
    Eigen::VectorXd tp = theta_hat, tm = theta_hat;
    tp[j] += delta;
    tm[j] -= delta;
    double fp, fm;
    try {
      fp = hyper_objective(model, tp);
      fm = hyper_objective(model, tm);
      h[j] = -(fp - 2.0 * f_hat + fm) / (delta * delta);
    } catch (const Error&) {
      h[j] = 1.0;
    }
    if (!(h[j] > 1e-8)) h[j] = 1e-8;
  }
  return h;
}

}  // namespace

LgmFit explore_hyper(const LatentGaussianModel& model, const Eigen::VectorXd& theta_hat,
                     const ExploreStrategy& strategy) {
  LgmFit fit;
  fit.theta_mode = theta_hat;
  const int d = model.n_hyper();

  ThetaPoint mode_point;
  mode_point.theta = theta_hat;
  mode_point.approx = laplace_at(model, theta_hat);
  mode_point.log_joint = mode_point.approx.log_mlik + model.log_prior_hyper(theta_hat);
  fit.points.push_back(std::move(mode_point));

  if (d == 0) {
    fit.points[0].weight = 1.0;
    fit.log_mlik = fit.points[0].approx.log_mlik;
    return fit;
  }

  const double f_hat = fit.points[0].log_joint;
  Eigen::VectorXd curv = axis_curvature(model, theta_hat, f_hat, 0.3);

  if (strategy.kind == ExploreStrategy::Kind::AxisGrid) {
    for (int j = 0; j < d; ++j) {
      const double scale = 1.0 / std::sqrt(curv[j]);
      for (int m = 1; m <= strategy.grid_points; ++m) {
        for (double sign : {-1.0, 1.0}) {
          Eigen::VectorXd t = theta_hat;
          t[j] += sign * m * strategy.step * scale;
          ThetaPoint p;
          p.theta = t;
          try {
            p.approx = laplace_at(model, t);
          } catch (const Error& e) {
            fit.warnings.push_back(std::string("grid point dropped: ") + e.what());
            continue;
          }
          p.log_joint = p.approx.log_mlik + model.log_prior_hyper(t);
          fit.points.push_back(std::move(p));
        }
      }
    }
  }

  double max_lj = -std::numeric_limits<double>::infinity();
  for (const auto& p : fit.points) max_lj = std::max(max_lj, p.log_joint);
  double total = 0.0;
  for (auto& p : fit.points) {
    p.weight = std::exp(p.log_joint - max_lj);
    total += p.weight;
  }
  for (auto& p : fit.points) p.weight /= total;

  // integrated marginal likelihood: Laplace in theta with diagonal Hessian
  double corr = 0.0;
  for (int j = 0; j < d; ++j) corr += 0.5 * (kLog2Pi - std::log(curv[j]));
  fit.log_mlik = f_hat + corr;
  return fit;
}

LgmFit fit_lgm(const LatentGaussianModel& model, const ExploreStrategy& strategy,
               std::optional<Eigen::VectorXd> theta0) {
  Eigen::VectorXd t0 = theta0.value_or(model.theta_init());
  OptimizeResult opt = optimize_hyper(model, t0);
  LgmFit fit = explore_hyper(model, opt.theta, strategy);
  fit.hyper_converged = opt.converged;
  return fit;
}

Eigen::VectorXd LgmFit::latent_mean() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(points[0].approx.mode.size());
  for (const auto& p : points) m += p.weight * p.approx.mode;
  return m;
}

Eigen::VectorXd LgmFit::latent_sd() const {
  const Eigen::Index n = points[0].approx.mode.size();
  Eigen::VectorXd m = latent_mean();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  for (const auto& p : points) {
    Eigen::VectorXd sd = p.approx.marginal_sd_all();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = p.approx.mode[i] - m[i];
      v[i] += p.weight * (sd[i] * sd[i] + d * d);
    }
  }
  return v.cwiseSqrt();
}

void LgmFit::mixture_moments(int idx, double& mean, double& sd) const {
  mean = 0.0;
  double second = 0.0;
  for (const auto& p : points) {
    const double m = p.approx.mode[idx];
    const double s = p.approx.marginal_sd({idx})[0];
    mean += p.weight * m;
    second += p.weight * (s * s + m * m);
  }
  sd = std::sqrt(std::max(second - mean * mean, 0.0));
}

namespace {

std::vector<std::pair<int, Eigen::VectorXd>> sample_latent_indexed(const LgmFit& fit, int n,
                                                                   std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w;
  for (const auto& p : fit.points) w.push_back(p.weight);
  std::discrete_distribution<int> pick(w.begin(), w.end());
  std::vector<std::pair<int, Eigen::VectorXd>> out;
  out.reserve(n);
  for (int s = 0; s < n; ++s) {
    int g = pick(rng);
    out.emplace_back(g, fit.points[g].approx.sample(rng));
  }
  return out;
}

}  // namespace

std::vector<Eigen::VectorXd> sample_latent(const LgmFit& fit, int n, std::uint64_t seed) {
  if (fit.points.empty()) throw ValidationError("sample_latent: empty fit");
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  for (auto& [g, x] : sample_latent_indexed(fit, n, seed)) out.push_back(std::move(x));
  return out;
}

double log_likelihood(const LatentGaussianModel& model, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& theta) {
  RowState st = likelihood_state(model, model.design * x, theta);
  if (!st.finite) throw NumericalError("log_likelihood: non-finite");
  return st.loglik;
}

Eigen::VectorXd pointwise_log_likelihood(const LatentGaussianModel& model, const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& theta) {
  Eigen::VectorXd eta = model.design * x;
  Eigen::VectorXd out(model.n_obs());
  for (int i = 0; i < model.n_obs(); ++i) {
    if (model.lik[i] == Likelihood::Gaussian) {
      const double var = model.var_slot[i] >= 0
                             ? model.hypers[model.var_slot[i]].to_natural(theta[model.var_slot[i]])
                             : model.fixed_var[i];
      const double res = model.y[i] - eta[i];
      out[i] = -0.5 * (kLog2Pi + std::log(var)) - 0.5 * res * res / var;
    } else {
      const double log_mu = eta[i] + model.log_offset[i];
      out[i] = model.y[i] * log_mu - std::exp(log_mu) - std::lgamma(model.y[i] + 1.0);
    }
  }
  return out;
}

PredictiveDiagnostics predictive_diagnostics(const LgmFit& fit, const LatentGaussianModel& model,
                                             int n_draws, std::uint64_t seed) {
  if (n_draws < 2) throw ValidationError("predictive_diagnostics: need at least 2 draws");
  auto draws = sample_latent_indexed(fit, n_draws, seed);
  const int n_obs = model.n_obs();
  Eigen::MatrixXd ll(n_draws, n_obs);
  for (int s = 0; s < n_draws; ++s)
    ll.row(s) = pointwise_log_likelihood(model, draws[s].second, fit.points[draws[s].first].theta);

  PredictiveDiagnostics diag;
  const double log_s = std::log(static_cast<double>(n_draws));
  for (int i = 0; i < n_obs; ++i) {
    Eigen::VectorXd col = ll.col(i);
    bool bad = false;
    for (int s = 0; s < n_draws; ++s)
      if (!std::isfinite(col[s])) bad = true;
    if (bad) {
      diag.zero_cpo_rows.push_back(i);
      continue;
    }
    const double mx = col.maxCoeff();
    double se = 0.0;
    for (int s = 0; s < n_draws; ++s) se += std::exp(col[s] - mx);
    const double lppd_i = mx + std::log(se) - log_s;

    const double mean = col.mean();
    double var = 0.0;
    for (int s = 0; s < n_draws; ++s) var += (col[s] - mean) * (col[s] - mean);
    var /= (n_draws - 1);

    // importance-weighted leave-one-out: CPO_i = 1 / mean_s (1 / p_i(x_s))
    const double mn = col.minCoeff();
    double inv = 0.0;
    for (int s = 0; s < n_draws; ++s) inv += std::exp(mn - col[s]);
    const double log_cpo = mn - (std::log(inv) - log_s);

    diag.lppd += lppd_i;
    diag.p_waic += var;
    diag.neg_sum_log_cpo -= log_cpo;
  }
  diag.waic = -2.0 * (diag.lppd - diag.p_waic);
  return diag;
}

double waic(const LgmFit& fit, const LatentGaussianModel& model, int n_draws, std::uint64_t seed) {
  return predictive_diagnostics(fit, model, n_draws, seed).waic;
}

double cpo_sum(const LgmFit& fit, const LatentGaussianModel& model, int n_draws, std::uint64_t seed) {
  return predictive_diagnostics(fit, model, n_draws, seed).neg_sum_log_cpo;
}

double mixture_quantile(const std::vector<double>& weights, const std::vector<double>& means,
                        const std::vector<double>& sds, double p, int grid_points) {
  if (weights.empty() || weights.size() != means.size() || weights.size() != sds.size())
    throw ValidationError("mixture_quantile: misaligned inputs");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  double max_sd = 0.0;
  for (size_t g = 0; g < means.size(); ++g) {
    max_sd = std::max(max_sd, sds[g]);
    lo = std::min(lo, means[g] - 6.0 * sds[g]);
    hi = std::max(hi, means[g] + 6.0 * sds[g]);
  }
  if (max_sd == 0.0) {
    // degenerate mixture: weighted empirical quantile of the point masses
    std::vector<std::pair<double, double>> pts;
    for (size_t g = 0; g < means.size(); ++g) pts.emplace_back(means[g], weights[g]);
    std::sort(pts.begin(), pts.end());
    double acc = 0.0;
    for (const auto& [m, w] : pts) {
      acc += w;
      if (acc >= p) return m;
    }
    return pts.back().first;
  }

  auto cdf = [&](double x) {
    double c = 0.0;
    for (size_t g = 0; g < means.size(); ++g)
      c += weights[g] * (sds[g] > 0.0 ? normal_cdf((x - means[g]) / sds[g])
                                      : (x >= means[g] ? 1.0 : 0.0));
    return c;
  };

  double prev_x = lo, prev_c = cdf(lo);
  for (int i = 1; i < grid_points; ++i) {
    const double x = lo + (hi - lo) * i / (grid_points - 1);
    const double c = cdf(x);
    if (c >= p) {
      if (c == prev_c) return x;
      return prev_x + (x - prev_x) * (p - prev_c) / (c - prev_c);
    }
    prev_x = x;
    prev_c = c;
  }
  return hi;
}

std::vector<SummaryRow> summarize_latent(const LgmFit& fit, const std::vector<int>& idx,
                                         const std::vector<std::string>& names) {
  std::vector<SummaryRow> rows;
  const size_t n_pts = fit.points.size();
  std::vector<Eigen::VectorXd> sds(n_pts);
  for (size_t g = 0; g < n_pts; ++g) sds[g] = fit.points[g].approx.marginal_sd(idx);

  for (size_t k = 0; k < idx.size(); ++k) {
    std::vector<double> w(n_pts), m(n_pts), s(n_pts);
    for (size_t g = 0; g < n_pts; ++g) {
      w[g] = fit.points[g].weight;
      m[g] = fit.points[g].approx.mode[idx[k]];
      s[g] = sds[g][static_cast<Eigen::Index>(k)];
    }
    SummaryRow row;
    row.name = k < names.size() ? names[k] : "x" + std::to_string(idx[k]);
    for (size_t g = 0; g < n_pts; ++g) row.mean += w[g] * m[g];
    double second = 0.0;
    for (size_t g = 0; g < n_pts; ++g) second += w[g] * (s[g] * s[g] + m[g] * m[g]);
    row.sd = std::sqrt(std::max(second - row.mean * row.mean, 0.0));
    row.q025 = mixture_quantile(w, m, s, 0.025);
    row.q05 = mixture_quantile(w, m, s, 0.05);
    row.q50 = mixture_quantile(w, m, s, 0.5);
    row.q95 = mixture_quantile(w, m, s, 0.95);
    row.q975 = mixture_quantile(w, m, s, 0.975);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// hyper factories

Hyper hyper_log_precision_pc(const std::string& name, double u, double alpha, double init) {
  const double lambda = -std::log(alpha) / u;
  Hyper h;
  h.name = name;
  h.to_natural = [](double t) { return std::exp(t); };
  h.log_prior = [lambda](double t) {
    return std::log(lambda / 2.0) - 0.5 * t - lambda * std::exp(-0.5 * t);
  };
  h.init = init;
  return h;
}

Hyper hyper_log_precision_loggamma(const std::string& name, double shape, double rate, double init) {
  Hyper h;
  h.name = name;
  h.to_natural = [](double t) { return std::exp(t); };
  h.log_prior = [shape, rate](double t) {
    return shape * std::log(rate) - std::lgamma(shape) + shape * t - rate * std::exp(t);
  };
  h.init = init;
  return h;
}

Hyper hyper_ar_correlation(const std::string& name, double mean, double variance, double init) {
  Hyper h;
  h.name = name;
  h.to_natural = [](double t) { return std::tanh(0.5 * t); };
  h.log_prior = [mean, variance](double t) {
    return -0.5 * (kLog2Pi + std::log(variance)) - 0.5 * (t - mean) * (t - mean) / variance;
  };
  h.init = init;
  return h;
}

Hyper hyper_logit(const std::string& name, std::function<double(double)> log_prior_internal,
                  double init) {
  Hyper h;
  h.name = name;
  h.to_natural = [](double t) { return 1.0 / (1.0 + std::exp(-t)); };
  h.log_prior = std::move(log_prior_internal);
  h.init = init;
  return h;
}

Hyper hyper_log_range_pc(const std::string& name, double range0, double alpha, double init) {
  const double lambda = -std::log(alpha) * range0;  // d = 2
  Hyper h;
  h.name = name;
  h.to_natural = [](double t) { return std::exp(t); };
  h.log_prior = [lambda](double t) { return std::log(lambda) - t - lambda * std::exp(-t); };
  h.init = init;
  return h;
}

Hyper hyper_log_variance_pc_sd(const std::string& name, double sd0, double alpha, double init) {
  const double lambda = -std::log(alpha) / sd0;
  Hyper h;
  h.name = name;
  h.to_natural = [](double t) { return std::exp(t); };
  // prior is exponential(lambda) on sd = exp(t/2); Jacobian d(sd)/dt = sd/2
  h.log_prior = [lambda](double t) {
    return std::log(lambda) - lambda * std::exp(0.5 * t) + 0.5 * t - std::log(2.0);
  };
  h.init = init;
  return h;
}

}  // namespace fusemap::lgm
