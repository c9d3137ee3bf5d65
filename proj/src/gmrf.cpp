#include "fusemap/gmrf.hpp"

#include <Eigen/SparseCholesky>

namespace fusemap::gmrf {

PrecisionSpec iid_structure(int n) {
  if (n < 1) throw ValidationError("iid_structure: dimension must be >= 1");
  PrecisionSpec spec;
  spec.Q = SpMat(n, n);
  spec.Q.setIdentity();
  return spec;
}

PrecisionSpec rw2_structure(int T, bool scale) {
  if (T < 3) throw ValidationError("rw2_structure: need T >= 3");
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(T - 2, T);
  for (int i = 0; i < T - 2; ++i) {
    d(i, i) = 1.0;
    d(i, i + 1) = -2.0;
    d(i, i + 2) = 1.0;
  }
  Eigen::MatrixXd r = d.transpose() * d;

  double factor = 1.0;
  if (scale) {
    Eigen::MatrixXd ginv = graph::constrained_ginverse(r, 1e-10, 2);
    factor = geometric_mean(ginv.diagonal());
  }

  PrecisionSpec spec;
  std::vector<Triplet> trips;
  for (int i = 0; i < T; ++i)
    for (int j = std::max(0, i - 2); j <= std::min(T - 1, i + 2); ++j)
      if (r(i, j) != 0.0) trips.emplace_back(i, j, r(i, j) * factor);
  spec.Q = SpMat(T, T);
  spec.Q.setFromTriplets(trips.begin(), trips.end());
  spec.rank_deficiency = 2;
  spec.constraints = Eigen::MatrixXd::Ones(1, T);
  spec.null_basis = Eigen::MatrixXd(T, 2);
  const double mid = 0.5 * (T - 1);
  for (int t = 0; t < T; ++t) {
    spec.null_basis(t, 0) = 1.0;
    spec.null_basis(t, 1) = t - mid;
  }
  spec.scaled = scale;
  return spec;
}

PrecisionSpec ar1_precision(int T, double rho) {
  if (T < 1) throw ValidationError("ar1_precision: need T >= 1");
  if (!(std::abs(rho) < 1.0)) throw ValidationError("ar1_precision: |rho| must be < 1");
  PrecisionSpec spec;
  std::vector<Triplet> trips;
  const double s = 1.0 / (1.0 - rho * rho);
  for (int t = 0; t < T; ++t) {
    const bool interior = t > 0 && t < T - 1;
    trips.emplace_back(t, t, s * (interior ? 1.0 + rho * rho : 1.0));
    if (t + 1 < T) {
      trips.emplace_back(t, t + 1, -s * rho);
      trips.emplace_back(t + 1, t, -s * rho);
    }
  }
  if (T == 1) {
    trips.clear();
    trips.emplace_back(0, 0, 1.0);
  }
  spec.Q = SpMat(T, T);
  spec.Q.setFromTriplets(trips.begin(), trips.end());
  return spec;
}

PrecisionSpec scaled_icar_spec(const graph::ScaledIcar& icar) {
  PrecisionSpec spec;
  spec.Q = icar.structure;
  spec.constraints = icar.constraints;
  const int n = spec.dim();
  const int n_conn = static_cast<int>(icar.constraints.rows());
  spec.rank_deficiency = n_conn;
  spec.null_basis = Eigen::MatrixXd::Zero(n, n_conn);
  int col = 0;
  for (const auto& comp : icar.labeling.components) {
    if (comp.singleton) continue;
    for (int a : comp.areas) spec.null_basis(a, col) = 1.0;
    ++col;
  }
  spec.scaled = true;
  return spec;
}

PrecisionSpec bym2_precision(const Bym2Spec& spec, double tau_psi, double phi) {
  if (!(tau_psi > 0.0)) throw ValidationError("bym2_precision: tau_psi must be > 0");
  if (phi < 0.0 || phi > 1.0 - 1e-6)
    throw ValidationError("bym2_precision: phi must lie in [0, 1 - 1e-6]");
  const int n = spec.n_areas;
  if (static_cast<int>(spec.scaled_icar.structure.rows()) != n)
    throw ValidationError("bym2_precision: inconsistent dimensions");

  const double one_m = 1.0 - phi;
  const double q_pp = tau_psi / one_m;
  const double q_pu = -std::sqrt(tau_psi * phi) / one_m;
  const double q_uu = phi / one_m;

  std::vector<Triplet> trips;
  for (int i = 0; i < n; ++i) {
    trips.emplace_back(i, i, q_pp);
    if (phi > 0.0) {
      trips.emplace_back(i, n + i, q_pu);
      trips.emplace_back(n + i, i, q_pu);
    }
    trips.emplace_back(n + i, n + i, q_uu);
  }
  for (int k = 0; k < spec.scaled_icar.structure.outerSize(); ++k)
    for (SpMat::InnerIterator it(spec.scaled_icar.structure, k); it; ++it)
      trips.emplace_back(n + static_cast<int>(it.row()), n + static_cast<int>(it.col()), it.value());

  PrecisionSpec out;
  out.Q = SpMat(2 * n, 2 * n);
  out.Q.setFromTriplets(trips.begin(), trips.end());

  const auto& labeling = spec.scaled_icar.labeling;
  const int n_conn = labeling.n_connected();
  out.rank_deficiency = n_conn;
  out.constraints = Eigen::MatrixXd::Zero(n_conn, 2 * n);
  out.null_basis = Eigen::MatrixXd::Zero(2 * n, n_conn);
  int row = 0;
  const double psi_dir = std::sqrt(phi / tau_psi);
  for (const auto& comp : labeling.components) {
    if (comp.singleton) continue;
    for (int a : comp.areas) {
      out.constraints(row, n + a) = 1.0;  // sum-to-zero on u
      out.null_basis(a, row) = psi_dir;
      out.null_basis(n + a, row) = 1.0;
    }
    ++row;
  }
  out.scaled = true;
  return out;
}

SpMat kronecker(const SpMat& slow, const SpMat& fast) {
  const int nf = static_cast<int>(fast.rows());
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(slow.nonZeros()) * fast.nonZeros());
  for (int ks = 0; ks < slow.outerSize(); ++ks)
    for (SpMat::InnerIterator its(slow, ks); its; ++its)
      for (int kf = 0; kf < fast.outerSize(); ++kf)
        for (SpMat::InnerIterator itf(fast, kf); itf; ++itf)
          trips.emplace_back(static_cast<int>(its.row()) * nf + static_cast<int>(itf.row()),
                             static_cast<int>(its.col()) * nf + static_cast<int>(itf.col()),
                             its.value() * itf.value());
  SpMat out(slow.rows() * fast.rows(), slow.cols() * fast.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

InteractionKind interaction_kind_from_string(const std::string& s) {
  if (s == "I" || s == "1") return InteractionKind::I;
  if (s == "II" || s == "2") return InteractionKind::II;
  if (s == "III" || s == "3") return InteractionKind::III;
  if (s == "IV" || s == "4") return InteractionKind::IV;
  throw ValidationError("unknown interaction kind '" + s + "'");
}

std::string to_string(InteractionKind k) {
  switch (k) {
    case InteractionKind::I: return "I";
    case InteractionKind::II: return "II";
    case InteractionKind::III: return "III";
    case InteractionKind::IV: return "IV";
  }
  return "?";
}

InteractionSpec interaction_structure(InteractionKind kind, int S, int T,
                                      const graph::ScaledIcar* graph_icar,
                                      std::optional<double> rho) {
  if (S < 1 || T < 1) throw ValidationError("interaction_structure: need S >= 1 and T >= 1");
  const bool needs_graph = kind == InteractionKind::III || kind == InteractionKind::IV;
  const bool needs_rho = kind == InteractionKind::II || kind == InteractionKind::IV;
  if (needs_graph && graph_icar == nullptr)
    throw ValidationError("interaction_structure: kind " + to_string(kind) + " requires the scaled iCAR");
  if (needs_rho && !rho.has_value())
    throw ValidationError("interaction_structure: kind " + to_string(kind) + " requires rho");

  InteractionSpec out;
  out.kind = kind;
  out.space_dim = S;
  out.time_dim = T;
  out.has_ar_param = needs_rho;
  out.rho = rho;

  SpMat eye_s(S, S);
  eye_s.setIdentity();
  SpMat eye_t(T, T);
  eye_t.setIdentity();

  PrecisionSpec& q = out.Q;
  switch (kind) {
    case InteractionKind::I: {
      q.Q = SpMat(S * T, S * T);
      q.Q.setIdentity();
      break;
    }
    case InteractionKind::II: {
      q.Q = kronecker(ar1_precision(T, *rho).Q, eye_s);
      // one sum-over-time row per area, identifiability only (Q full rank)
      q.constraints = Eigen::MatrixXd::Zero(S, S * T);
      for (int s = 0; s < S; ++s)
        for (int t = 0; t < T; ++t) q.constraints(s, t * S + s) = 1.0;
      break;
    }
    case InteractionKind::III:
    case InteractionKind::IV: {
      const SpMat& rs = graph_icar->structure;
      if (static_cast<int>(rs.rows()) != S)
        throw ValidationError("interaction_structure: graph size does not match S");
      const SpMat time_part = kind == InteractionKind::III ? eye_t : ar1_precision(T, *rho).Q;
      q.Q = kronecker(time_part, rs);

      const auto& labeling = graph_icar->labeling;
      const int n_conn = labeling.n_connected();
      q.rank_deficiency = T * n_conn;
      q.null_basis = Eigen::MatrixXd::Zero(S * T, T * n_conn);
      std::vector<Eigen::VectorXd> rows;
      for (int t = 0; t < T; ++t) {
        int ci = 0;
        for (const auto& comp : labeling.components) {
          if (comp.singleton) continue;
          Eigen::VectorXd row = Eigen::VectorXd::Zero(S * T);
          for (int a : comp.areas) row[t * S + a] = 1.0;
          q.null_basis.col(t * n_conn + ci) = row;
          // kind IV drops the last per-time row of each component; the
          // dropped row is implied by the per-area rows
          if (kind == InteractionKind::III || t < T - 1) rows.push_back(row);
          ++ci;
        }
      }
      if (kind == InteractionKind::IV) {
        for (int s = 0; s < S; ++s) {
          Eigen::VectorXd row = Eigen::VectorXd::Zero(S * T);
          for (int t = 0; t < T; ++t) row[t * S + s] = 1.0;
          rows.push_back(row);
        }
      }
      q.constraints = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), S * T);
      for (size_t i = 0; i < rows.size(); ++i) q.constraints.row(static_cast<Eigen::Index>(i)) = rows[i];
      q.scaled = graph_icar != nullptr;
      break;
    }
  }
  return out;
}

SpMat sampling_precision(const PrecisionSpec& spec, double rel) {
  if (spec.rank_deficiency == 0 || spec.null_basis.cols() == 0) return spec.Q;
  SpMat q = spec.Q;
  Eigen::VectorXd diag = spec.Q.diagonal();
  std::vector<Triplet> trips;
  for (Eigen::Index j = 0; j < spec.null_basis.cols(); ++j) {
    const Eigen::VectorXd& col = spec.null_basis.col(j);
    double scale = 0.0;
    int support = 0;
    for (Eigen::Index i = 0; i < col.size(); ++i) {
      if (col[i] != 0.0) {
        scale += diag[i];
        ++support;
      }
    }
    scale = support > 0 ? scale / support : 1.0;
    if (scale <= 0.0) scale = 1.0;
    const double c = rel * scale;
    for (Eigen::Index i = 0; i < col.size(); ++i) {
      if (col[i] == 0.0) continue;
      for (Eigen::Index k = 0; k < col.size(); ++k)
        if (col[k] != 0.0) trips.emplace_back(i, k, c * col[i] * col[k]);
    }
  }
  SpMat completion(q.rows(), q.cols());
  completion.setFromTriplets(trips.begin(), trips.end());
  return q + completion;
}

namespace {

// Rows of `extra` not already in the row span of `base`, appended.
Eigen::MatrixXd augment_rows(const Eigen::MatrixXd& base, const Eigen::MatrixXd& extra) {
  if (extra.rows() == 0) return base;
  Eigen::MatrixXd all(base.rows() + extra.rows(), extra.cols());
  if (base.rows() > 0) all.topRows(base.rows()) = base;
  all.bottomRows(extra.rows()) = extra;

  Eigen::MatrixXd out = base;
  for (Eigen::Index r = 0; r < extra.rows(); ++r) {
    Eigen::MatrixXd trial(out.rows() + 1, extra.cols());
    if (out.rows() > 0) trial.topRows(out.rows()) = out;
    trial.bottomRows(1) = extra.row(r);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(trial.transpose());
    if (qr.rank() == trial.rows()) out = std::move(trial);
  }
  return out;
}

}  // namespace

Eigen::VectorXd condition_by_kriging(const Eigen::VectorXd& x, const PrecisionSpec& spec) {
  if (spec.constraints.rows() == 0) return x;
  SpMat qs = sampling_precision(spec);
  Eigen::SimplicialLLT<SpMat> llt(qs);
  if (llt.info() != Eigen::Success) throw NumericalError("condition_by_kriging: factorization failed");
  const Eigen::MatrixXd& a = spec.constraints;
  Eigen::MatrixXd qinv_at = llt.solve(a.transpose());
  Eigen::MatrixXd s = a * qinv_at;
  Eigen::LLT<Eigen::MatrixXd> sll(s);
  if (sll.info() != Eigen::Success) throw NumericalError("condition_by_kriging: A Q^-1 A^T singular");
  return x - qinv_at * sll.solve(a * x);
}

Eigen::VectorXd sample_gmrf(const PrecisionSpec& spec, Rng& rng) {
  SpMat qs = sampling_precision(spec);
  Eigen::SimplicialLLT<SpMat> llt(qs);
  if (llt.info() != Eigen::Success) throw NumericalError("sample_gmrf: factorization failed");
  Eigen::VectorXd z = standard_normal(spec.dim(), rng);
  Eigen::VectorXd x = llt.permutationPinv() * llt.matrixU().solve(z);

  // Constraint rows plus any null directions they do not cover: intrinsic
  // draws live on the proper complement of the null space.
  Eigen::MatrixXd a = spec.constraints;
  if (spec.rank_deficiency > 0 && spec.null_basis.cols() > 0)
    a = augment_rows(a, spec.null_basis.transpose());
  if (a.rows() == 0) return x;

  Eigen::MatrixXd qinv_at = llt.solve(a.transpose());
  Eigen::MatrixXd s = a * qinv_at;
  Eigen::LLT<Eigen::MatrixXd> sll(s);
  if (sll.info() != Eigen::Success) throw NumericalError("sample_gmrf: constraint system singular");
  return x - qinv_at * sll.solve(a * x);
}

PrecisionSpec block_diag(const std::vector<PrecisionSpec>& blocks) {
  int n = 0, k = 0, z = 0;
  for (const auto& b : blocks) {
    n += b.dim();
    k += static_cast<int>(b.constraints.rows());
    z += b.rank_deficiency;
  }
  PrecisionSpec out;
  std::vector<Triplet> trips;
  out.constraints = Eigen::MatrixXd::Zero(k, n);
  out.null_basis = Eigen::MatrixXd::Zero(n, z);
  out.rank_deficiency = z;
  int off = 0, row = 0, col = 0;
  for (const auto& b : blocks) {
    for (int kk = 0; kk < b.Q.outerSize(); ++kk)
      for (SpMat::InnerIterator it(b.Q, kk); it; ++it)
        trips.emplace_back(off + static_cast<int>(it.row()), off + static_cast<int>(it.col()), it.value());
    if (b.constraints.rows() > 0)
      out.constraints.block(row, off, b.constraints.rows(), b.dim()) = b.constraints;
    if (b.null_basis.cols() > 0)
      out.null_basis.block(off, col, b.dim(), b.null_basis.cols()) = b.null_basis;
    row += static_cast<int>(b.constraints.rows());
    col += static_cast<int>(b.null_basis.cols());
    off += b.dim();
  }
  out.Q = SpMat(n, n);
  out.Q.setFromTriplets(trips.begin(), trips.end());
  return out;
}

}  // namespace fusemap::gmrf
