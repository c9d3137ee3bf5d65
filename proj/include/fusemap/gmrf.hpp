#pragma once

#include <optional>
#include <vector>

#include "fusemap/common.hpp"
#include "fusemap/graph.hpp"

namespace fusemap::gmrf {

/// Universal currency for random-effect priors: a symmetric sparse
/// precision (or structure) matrix plus rank-deficiency metadata, linear
/// constraints A x = 0, and an analytic basis of the null space used to
/// build a proper sampling parameterization.
struct PrecisionSpec {
  SpMat Q;
  int rank_deficiency = 0;
  Eigen::MatrixXd constraints;  // k x n (k may be 0)
  Eigen::MatrixXd null_basis;   // n x rank_deficiency, spans null(Q)
  bool scaled = false;

  int dim() const { return static_cast<int>(Q.rows()); }
};

/// iid N(0, 1) structure: identity precision.
PrecisionSpec iid_structure(int n);

/// Random walk of order 2: R = D^T D with D the second-difference matrix.
/// Rank deficiency 2 (constant and linear trend); carries a sum-to-zero
/// constraint. If `scale`, divided through by the geometric-mean marginal
/// variance of the constrained generalized inverse (same convention as
/// scale_icar).
PrecisionSpec rw2_structure(int T, bool scale);

/// Stationary unit-marginal-variance AR1 precision: tridiagonal
/// (1/(1-rho^2)) * tridiag(-rho; 1, 1+rho^2, ..., 1+rho^2, 1; -rho).
PrecisionSpec ar1_precision(int T, double rho);

/// Scaled-iCAR structure as a PrecisionSpec (null basis = per-component
/// indicator columns).
PrecisionSpec scaled_icar_spec(const graph::ScaledIcar& icar);

struct Bym2Spec {
  int n_areas = 0;
  graph::ScaledIcar scaled_icar;
};

/// Joint precision of the augmented BYM2 vector (psi stacked over u):
/// psi = (1/sqrt(tau)) (sqrt(1-phi) v + sqrt(phi) u) with v iid standard
/// normal and u the scaled iCAR. Constraints act on the u block.
PrecisionSpec bym2_precision(const Bym2Spec& spec, double tau_psi, double phi);

enum class InteractionKind { I, II, III, IV };

InteractionKind interaction_kind_from_string(const std::string& s);
std::string to_string(InteractionKind k);

struct InteractionSpec {
  InteractionKind kind;
  int space_dim = 0;
  int time_dim = 0;
  PrecisionSpec Q;                   // over space_dim * time_dim, area fastest
  bool has_ar_param = false;         // kinds II and IV
  std::optional<double> rho;
};

/// Knorr-Held interaction structure. Index order: area fastest, time
/// slowest. graph_icar is required for kinds III and IV, rho for II and IV.
InteractionSpec interaction_structure(InteractionKind kind, int S, int T,
                                      const graph::ScaledIcar* graph_icar,
                                      std::optional<double> rho);

/// Project x onto the constraint manifold of Q:
///   x - Qs^{-1} A^T (A Qs^{-1} A^T)^{-1} A x
/// where Qs is the proper sampling parameterization of Q.
Eigen::VectorXd condition_by_kriging(const Eigen::VectorXd& x, const PrecisionSpec& spec);

/// Draw from the GMRF defined by Q under its constraints; null directions
/// not removed by the constraint rows are conditioned to zero as well, so
/// intrinsic draws live on the proper complement. Deterministic given rng
/// state.
Eigen::VectorXd sample_gmrf(const PrecisionSpec& spec, Rng& rng);

/// Proper sampling parameterization: Q plus a weak completion of the null
/// space, c_j n_j n_j^T per null-basis column (c_j = rel * local diagonal
/// scale). Exact on the constraint manifold whenever the constraints span
/// the completed directions.
SpMat sampling_precision(const PrecisionSpec& spec, double rel = 1e-5);

/// Block-diagonal composition; constraints and null bases are padded into
/// the combined index space, rank deficiencies add.
PrecisionSpec block_diag(const std::vector<PrecisionSpec>& blocks);

/// Kronecker product of sparse matrices, row index = a_row * b_rows +
/// b_row is NOT used; ordering is (left) slow, (right) fast.
SpMat kronecker(const SpMat& slow, const SpMat& fast);

}  // namespace fusemap::gmrf
