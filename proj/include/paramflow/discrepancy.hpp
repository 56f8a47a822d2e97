#pragma once

// MMD_{alpha,beta}: witness solves (alpha D + beta I) w = mu_{p-q}, the
// resulting discrepancy value, and the constraint set / duality helpers.

#include <algorithm>
#include <cstdint>

#include <Eigen/Cholesky>

#include "paramflow/operators.hpp"

namespace paramflow {

struct RegularizationParams {
  double alpha = 1.0;
  double beta = 1.0;

  void validate() const {
    if (!std::isfinite(alpha) || alpha < 0) throw ConfigError("alpha must be finite and >= 0");
    if (!std::isfinite(beta) || beta <= 0) throw ConfigError("beta must be finite and > 0");
  }
};

struct WitnessSolution {
  RkhsFunction<double> f_star;
  double value = 0;     // MMD_{alpha,beta}
  double residual = 0;  // |(alpha D + beta I) w - mu| / |mu|
  RegularizationParams params;
  std::uint64_t operator_fingerprint = 0;
};

/// Cholesky factorization of alpha A^T A + beta I, reusable across right-hand
/// sides.
class Resolvent {
 public:
  Resolvent(const MatrixX& gram_matrix, RegularizationParams params) : params_(params) {
    params_.validate();
    if (gram_matrix.rows() != gram_matrix.cols()) throw DimensionError("Resolvent: gram must be square");
    system_ = params_.alpha * gram_matrix;
    system_.diagonal().array() += params_.beta;
    if (!system_.allFinite()) throw NumericError("Resolvent: non-finite system matrix");
    llt_.compute(system_);
    if (llt_.info() != Eigen::Success) throw NumericError("Resolvent: Cholesky factorization failed");
  }

  Resolvent(const OperatorA& a, RegularizationParams params) : Resolvent(gram(a), params) {}

  long dim() const { return system_.rows(); }
  const RegularizationParams& params() const { return params_; }

  /// Solves with up to three steps of iterative refinement.
  VectorX solve(const VectorX& rhs, double* relative_residual = nullptr) const {
    detail::require_dim(rhs.size(), dim(), "Resolvent::solve");
    if (!rhs.allFinite()) throw NumericError("Resolvent::solve: non-finite right-hand side");
    const double rhs_norm = rhs.norm();
    if (params_.alpha == 0.0) {
      // Pure ridge: the resolvent is a scalar.
      if (relative_residual != nullptr) *relative_residual = 0.0;
      return rhs / params_.beta;
    }
    VectorX x = llt_.solve(rhs);
    VectorX r = rhs - system_ * x;
    for (int it = 0; it < 3 && r.norm() > 1e-14 * rhs_norm; ++it) {
      x += llt_.solve(r);
      r = rhs - system_ * x;
    }
    if (!x.allFinite()) throw NumericError("Resolvent::solve: non-finite solution");
    if (relative_residual != nullptr) *relative_residual = rhs_norm > 0 ? r.norm() / rhs_norm : 0.0;
    return x;
  }

 private:
  RegularizationParams params_;
  MatrixX system_;
  Eigen::LLT<MatrixX> llt_;
};

inline WitnessSolution witness_solve(const Resolvent& resolvent, const RkhsFunction<double>& mu_diff,
                                     std::uint64_t fingerprint = 0) {
  WitnessSolution sol;
  sol.params = resolvent.params();
  sol.operator_fingerprint = fingerprint;
  sol.f_star = RkhsFunction<double>(resolvent.solve(mu_diff.weights, &sol.residual));
  const double half_inner = 0.5 * mu_diff.weights.dot(sol.f_star.weights);
  sol.value = std::sqrt(std::max(0.0, half_inner));
  return sol;
}

/// Witness f* of MMD_{alpha,beta} between p and q_theta given mu_{p-q}.
inline WitnessSolution witness_solve(const OperatorA& a, const RkhsFunction<double>& mu_diff,
                                     const RegularizationParams& params) {
  detail::require_dim(mu_diff.dim(), a.feature_dim(), "witness_solve");
  params.validate();
  return witness_solve(Resolvent(a, params), mu_diff, a.fingerprint);
}

inline double mmd_ab(const OperatorA& a, const RkhsFunction<double>& mu_diff, const RegularizationParams& params) {
  return witness_solve(a, mu_diff, params).value;
}

/// Delta(f) = E_p f - E_q f = <w, mu_p - mu_q>.
inline double delta(const RkhsFunction<double>& f, const RkhsFunction<double>& mu_p,
                    const RkhsFunction<double>& mu_q) {
  detail::require_dim(mu_p.dim(), f.dim(), "delta");
  detail::require_dim(mu_q.dim(), f.dim(), "delta");
  return f.weights.dot(mu_p.weights - mu_q.weights);
}

/// 2 <f, (alpha D + beta I) f>; f is in E_{alpha,beta} iff this is <= 1.
inline double constraint_value(const OperatorA& a, const RkhsFunction<double>& f, const RegularizationParams& params) {
  detail::require_dim(f.dim(), a.feature_dim(), "constraint_value");
  return 2.0 * (params.alpha * (a.matrix * f.weights).squaredNorm() + params.beta * f.squared_norm());
}

/// f scaled onto the boundary of E_{alpha,beta}.
inline RkhsFunction<double> normalize_to_constraint(const OperatorA& a, const RkhsFunction<double>& f,
                                                    const RegularizationParams& params) {
  const double c = constraint_value(a, f, params);
  if (c <= 0) throw NumericError("normalize_to_constraint: f has zero energy");
  return (1.0 / std::sqrt(c)) * f;
}

/// Unconstrained objective Delta(f) - (alpha/2)|L f|^2 - (beta/2)|f|^2 whose
/// supremum is MMD_{alpha,beta}^2.
inline double regularized_objective(const OperatorA& a, const RkhsFunction<double>& f,
                                    const RkhsFunction<double>& mu_diff, const RegularizationParams& params) {
  detail::require_dim(mu_diff.dim(), f.dim(), "regularized_objective");
  return f.weights.dot(mu_diff.weights) - 0.25 * constraint_value(a, f, params);
}

}  // namespace paramflow
