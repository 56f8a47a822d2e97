#pragma once

// L_theta, L_theta^T and D_theta = L_theta^T L_theta in feature coordinates.
// A single p x m matrix
//
//   A = (1/N) sum_i J_theta G(z_i) * JPhi(G(z_i))^T
//
// realizes all three: L f = A w, L^T v = A^T v, D f = A^T A w.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>

#include <Eigen/Eigenvalues>

#include "paramflow/common.hpp"
#include "paramflow/generator.hpp"
#include "paramflow/rkhs.hpp"

namespace paramflow {

struct OperatorA {
  MatrixX matrix;         // p x m
  long batch_size = 0;    // N used in the Monte-Carlo average
  VectorX theta_snapshot; // theta at assembly
  std::uint64_t fingerprint = 0;

  long param_dim() const { return matrix.rows(); }
  long feature_dim() const { return matrix.cols(); }
};

/// Operator together with the empirical pushforward embedding mu_{q_theta},
/// which falls out of the same forward pass.
struct PushforwardAssembly {
  OperatorA op;
  RkhsFunction<double> mu_q;
  MatrixX points;  // generated samples, d x N
};

namespace detail {

inline std::uint64_t operator_fingerprint(const VectorX& theta, long n, long m) {
  std::uint64_t h = fnv1a(theta.data(), sizeof(double) * static_cast<std::size_t>(theta.size()));
  h = fnv1a(&n, sizeof(n), h);
  return fnv1a(&m, sizeof(m), h);
}

}  // namespace detail

inline PushforwardAssembly assemble(const FeatureMap<double>& map, const Generator<double>& gen, const VectorX& theta,
                                    const MatrixX& latent_batch) {
  if (latent_batch.cols() == 0) throw DimensionError("assemble_A: empty latent batch");
  detail::require_dim(gen.output_dim(), map.input_dim(), "generator output vs feature map input");
  const long n = latent_batch.cols();
  const long d = gen.output_dim();
  const long m = map.feature_dim();
  const long p = gen.param_count();

  PushforwardAssembly out;
  out.points = gen.forward_batch(theta, latent_batch);
  MatrixX features, feat_jac;
  map.phi_and_jacobian_batch(out.points, features, feat_jac);
  out.mu_q = RkhsFunction<double>(column_mean<double>(features));

  // Accumulate over fixed-size sample chunks in a fixed order.
  constexpr long kChunk = 32;
  MatrixX acc = MatrixX::Zero(p, m);
  for (long start = 0; start < n; start += kChunk) {
    const long b = std::min(kChunk, n - start);
    const MatrixX jac = gen.jacobian_theta_batch(theta, latent_batch.middleCols(start, b));
    MatrixX k_stack(d * b, m);
    for (long i = 0; i < b; ++i) {
      for (long j = 0; j < d; ++j) k_stack.row(i * d + j) = feat_jac.col(j * n + start + i).transpose();
    }
    acc.noalias() += jac * k_stack;
  }
  out.op.matrix = acc / static_cast<double>(n);
  out.op.batch_size = n;
  out.op.theta_snapshot = theta;
  out.op.fingerprint = detail::operator_fingerprint(theta, n, m);
  if (!out.op.matrix.allFinite()) throw NumericError("assemble_A: non-finite operator entries");
  return out;
}

inline OperatorA assemble_A(const FeatureMap<double>& map, const Generator<double>& gen, const VectorX& theta,
                            const MatrixX& latent_batch) {
  return assemble(map, gen, theta, latent_batch).op;
}

/// L_theta f = A w, the theta-gradient of the batch mean of f o G.
inline VectorX apply_L(const OperatorA& a, const RkhsFunction<double>& f) {
  detail::require_dim(f.dim(), a.feature_dim(), "apply_L");
  return a.matrix * f.weights;
}

inline RkhsFunction<double> apply_Lt(const OperatorA& a, const VectorX& v) {
  detail::require_dim(v.size(), a.param_dim(), "apply_Lt");
  return RkhsFunction<double>(a.matrix.transpose() * v);
}

inline RkhsFunction<double> apply_D(const OperatorA& a, const RkhsFunction<double>& f) {
  detail::require_dim(f.dim(), a.feature_dim(), "apply_D");
  const VectorX v = a.matrix * f.weights;
  return RkhsFunction<double>(a.matrix.transpose() * v);
}

/// The m x m matrix A^T A.
inline MatrixX gram(const OperatorA& a) {
  MatrixX d = MatrixX::Zero(a.feature_dim(), a.feature_dim());
  d.selfadjointView<Eigen::Lower>().rankUpdate(a.matrix.transpose());
  return d.selfadjointView<Eigen::Lower>();
}

constexpr double kDefaultRankThreshold = 1e-8;

/// Eigen-decomposition of D_theta, eigenvalues descending and clipped at 0.
struct Spectrum {
  VectorX eigenvalues;
  MatrixX eigenvectors;  // column j pairs with eigenvalues(j)
  double rank_threshold = kDefaultRankThreshold;
  long clipped = 0;               // number of negative eigenvalues set to 0
  double min_raw_eigenvalue = 0;  // before clipping

  double lambda_max() const { return eigenvalues.size() > 0 ? eigenvalues(0) : 0.0; }
  double cutoff() const { return rank_threshold * lambda_max(); }
  bool is_null(long j) const { return eigenvalues(j) <= cutoff(); }
};

inline Spectrum spectrum_of(const MatrixX& d, double rank_threshold = kDefaultRankThreshold) {
  if (d.rows() != d.cols()) throw DimensionError("spectrum_of: matrix must be square");
  if (!d.allFinite()) throw NumericError("spectrum_of: non-finite matrix");
  Eigen::SelfAdjointEigenSolver<MatrixX> solver(d);
  if (solver.info() != Eigen::Success) {
    throw NumericError("spectrum: symmetric eigensolver did not converge (m=" + std::to_string(d.rows()) + ")");
  }
  const long m = d.rows();
  Spectrum s;
  s.rank_threshold = rank_threshold;
  s.eigenvalues.resize(m);
  s.eigenvectors.resize(m, m);
  s.min_raw_eigenvalue = m > 0 ? solver.eigenvalues()(0) : 0.0;
  for (long j = 0; j < m; ++j) {
    double ev = solver.eigenvalues()(m - 1 - j);
    if (ev < 0) {
      ev = 0;
      ++s.clipped;
    }
    s.eigenvalues(j) = ev;
    s.eigenvectors.col(j) = solver.eigenvectors().col(m - 1 - j);
  }
  return s;
}

inline Spectrum spectrum(const OperatorA& a, double rank_threshold = kDefaultRankThreshold) {
  return spectrum_of(gram(a), rank_threshold);
}

/// Smallest eigenvalue above rank_threshold * lambda_max.
inline double smallest_nonzero_eig(const Spectrum& s) {
  const double cut = s.cutoff();
  double best = std::numeric_limits<double>::infinity();
  for (long j = 0; j < s.eigenvalues.size(); ++j) {
    if (s.eigenvalues(j) > cut) best = std::min(best, s.eigenvalues(j));
  }
  if (!std::isfinite(best) || best <= 0) {
    throw DegenerateOperatorError("smallest_nonzero_eig: every eigenvalue is below the rank threshold");
  }
  return best;
}

/// a(theta, f) = 1 - |P_null f|^2 / |f|^2.
inline double nullspace_alignment(const Spectrum& s, const RkhsFunction<double>& f) {
  detail::require_dim(f.dim(), s.eigenvalues.size(), "nullspace_alignment");
  const double norm2 = f.squared_norm();
  if (norm2 <= 0) throw NullSpaceStallError("nullspace_alignment: undefined for f = 0");
  double null2 = 0;
  for (long j = 0; j < s.eigenvalues.size(); ++j) {
    if (s.is_null(j)) {
      const double c = s.eigenvectors.col(j).dot(f.weights);
      null2 += c * c;
    }
  }
  return std::clamp(1.0 - null2 / norm2, 0.0, 1.0);
}

inline void write_operator_csv(std::ostream& os, const OperatorA& a) {
  os << std::setprecision(17);
  for (long r = 0; r < a.matrix.rows(); ++r) {
    for (long c = 0; c < a.matrix.cols(); ++c) os << (c ? "," : "") << a.matrix(r, c);
    os << '\n';
  }
}

inline void write_spectrum_csv(std::ostream& os, const Spectrum& s) {
  os << std::setprecision(17) << "index,eigenvalue,is_null\n";
  for (long j = 0; j < s.eigenvalues.size(); ++j) os << j << ',' << s.eigenvalues(j) << ',' << s.is_null(j) << '\n';
}

}  // namespace paramflow
