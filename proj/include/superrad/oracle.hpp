#pragma once

// Exact small-N master-equation solver: the Liouvillian superoperator on
// column-major vectorized density matrices, its steady state, and two-time
// correlations by the quantum regression theorem.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/KroneckerProduct>
#include <boost/numeric/odeint.hpp>

#include "superrad/errors.hpp"
#include "superrad/hilbert.hpp"
#include "superrad/model.hpp"

namespace superrad {

inline constexpr int kOracleCap = 5;

using ColSparse = Eigen::SparseMatrix<cplx, Eigen::ColMajor>;

struct Liouvillian {
  ColSparse matrix;  // 4^N x 4^N
  ModelParams params;

  Eigen::Index hilbert_dim() const { return Eigen::Index{1} << params.N; }
  Eigen::VectorXcd apply(const Eigen::VectorXcd& vec_rho) const { return matrix * vec_rho; }
};

struct DensityMatrix {
  Eigen::MatrixXcd rho;
  double residual = 0.0;  // ||L vec(rho)|| / ||L||_F

  int N() const { return static_cast<int>(std::lround(std::log2(static_cast<double>(rho.rows())))); }
  double expectation(const SparseOperator& op) const { return (op.matrix * rho).trace().real(); }
  cplx expectation_complex(const SparseOperator& op) const { return (op.matrix * rho).trace(); }
};

inline Eigen::VectorXcd vectorize(const Eigen::MatrixXcd& m) {
  return Eigen::Map<const Eigen::VectorXcd>(m.data(), m.size());
}

inline Eigen::MatrixXcd unvectorize(const Eigen::VectorXcd& v, Eigen::Index dim) {
  return Eigen::Map<const Eigen::MatrixXcd>(v.data(), dim, dim);
}

namespace detail {

// D[L] rho = L rho L^dag - (1/2){L^dag L, rho}, vectorized column-major:
// vec(A X B) = (B^T kron A) vec(X).
inline ColSparse dissipator(const ColSparse& l) {
  const auto d = l.rows();
  ColSparse id(d, d);
  id.setIdentity();
  const ColSparse ldl = l.adjoint() * l;
  const ColSparse lconj = l.conjugate();
  const ColSparse ldlt = ldl.transpose();
  ColSparse out = Eigen::kroneckerProduct(lconj, l).eval();
  ColSparse left = Eigen::kroneckerProduct(id, ldl).eval();
  ColSparse right = Eigen::kroneckerProduct(ldlt, id).eval();
  out -= 0.5 * left;
  out -= 0.5 * right;
  return out;
}

}  // namespace detail

inline Liouvillian build_liouvillian(const ModelParams& params, int cap = kOracleCap) {
  const auto p = validate(params).params;
  if (p.N > cap)
    throw CapabilityError("Liouvillian oracle supports N <= " + std::to_string(cap) + " (got N=" +
                          std::to_string(p.N) + ")");
  Liouvillian L;
  L.params = p;
  const ColSparse jm = build_collective(CollectiveOp::J_minus, p.N).matrix;
  L.matrix = p.gamma_c * detail::dissipator(jm);
  if (p.w > 0.0) {
    for (int j = 0; j < p.N; ++j) {
      const ColSparse sp = build_single_atom(SingleAtomOp::sigma_plus, j, p.N).matrix;
      L.matrix += p.w * detail::dissipator(sp);
    }
  }
  L.matrix.prune(cplx(0.0));
  L.matrix.makeCompressed();
  return L;
}

namespace detail {

inline constexpr Eigen::Index kDenseNullspaceMaxDim = 64;  // N <= 3

inline Eigen::VectorXcd dense_null_vector(const Liouvillian& L) {
  const Eigen::MatrixXcd dense = Eigen::MatrixXcd(L.matrix);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(dense, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double smax = s(0);
  int small = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) <= 1e-10 * smax) ++small;
  if (small > 1)
    throw DegeneracyError("Liouvillian null space has dimension " + std::to_string(small));
  return svd.matrixV().col(s.size() - 1);
}

inline Eigen::VectorXcd sparse_null_vector(const Liouvillian& L) {
  const auto n = L.matrix.rows();
  const double scale = L.matrix.norm();
  ColSparse shifted = L.matrix;
  ColSparse id(n, n);
  id.setIdentity();
  shifted -= cplx(1e-9 * scale) * id;
  Eigen::SparseLU<ColSparse, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(shifted);
  if (lu.info() != Eigen::Success) throw NumericalError("sparse LU of shifted Liouvillian failed");

  const Eigen::Index d = L.hilbert_dim();
  Eigen::VectorXcd v = vectorize(Eigen::MatrixXcd::Identity(d, d));
  v.normalize();
  for (int it = 0; it < 4; ++it) {
    v = lu.solve(v);
    v.normalize();
  }
  // A second, deflated inverse iteration must land on a clearly nonzero eigenvalue.
  Eigen::VectorXcd q = Eigen::VectorXcd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i) q(i) = cplx(std::cos(0.37 * i), std::sin(0.91 * i));
  for (int it = 0; it < 6; ++it) {
    q -= v * v.dot(q);
    q.normalize();
    q = lu.solve(q);
    q -= v * v.dot(q);
    q.normalize();
  }
  if ((L.matrix * q).norm() < 1e-8 * scale)
    throw DegeneracyError("Liouvillian null space is numerically degenerate");
  return v;
}

}  // namespace detail

/// Unique steady state; Hermitized, trace-normalized, tiny negative
/// eigenvalues clipped.
inline DensityMatrix steady_state_dm(const Liouvillian& L) {
  if (L.params.w == 0.0)
    throw DegeneracyError("steady state is not unique for w = 0 (every J- dark state is stationary)");
  const Eigen::Index d = L.hilbert_dim();
  const Eigen::VectorXcd v = L.matrix.rows() <= detail::kDenseNullspaceMaxDim ? detail::dense_null_vector(L)
                                                                                : detail::sparse_null_vector(L);
  Eigen::MatrixXcd rho = unvectorize(v, d);
  rho = 0.5 * (rho + rho.adjoint()).eval();
  rho /= rho.trace();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(rho);
  const auto& vals = eig.eigenvalues();
  if (vals.minCoeff() < -1e-8)
    throw NumericalError("steady state has eigenvalue " + std::to_string(vals.minCoeff()) + " < -1e-8");
  if (vals.minCoeff() < 0.0) {
    Eigen::VectorXd clipped = vals.cwiseMax(0.0);
    rho = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().adjoint();
    rho = 0.5 * (rho + rho.adjoint()).eval();
    rho /= rho.trace().real();
  }
  DensityMatrix out;
  out.rho = rho;
  out.residual = (L.matrix * vectorize(rho)).norm() / L.matrix.norm();
  if (out.residual > 1e-9) throw NumericalError("steady-state residual " + std::to_string(out.residual) + " > 1e-9");
  return out;
}

/// Solve d x / d tau = L x from x(0) = x0 and return x on the grid (grid[0] must be 0).
inline std::vector<Eigen::VectorXcd> propagate(const Liouvillian& L, const Eigen::VectorXcd& x0,
                                               const std::vector<double>& grid, double abs_tol = 1e-12,
                                               double rel_tol = 1e-8) {
  namespace ode = boost::numeric::odeint;
  if (grid.empty() || grid.front() != 0.0) throw ArgumentError("tau grid must start at 0");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ArgumentError("tau grid must be strictly increasing");

  using state_t = std::vector<double>;
  const auto n = x0.size();
  state_t x(2 * static_cast<std::size_t>(n));
  Eigen::Map<Eigen::VectorXcd>(reinterpret_cast<cplx*>(x.data()), n) = x0;

  auto rhs = [&](const state_t& in, state_t& out, double) {
    out.resize(in.size());
    Eigen::Map<Eigen::VectorXcd>(reinterpret_cast<cplx*>(out.data()), n) =
        L.matrix * Eigen::Map<const Eigen::VectorXcd>(reinterpret_cast<const cplx*>(in.data()), n);
  };
  std::vector<Eigen::VectorXcd> out;
  out.reserve(grid.size());
  auto observer = [&](const state_t& s, double) {
    out.emplace_back(Eigen::Map<const Eigen::VectorXcd>(reinterpret_cast<const cplx*>(s.data()), n));
  };
  if (grid.size() == 1) {
    observer(x, 0.0);
    return out;
  }
  try {
    const double dt0 = std::min(1e-3, grid[1]);
    ode::integrate_times(ode::make_dense_output(abs_tol, rel_tol, ode::runge_kutta_dopri5<state_t>()), rhs, x,
                         grid.begin(), grid.end(), dt0, observer);
  } catch (const std::exception& e) {
    throw IntegrationError(std::string("Liouvillian propagation failed: ") + e.what());
  }
  if (out.size() != grid.size()) throw IntegrationError("Liouvillian propagation stopped early");
  return out;
}

/// C(tau) = Tr[sigma+^(1) e^{L tau}(sigma-^(2) rho_ss)], atoms 1 and 2 being
/// indices 0 and 1.
inline std::vector<cplx> regression_correlation(const Liouvillian& L, const DensityMatrix& rho_ss,
                                                const std::vector<double>& tau_grid) {
  const int N = L.params.N;
  if (N < 2) throw ArgumentError("two-atom correlation requires N >= 2");
  const auto d = L.hilbert_dim();
  if (rho_ss.rho.rows() != d) throw ArgumentError("density matrix dimension does not match Liouvillian");
  const SparseOperator sm2 = build_single_atom(SingleAtomOp::sigma_minus, 1, N);
  const SparseOperator sp1 = build_single_atom(SingleAtomOp::sigma_plus, 0, N);
  const Eigen::MatrixXcd x0 = sm2.matrix * rho_ss.rho;
  const auto states = propagate(L, vectorize(x0), tau_grid);
  std::vector<cplx> c;
  c.reserve(states.size());
  for (const auto& s : states) c.push_back((sp1.matrix * unvectorize(s, d)).trace());
  return c;
}

}  // namespace superrad
