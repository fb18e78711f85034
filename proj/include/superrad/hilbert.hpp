#pragma once

// Product basis of N two-level atoms, sparse single-atom and collective
// operators, and the (J, M) decomposition of the 2^N-dimensional space.
//
// Basis convention: index b encodes atom j in bit j (atom 0 is the least
// significant bit); bit value 1 = excited |e>, 0 = ground |g>.

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "superrad/errors.hpp"

namespace superrad {

using cplx = std::complex<double>;
using StateVector = Eigen::VectorXcd;
using SparseMatrix = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

inline constexpr int kMaxProductBasisAtoms = 24;
inline constexpr int kDecompositionCap = 14;

struct SparseOperator {
  SparseMatrix matrix;
  bool hermitian = false;

  Eigen::Index dim() const { return matrix.rows(); }
  StateVector operator*(const StateVector& v) const { return matrix * v; }
};

inline std::size_t hilbert_dim(int N) {
  if (N < 1 || N > kMaxProductBasisAtoms)
    throw CapabilityError("product basis supports 1 <= N <= " + std::to_string(kMaxProductBasisAtoms) +
                          " (got " + std::to_string(N) + ")");
  return std::size_t{1} << N;
}

inline bool is_excited(std::uint64_t b, int j) { return (b >> j) & 1U; }

inline int excitation_count(std::uint64_t b) { return std::popcount(b); }

inline StateVector basis_state(int N, std::uint64_t bits) {
  StateVector v = StateVector::Zero(static_cast<Eigen::Index>(hilbert_dim(N)));
  if (bits >= hilbert_dim(N)) throw IndexError("basis index out of range");
  v(static_cast<Eigen::Index>(bits)) = 1.0;
  return v;
}

inline StateVector all_ground(int N) { return basis_state(N, 0); }
inline StateVector all_excited(int N) { return basis_state(N, hilbert_dim(N) - 1); }

// ---------------------------------------------------------------------------
// Sparse operators

enum class SingleAtomOp { sigma_minus, sigma_plus, sigma_z };
enum class CollectiveOp { J_minus, J_plus, J_z, J_squared, JpJm };

inline SparseOperator build_single_atom(SingleAtomOp kind, int j, int N) {
  const auto dim = hilbert_dim(N);
  if (j < 0 || j >= N)
    throw IndexError("atom index " + std::to_string(j) + " out of range [0, " + std::to_string(N) + ")");
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(dim);
  for (std::uint64_t b = 0; b < dim; ++b) {
    const bool e = is_excited(b, j);
    const auto flipped = static_cast<Eigen::Index>(b ^ (std::uint64_t{1} << j));
    const auto col = static_cast<Eigen::Index>(b);
    switch (kind) {
      case SingleAtomOp::sigma_minus:
        if (e) t.emplace_back(flipped, col, 1.0);
        break;
      case SingleAtomOp::sigma_plus:
        if (!e) t.emplace_back(flipped, col, 1.0);
        break;
      case SingleAtomOp::sigma_z:
        t.emplace_back(col, col, e ? 1.0 : -1.0);
        break;
    }
  }
  SparseOperator op;
  op.matrix.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  op.matrix.setFromTriplets(t.begin(), t.end());
  op.hermitian = kind == SingleAtomOp::sigma_z;
  return op;
}

inline SparseOperator build_collective(CollectiveOp kind, int N) {
  const auto dim = static_cast<Eigen::Index>(hilbert_dim(N));
  SparseOperator op;
  if (kind == CollectiveOp::J_z) {
    std::vector<Eigen::Triplet<cplx>> t;
    for (Eigen::Index b = 0; b < dim; ++b)
      t.emplace_back(b, b, excitation_count(static_cast<std::uint64_t>(b)) - 0.5 * N);
    op.matrix.resize(dim, dim);
    op.matrix.setFromTriplets(t.begin(), t.end());
    op.hermitian = true;
    return op;
  }
  std::vector<Eigen::Triplet<cplx>> t;
  for (Eigen::Index b = 0; b < dim; ++b)
    for (int j = 0; j < N; ++j)
      if (is_excited(static_cast<std::uint64_t>(b), j)) t.emplace_back(b ^ (Eigen::Index{1} << j), b, 1.0);
  SparseMatrix jm(dim, dim);
  jm.setFromTriplets(t.begin(), t.end());
  SparseMatrix jp = jm.adjoint();
  switch (kind) {
    case CollectiveOp::J_minus:
      op.matrix = jm;
      break;
    case CollectiveOp::J_plus:
      op.matrix = jp;
      break;
    case CollectiveOp::JpJm:
      op.matrix = (jp * jm).pruned();
      op.hermitian = true;
      break;
    case CollectiveOp::J_squared: {
      const SparseMatrix jz = build_collective(CollectiveOp::J_z, N).matrix;
      SparseMatrix a = jp * jm;
      SparseMatrix b = jm * jp;
      SparseMatrix z2 = jz * jz;
      op.matrix = (0.5 * (a + b) + z2).pruned();
      op.hermitian = true;
      break;
    }
    case CollectiveOp::J_z:
      break;
  }
  return op;
}

// Matrix-free actions on full product-basis vectors.

inline StateVector apply_sigma_minus(const StateVector& psi, int j) {
  StateVector out = StateVector::Zero(psi.size());
  const auto bit = Eigen::Index{1} << j;
  for (Eigen::Index b = 0; b < psi.size(); ++b)
    if (b & bit) out(b ^ bit) = psi(b);
  return out;
}

inline StateVector apply_sigma_plus(const StateVector& psi, int j) {
  StateVector out = StateVector::Zero(psi.size());
  const auto bit = Eigen::Index{1} << j;
  for (Eigen::Index b = 0; b < psi.size(); ++b)
    if (!(b & bit)) out(b ^ bit) = psi(b);
  return out;
}

inline StateVector apply_j_minus(const StateVector& psi, int N) {
  StateVector out = StateVector::Zero(psi.size());
  for (Eigen::Index b = 0; b < psi.size(); ++b) {
    if (psi(b) == cplx{}) continue;
    for (int j = 0; j < N; ++j) {
      const auto bit = Eigen::Index{1} << j;
      if (b & bit) out(b ^ bit) += psi(b);
    }
  }
  return out;
}

inline StateVector apply_j_plus(const StateVector& psi, int N) {
  StateVector out = StateVector::Zero(psi.size());
  for (Eigen::Index b = 0; b < psi.size(); ++b) {
    if (psi(b) == cplx{}) continue;
    for (int j = 0; j < N; ++j) {
      const auto bit = Eigen::Index{1} << j;
      if (!(b & bit)) out(b ^ bit) += psi(b);
    }
  }
  return out;
}

inline double expectation(const SparseOperator& op, const StateVector& psi) {
  return psi.dot(op.matrix * psi).real();
}

// ---------------------------------------------------------------------------
// (J, M) decomposition

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

/// Number of copies of spin J among N spin-1/2: C(N, N/2-J) - C(N, N/2-J-1).
inline int dicke_multiplicity(int N, int twice_j) {
  if (twice_j < 0 || twice_j > N || (N - twice_j) % 2 != 0) return 0;
  const int k = (N - twice_j) / 2;
  return static_cast<int>(binomial(N, k) - binomial(N, k - 1));
}

/// Fixed excitation number k (M = k - N/2). States are in increasing order.
struct Sector {
  int excitations = 0;
  std::vector<std::uint32_t> states;

  Eigen::Index size() const { return static_cast<Eigen::Index>(states.size()); }
};

struct JMSubspace {
  int twice_j = 0;
  int twice_m = 0;
  int multiplicity = 0;
  int sector = 0;
  Eigen::MatrixXd basis;  // sector-local, sector.size() x multiplicity, orthonormal columns

  double J() const { return 0.5 * twice_j; }
  double M() const { return 0.5 * twice_m; }
};

class JMDecomposition {
 public:
  int N = 0;
  std::vector<Sector> sectors;           // indexed by excitation count
  std::vector<std::int32_t> local_index;  // product index -> position within its sector
  std::vector<JMSubspace> subspaces;      // ordered by J descending, then M descending
  std::vector<std::vector<int>> sector_subspaces;

  int find(int twice_j, int twice_m) const {
    for (std::size_t i = 0; i < subspaces.size(); ++i)
      if (subspaces[i].twice_j == twice_j && subspaces[i].twice_m == twice_m) return static_cast<int>(i);
    return -1;
  }

  const JMSubspace& at(int twice_j, int twice_m) const {
    const int i = find(twice_j, twice_m);
    if (i < 0) throw IndexError("no subspace with 2J=" + std::to_string(twice_j) + ", 2M=" + std::to_string(twice_m));
    return subspaces[static_cast<std::size_t>(i)];
  }

  Eigen::VectorXcd restrict_to(const StateVector& psi, int sector) const {
    const auto& s = sectors[static_cast<std::size_t>(sector)];
    Eigen::VectorXcd out(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) out(i) = psi(s.states[static_cast<std::size_t>(i)]);
    return out;
  }

  StateVector embed(const Eigen::VectorXcd& local, int sector) const {
    const auto& s = sectors[static_cast<std::size_t>(sector)];
    StateVector out = StateVector::Zero(static_cast<Eigen::Index>(local_index.size()));
    for (Eigen::Index i = 0; i < s.size(); ++i) out(s.states[static_cast<std::size_t>(i)]) = local(i);
    return out;
  }

  /// xi-th basis vector of a subspace as a full-length state.
  StateVector basis_vector(const JMSubspace& sub, int xi) const {
    return embed(sub.basis.col(xi).cast<cplx>(), sub.sector);
  }
};

namespace detail {

// J+J- restricted to one excitation sector: diagonal k, and 1 for every
// exchange of an excited and a ground atom.
inline Eigen::MatrixXd sector_jpjm(const Sector& s, const std::vector<std::int32_t>& local_index, int N) {
  const auto d = s.size();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index c = 0; c < d; ++c) {
    const std::uint32_t b = s.states[static_cast<std::size_t>(c)];
    m(c, c) = s.excitations;
    for (int j = 0; j < N; ++j) {
      if (!is_excited(b, j)) continue;
      for (int i = 0; i < N; ++i) {
        if (i == j || is_excited(b, i)) continue;
        const std::uint32_t b2 = b ^ (1U << j) ^ (1U << i);
        m(local_index[b2], c) += 1.0;
      }
    }
  }
  return m;
}

inline constexpr double kEigenSnapTol = 1e-6;

}  // namespace detail

inline std::vector<Sector> build_sectors(int N, std::vector<std::int32_t>& local_index) {
  const auto dim = hilbert_dim(N);
  std::vector<Sector> sectors(static_cast<std::size_t>(N + 1));
  for (int k = 0; k <= N; ++k) sectors[static_cast<std::size_t>(k)].excitations = k;
  local_index.assign(dim, 0);
  for (std::uint32_t b = 0; b < dim; ++b) {
    auto& s = sectors[static_cast<std::size_t>(excitation_count(b))];
    local_index[b] = static_cast<std::int32_t>(s.states.size());
    s.states.push_back(b);
  }
  return sectors;
}

/// Block-diagonalize by excitation number, then diagonalize J^2 within each
/// block and snap eigenvalues to J(J+1).
inline JMDecomposition jm_decomposition(int N, int cap = kDecompositionCap) {
  if (N < 1) throw ValidationError("N must be >= 1");
  if (N > cap)
    throw CapabilityError("jm_decomposition supports N <= " + std::to_string(cap) + " (got N=" +
                          std::to_string(N) + ")");
  JMDecomposition dec;
  dec.N = N;
  dec.sectors = build_sectors(N, dec.local_index);
  dec.sector_subspaces.resize(dec.sectors.size());

  for (const auto& s : dec.sectors) {
    const int twice_m = 2 * s.excitations - N;
    Eigen::MatrixXd j2 = detail::sector_jpjm(s, dec.local_index, N);
    const double m = 0.5 * twice_m;
    j2.diagonal().array() += m * m - m;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(j2);
    if (eig.info() != Eigen::Success) throw NumericalError("J^2 diagonalization failed");
    const auto& vals = eig.eigenvalues();
    const auto& vecs = eig.eigenvectors();

    Eigen::Index start = 0;
    while (start < vals.size()) {
      const double lam = vals(start);
      const double jj = 0.5 * (-1.0 + std::sqrt(1.0 + 4.0 * std::max(lam, 0.0)));
      const int twice_j = static_cast<int>(std::lround(2.0 * jj));
      const double target = 0.25 * twice_j * (twice_j + 2);
      if (std::abs(lam - target) > detail::kEigenSnapTol || (N - twice_j) % 2 != 0)
        throw NumericalError("J^2 eigenvalue " + std::to_string(lam) + " does not snap to J(J+1)");
      Eigen::Index end = start;
      while (end < vals.size() && std::abs(vals(end) - target) <= detail::kEigenSnapTol) ++end;
      JMSubspace sub;
      sub.twice_j = twice_j;
      sub.twice_m = twice_m;
      sub.multiplicity = static_cast<int>(end - start);
      sub.sector = s.excitations;
      sub.basis = vecs.middleCols(start, end - start);
      if (sub.multiplicity != dicke_multiplicity(N, twice_j))
        throw NumericalError("multiplicity mismatch for 2J=" + std::to_string(twice_j));
      dec.subspaces.push_back(std::move(sub));
      start = end;
    }
  }
  std::sort(dec.subspaces.begin(), dec.subspaces.end(), [](const JMSubspace& a, const JMSubspace& b) {
    return a.twice_j != b.twice_j ? a.twice_j > b.twice_j : a.twice_m > b.twice_m;
  });
  for (std::size_t i = 0; i < dec.subspaces.size(); ++i)
    dec.sector_subspaces[static_cast<std::size_t>(dec.subspaces[i].sector)].push_back(static_cast<int>(i));
  return dec;
}

/// Projector onto a (J, M) subspace as a full-space sparse operator.
inline SparseOperator projector(const JMDecomposition& dec, const JMSubspace& sub) {
  const auto& s = dec.sectors[static_cast<std::size_t>(sub.sector)];
  const Eigen::MatrixXd p = sub.basis * sub.basis.transpose();
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(static_cast<std::size_t>(p.size()));
  for (Eigen::Index r = 0; r < p.rows(); ++r)
    for (Eigen::Index c = 0; c < p.cols(); ++c)
      if (p(r, c) != 0.0) t.emplace_back(s.states[static_cast<std::size_t>(r)], s.states[static_cast<std::size_t>(c)], p(r, c));
  SparseOperator op;
  const auto dim = static_cast<Eigen::Index>(dec.local_index.size());
  op.matrix.resize(dim, dim);
  op.matrix.setFromTriplets(t.begin(), t.end());
  op.hermitian = true;
  return op;
}

/// <psi| P_{J,M} |psi> without building the projector.
inline double subspace_weight(const JMDecomposition& dec, const JMSubspace& sub, const StateVector& psi) {
  const Eigen::VectorXcd local = dec.restrict_to(psi, sub.sector);
  return (sub.basis.transpose() * local).squaredNorm();
}

/// Eigenvalue of J+J- on a (J, M) subspace: J(J+1) - M(M-1).
inline double jpjm_eigenvalue(int twice_j, int twice_m) {
  const double j = 0.5 * twice_j;
  const double m = 0.5 * twice_m;
  return j * (j + 1.0) - m * (m - 1.0);
}

/// Coordinate-list debug dump: one "row col re im" line per nonzero.
inline std::string coordinate_dump(const SparseOperator& op) {
  std::string out;
  char buf[128];
  for (Eigen::Index r = 0; r < op.matrix.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(op.matrix, r); it; ++it) {
      std::snprintf(buf, sizeof buf, "%ld %ld %.17g %.17g\n", static_cast<long>(it.row()),
                    static_cast<long>(it.col()), it.value().real(), it.value().imag());
      out += buf;
    }
  return out;
}

}  // namespace superrad
