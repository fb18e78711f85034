#pragma once

// Monte Carlo wavefunction unraveling of the collective-decay / repump
// master equation.
//
// Jump channels: sqrt(gamma_c) J-  (channel 0) and sqrt(w) sigma+^(j)
// (channel 1 + j). Between jumps the state evolves under
//   H_eff = -(i/2) K,   K = gamma_c J+J- + w sum_j sigma-^(j) sigma+^(j).
// K is diagonal in the joint (M, J) eigenbasis, and every jump changes M by
// exactly one, so the spectral propagator evolves each (M, J) component by
// a scalar factor exp(-kappa_{M,J} t / 2). The truncated-series propagator is
// matrix-free and needs no decomposition; it handles N above the spectral cap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "superrad/errors.hpp"
#include "superrad/hilbert.hpp"
#include "superrad/io.hpp"
#include "superrad/model.hpp"
#include "superrad/rng.hpp"

namespace superrad {

struct JumpChannel {
  enum class Kind { collective_decay, repump };

  Kind kind = Kind::collective_decay;
  int atom = -1;  // repump target, -1 for the collective channel
  double rate = 0.0;
  SparseOperator op;      // sqrt(rate) L
  SparseOperator weight;  // op^dagger op

  std::string label() const {
    return kind == Kind::collective_decay ? "collective_decay" : "repump(" + std::to_string(atom) + ")";
  }
};

inline std::vector<JumpChannel> jump_channels(const ModelParams& params) {
  const auto p = validate(params).params;
  std::vector<JumpChannel> out;
  out.reserve(static_cast<std::size_t>(p.N) + 1);
  JumpChannel c;
  c.kind = JumpChannel::Kind::collective_decay;
  c.rate = p.gamma_c;
  c.op.matrix = std::sqrt(p.gamma_c) * build_collective(CollectiveOp::J_minus, p.N).matrix;
  c.weight.matrix = c.op.matrix.adjoint() * c.op.matrix;
  c.weight.hermitian = true;
  out.push_back(std::move(c));
  for (int j = 0; j < p.N; ++j) {
    JumpChannel r;
    r.kind = JumpChannel::Kind::repump;
    r.atom = j;
    r.rate = p.w;
    r.op.matrix = std::sqrt(p.w) * build_single_atom(SingleAtomOp::sigma_plus, j, p.N).matrix;
    r.weight.matrix = r.op.matrix.adjoint() * r.op.matrix;
    r.weight.hermitian = true;
    out.push_back(std::move(r));
  }
  return out;
}

/// H_eff = -(i/2) [gamma_c J+J- + w sum_j sigma-^(j) sigma+^(j)]; no Hermitian part.
inline SparseOperator effective_hamiltonian(const ModelParams& params) {
  const auto p = validate(params).params;
  SparseMatrix k = p.gamma_c * build_collective(CollectiveOp::JpJm, p.N).matrix;
  for (int j = 0; j < p.N; ++j) {
    const auto sp = build_single_atom(SingleAtomOp::sigma_plus, j, p.N).matrix;
    SparseMatrix smsp = sp.adjoint() * sp;
    k += p.w * smsp;
  }
  SparseOperator h;
  h.matrix = (cplx(0.0, -0.5) * k).pruned();
  return h;
}

// ---------------------------------------------------------------------------
// Trajectories

enum class Propagator { automatic, spectral, taylor };

inline constexpr int kSpectralPropagatorCap = 12;

struct ObservableSpec {
  bool sigma_z_all_atoms = false;  // record sigma_z^(j) for every j, not only atom 0
  bool populations = false;        // record P_{M,J} (spectral propagator only)
};

struct TrajectoryOptions {
  double t_end = 0.0;
  double dt_out = 0.0;  // 0 selects t_end / kDefaultSamples
  ObservableSpec observables;
  Propagator propagator = Propagator::automatic;
  double max_step_jump_probability = 1e-2;  // series propagator step control
  double jump_time_rel_tol = 1e-6;          // series propagator jump bisection

  static constexpr int kDefaultSamples = 4000;
};

struct JumpEvent {
  double time = 0.0;
  int channel = 0;  // index into jump_channels()

  friend bool operator==(const JumpEvent&, const JumpEvent&) = default;
};

struct TrajectoryRecord {
  ModelParams params;
  std::uint64_t seed = 0;
  std::vector<double> times;
  std::vector<double> jpjm;
  std::vector<double> jz;
  std::vector<double> sigma_z1;
  std::vector<std::vector<double>> sigma_z;      // [atom][sample], if requested
  std::vector<std::vector<double>> populations;  // [subspace][sample], if requested
  std::vector<std::pair<int, int>> population_labels;  // (2J, 2M) per populations row
  std::vector<JumpEvent> jumps;
  double max_renorm_error = 0.0;  // max | ||psi||^2 - 1 | right after each jump

  friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

namespace detail {

inline std::vector<double> sample_grid(const TrajectoryOptions& opt) {
  if (!(opt.t_end > 0.0)) throw ValidationError("t_end must be > 0");
  const double dt = opt.dt_out > 0.0 ? opt.dt_out : opt.t_end / TrajectoryOptions::kDefaultSamples;
  const auto n = static_cast<std::size_t>(std::floor(opt.t_end / dt * (1.0 + 1e-12)));
  std::vector<double> g(n + 1);
  for (std::size_t i = 0; i <= n; ++i) g[i] = static_cast<double>(i) * dt;
  return g;
}

inline std::size_t choose_channel(const std::vector<double>& weights, double r) {
  double total = 0.0;
  for (double w : weights) total += w;
  double acc = 0.0;
  const double target = r * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (target < acc && weights[i] > 0.0) return i;
  }
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  throw NumericalError("all jump channel weights vanish at a jump");
}

inline void apply_channel(const StateVector& psi, int channel, int N, StateVector& out) {
  out = channel == 0 ? apply_j_minus(psi, N) : apply_sigma_plus(psi, channel - 1);
}

}  // namespace detail

class TrajectorySimulator {
 public:
  TrajectorySimulator(const ModelParams& params, TrajectoryOptions options,
                      std::shared_ptr<const JMDecomposition> decomposition = nullptr)
      : params_(validate(params).params), options_(options), decomposition_(std::move(decomposition)) {
    grid_ = detail::sample_grid(options_);
    use_spectral_ = options_.propagator == Propagator::spectral ||
                    (options_.propagator == Propagator::automatic && params_.N <= kSpectralPropagatorCap);
    if (options_.observables.populations && !use_spectral_)
      throw CapabilityError("P_{M,J} sampling requires the spectral propagator (N <= " +
                            std::to_string(kDecompositionCap) + ")");
    if (use_spectral_ && !decomposition_)
      decomposition_ = std::make_shared<const JMDecomposition>(jm_decomposition(params_.N));
    if (decomposition_ && decomposition_->N != params_.N)
      throw ArgumentError("decomposition size does not match N");
    hilbert_dim(params_.N);
    atoms_ = options_.observables.sigma_z_all_atoms ? params_.N : 1;
  }

  const ModelParams& params() const { return params_; }
  const TrajectoryOptions& options() const { return options_; }
  const std::vector<double>& grid() const { return grid_; }
  std::shared_ptr<const JMDecomposition> decomposition() const { return decomposition_; }
  bool spectral() const { return use_spectral_; }

  TrajectoryRecord run(const StateVector& psi0, std::uint64_t seed) const {
    if (psi0.size() != static_cast<Eigen::Index>(hilbert_dim(params_.N)))
      throw ArgumentError("initial state has wrong dimension");
    const double n0 = psi0.squaredNorm();
    if (std::abs(n0 - 1.0) > 1e-10) throw ArgumentError("initial state must be normalized");
    TrajectoryRecord rec = empty_record(seed);
    TrajectoryRng rng(seed);
    if (use_spectral_)
      run_spectral(psi0, rng, rec);
    else
      run_series(psi0, rng, rec);
    return rec;
  }

 private:
  TrajectoryRecord empty_record(std::uint64_t seed) const {
    TrajectoryRecord rec;
    rec.params = params_;
    rec.seed = seed;
    rec.times.reserve(grid_.size());
    rec.jpjm.reserve(grid_.size());
    rec.jz.reserve(grid_.size());
    rec.sigma_z1.reserve(grid_.size());
    if (options_.observables.sigma_z_all_atoms) rec.sigma_z.assign(static_cast<std::size_t>(params_.N), {});
    if (options_.observables.populations) {
      rec.populations.assign(decomposition_->subspaces.size(), {});
      for (const auto& s : decomposition_->subspaces) rec.population_labels.emplace_back(s.twice_j, s.twice_m);
    }
    return rec;
  }

  // ---- spectral propagator -------------------------------------------------

  struct Component {
    int subspace = 0;
    int sector = 0;
    double kappa = 0.0;
    double jpjm = 0.0;
    double m = 0.0;
    double weight = 0.0;  // ||phi||^2 at the segment start
    Eigen::VectorXcd phi;  // sector-local projection P_{J,M} psi
  };

  struct PairTerm {
    std::size_t a = 0, b = 0;
    double coeff = 0.0;  // Re(phi_a^dag O phi_b), doubled for a != b
  };

  std::vector<Component> decompose(const StateVector& psi) const {
    const auto& dec = *decomposition_;
    std::vector<Component> comps;
    for (const auto& sector : dec.sectors) {
      const Eigen::VectorXcd local = dec.restrict_to(psi, sector.excitations);
      if (local.squaredNorm() == 0.0) continue;
      for (int sid : dec.sector_subspaces[static_cast<std::size_t>(sector.excitations)]) {
        const auto& sub = dec.subspaces[static_cast<std::size_t>(sid)];
        const Eigen::VectorXcd coeff = sub.basis.transpose() * local;
        const double wgt = coeff.squaredNorm();
        if (wgt == 0.0) continue;
        Component c;
        c.subspace = sid;
        c.sector = sector.excitations;
        c.jpjm = jpjm_eigenvalue(sub.twice_j, sub.twice_m);
        c.m = sub.M();
        c.kappa = params_.gamma_c * c.jpjm + params_.w * (params_.N - sector.excitations);
        c.weight = wgt;
        c.phi = sub.basis * coeff;
        comps.push_back(std::move(c));
      }
    }
    return comps;
  }

  // sigma_z^(atom) quadratic-form coefficients between components of one sector.
  std::vector<PairTerm> sigma_z_terms(const std::vector<Component>& comps, int atom) const {
    const auto& dec = *decomposition_;
    std::vector<PairTerm> terms;
    for (std::size_t a = 0; a < comps.size(); ++a) {
      const auto& states = dec.sectors[static_cast<std::size_t>(comps[a].sector)].states;
      Eigen::VectorXcd zphi = comps[a].phi;
      for (Eigen::Index i = 0; i < zphi.size(); ++i)
        if (!is_excited(states[static_cast<std::size_t>(i)], atom)) zphi(i) = -zphi(i);
      for (std::size_t b = a; b < comps.size(); ++b) {
        if (comps[b].sector != comps[a].sector) continue;
        const double v = comps[b].phi.dot(zphi).real();
        terms.push_back({a, b, a == b ? v : 2.0 * v});
      }
    }
    return terms;
  }

  double jump_delay(const std::vector<Component>& comps, double u, double horizon) const {
    double dark = 0.0;
    for (const auto& c : comps)
      if (c.kappa == 0.0) dark += c.weight;
    if (dark >= u) return std::numeric_limits<double>::infinity();
    // f(s) = sum_a w_a exp(-kappa_a s) - u is convex and decreasing; Newton from
    // s = 0 increases monotonically to the root.
    double s = 0.0;
    for (int it = 0; it < 1000; ++it) {
      double f = -u, df = 0.0;
      for (const auto& c : comps) {
        const double e = c.weight * std::exp(-c.kappa * s);
        f += e;
        df -= c.kappa * e;
      }
      if (df == 0.0) break;
      const double step = -f / df;
      s += step;
      if (std::abs(step) <= 1e-14 * s || f <= 0.0) return s;
      // Iterates stay below the root, so passing the horizon means no jump in time.
      if (s > horizon) return std::numeric_limits<double>::infinity();
    }
    throw IntegrationError("jump-time search did not converge");
  }

  void sample_spectral(const std::vector<Component>& comps, const std::vector<std::vector<PairTerm>>& zterms,
                       double s, TrajectoryRecord& rec, double t) const {
    double kmin = std::numeric_limits<double>::infinity();
    for (const auto& c : comps) kmin = std::min(kmin, c.kappa);
    std::vector<double> w(comps.size());
    double norm = 0.0, jpjm = 0.0, jz = 0.0;
    for (std::size_t a = 0; a < comps.size(); ++a) {
      w[a] = comps[a].weight * std::exp(-(comps[a].kappa - kmin) * s);
      norm += w[a];
      jpjm += w[a] * comps[a].jpjm;
      jz += w[a] * comps[a].m;
    }
    rec.times.push_back(t);
    rec.jpjm.push_back(jpjm / norm);
    rec.jz.push_back(jz / norm);
    for (int atom = 0; atom < atoms_; ++atom) {
      double z = 0.0;
      for (const auto& term : zterms[static_cast<std::size_t>(atom)])
        z += term.coeff * std::exp(-(0.5 * (comps[term.a].kappa + comps[term.b].kappa) - kmin) * s);
      z /= norm;
      if (atom == 0) rec.sigma_z1.push_back(z);
      if (options_.observables.sigma_z_all_atoms) rec.sigma_z[static_cast<std::size_t>(atom)].push_back(z);
    }
    if (options_.observables.populations) {
      for (auto& row : rec.populations) row.push_back(0.0);
      for (std::size_t a = 0; a < comps.size(); ++a)
        rec.populations[static_cast<std::size_t>(comps[a].subspace)].back() += w[a] / norm;
    }
  }

  StateVector reconstruct(const std::vector<Component>& comps, double s) const {
    const auto& dec = *decomposition_;
    StateVector psi = StateVector::Zero(static_cast<Eigen::Index>(dec.local_index.size()));
    for (const auto& c : comps) {
      const auto& states = dec.sectors[static_cast<std::size_t>(c.sector)].states;
      const double f = std::exp(-0.5 * c.kappa * s);
      for (Eigen::Index i = 0; i < c.phi.size(); ++i) psi(states[static_cast<std::size_t>(i)]) += f * c.phi(i);
    }
    return psi;
  }

  void run_spectral(const StateVector& psi0, TrajectoryRng& rng, TrajectoryRecord& rec) const {
    const int N = params_.N;
    std::vector<Component> comps = decompose(psi0);
    auto zterms = all_sigma_z_terms(comps);
    double t = 0.0;
    std::size_t next = 0;
    const double t_end = options_.t_end;
    StateVector jumped;
    std::vector<double> weights(static_cast<std::size_t>(N) + 1);

    while (true) {
      const double u = rng.uniform();
      const double delay = jump_delay(comps, u, t_end - t);
      const double t_jump = t + delay;
      while (next < grid_.size() && grid_[next] < t_jump) {
        sample_spectral(comps, zterms, grid_[next] - t, rec, grid_[next]);
        ++next;
      }
      if (!(t_jump <= t_end)) break;

      const StateVector psi = reconstruct(comps, delay);
      // Channel weights <psi|L^dag L|psi> for the unnormalized state.
      double jp = 0.0;
      for (const auto& c : comps) jp += c.weight * std::exp(-c.kappa * delay) * c.jpjm;
      weights[0] = params_.gamma_c * jp;
      for (int j = 0; j < N; ++j) {
        double g = 0.0;
        const auto bit = Eigen::Index{1} << j;
        for (Eigen::Index b = 0; b < psi.size(); ++b)
          if (!(b & bit)) g += std::norm(psi(b));
        weights[static_cast<std::size_t>(j) + 1] = params_.w * g;
      }
      const auto ch = static_cast<int>(detail::choose_channel(weights, rng.uniform()));
      detail::apply_channel(psi, ch, N, jumped);
      const double nrm = jumped.norm();
      if (!(nrm > 0.0)) throw IntegrationError("jump produced a null state at t=" + std::to_string(t_jump));
      jumped /= nrm;
      rec.max_renorm_error = std::max(rec.max_renorm_error, std::abs(jumped.squaredNorm() - 1.0));
      rec.jumps.push_back({t_jump, ch});
      comps = decompose(jumped);
      zterms = all_sigma_z_terms(comps);
      t = t_jump;
    }
  }

  std::vector<std::vector<PairTerm>> all_sigma_z_terms(const std::vector<Component>& comps) const {
    std::vector<std::vector<PairTerm>> out;
    for (int atom = 0; atom < atoms_; ++atom) out.push_back(sigma_z_terms(comps, atom));
    return out;
  }

  // ---- truncated-series propagator -----------------------------------------

  // K psi = gamma_c J+ J- psi + w N_g psi
  StateVector apply_k(const StateVector& psi) const {
    const int N = params_.N;
    StateVector out = params_.gamma_c * apply_j_plus(apply_j_minus(psi, N), N);
    for (Eigen::Index b = 0; b < psi.size(); ++b)
      out(b) += params_.w * (N - excitation_count(static_cast<std::uint64_t>(b))) * psi(b);
    return out;
  }

  // exp(-K h / 2) psi by Taylor series, summed until terms are negligible.
  StateVector propagate_series(const StateVector& psi, double h) const {
    StateVector sum = psi;
    StateVector term = psi;
    const double ref = psi.norm();
    for (int n = 1; n < 80; ++n) {
      term = apply_k(term) * (-0.5 * h / n);
      sum += term;
      if (term.norm() <= 1e-16 * ref) return sum;
    }
    throw IntegrationError("series propagator failed to converge");
  }

  void sample_series(const StateVector& psi, TrajectoryRecord& rec, double t) const {
    const int N = params_.N;
    const double n2 = psi.squaredNorm();
    rec.times.push_back(t);
    rec.jpjm.push_back(apply_j_minus(psi, N).squaredNorm() / n2);
    double jz = 0.0;
    std::vector<double> z(static_cast<std::size_t>(atoms_), 0.0);
    for (Eigen::Index b = 0; b < psi.size(); ++b) {
      const double p = std::norm(psi(b));
      if (p == 0.0) continue;
      jz += p * (excitation_count(static_cast<std::uint64_t>(b)) - 0.5 * N);
      for (int a = 0; a < atoms_; ++a) z[static_cast<std::size_t>(a)] += is_excited(static_cast<std::uint64_t>(b), a) ? p : -p;
    }
    rec.jz.push_back(jz / n2);
    rec.sigma_z1.push_back(z[0] / n2);
    if (options_.observables.sigma_z_all_atoms)
      for (int a = 0; a < atoms_; ++a) rec.sigma_z[static_cast<std::size_t>(a)].push_back(z[static_cast<std::size_t>(a)] / n2);
  }

  void run_series(const StateVector& psi0, TrajectoryRng& rng, TrajectoryRecord& rec) const {
    const int N = params_.N;
    const double half = 0.5 * N;
    const double k_bound = params_.gamma_c * (half + 1.0) * (half + 1.0) + params_.w * N;
    StateVector psi = psi0;
    double t = 0.0;
    std::size_t next = 0;
    double u = rng.uniform();
    std::vector<double> weights(static_cast<std::size_t>(N) + 1);
    StateVector jumped;

    while (next < grid_.size() && grid_[next] <= t) sample_series(psi, rec, grid_[next++]);

    while (t < options_.t_end) {
      const double n2 = psi.squaredNorm();
      const double k_mean = psi.dot(apply_k(psi)).real() / n2;
      double h = k_mean > 0.0 ? options_.max_step_jump_probability / k_mean : options_.t_end;
      h = std::min(h, 2.0 / k_bound);
      bool to_sample = false;
      if (next < grid_.size() && t + h >= grid_[next]) {
        h = grid_[next] - t;
        to_sample = true;
      }
      h = std::min(h, options_.t_end - t);
      if (!(h > 1e-14 * std::max(1.0, t)) && !to_sample)
        throw IntegrationError("step-size underflow at t=" + std::to_string(t));

      StateVector cand = propagate_series(psi, h);
      if (cand.squaredNorm() > u) {
        psi = std::move(cand);
        t = to_sample ? grid_[next] : t + h;
        if (to_sample) sample_series(psi, rec, grid_[next++]);
        continue;
      }
      // Norm crossed u inside (t, t+h]: bisect for the crossing.
      double lo = 0.0, hi = h;
      while (hi - lo > options_.jump_time_rel_tol * hi) {
        const double mid = 0.5 * (lo + hi);
        if (propagate_series(psi, mid).squaredNorm() > u)
          lo = mid;
        else
          hi = mid;
      }
      if (hi < 1e-300) throw IntegrationError("step-size underflow at t=" + std::to_string(t));
      // Grid points inside (t, t + hi) are sampled before the jump.
      while (next < grid_.size() && grid_[next] < t + hi) {
        sample_series(propagate_series(psi, grid_[next] - t), rec, grid_[next]);
        ++next;
      }
      const StateVector at_jump = propagate_series(psi, hi);
      t += hi;
      weights[0] = params_.gamma_c * apply_j_minus(at_jump, N).squaredNorm();
      for (int j = 0; j < N; ++j) {
        double g = 0.0;
        const auto bit = Eigen::Index{1} << j;
        for (Eigen::Index b = 0; b < at_jump.size(); ++b)
          if (!(b & bit)) g += std::norm(at_jump(b));
        weights[static_cast<std::size_t>(j) + 1] = params_.w * g;
      }
      const auto ch = static_cast<int>(detail::choose_channel(weights, rng.uniform()));
      detail::apply_channel(at_jump, ch, N, jumped);
      const double nrm = jumped.norm();
      if (!(nrm > 0.0)) throw IntegrationError("jump produced a null state at t=" + std::to_string(t));
      psi = jumped / nrm;
      rec.max_renorm_error = std::max(rec.max_renorm_error, std::abs(psi.squaredNorm() - 1.0));
      rec.jumps.push_back({t, ch});
      u = rng.uniform();
    }
    while (next < grid_.size()) sample_series(psi, rec, grid_[next++]);
  }

  ModelParams params_;
  TrajectoryOptions options_;
  std::shared_ptr<const JMDecomposition> decomposition_;
  std::vector<double> grid_;
  bool use_spectral_ = true;
  int atoms_ = 1;
};

inline TrajectoryRecord evolve_trajectory(const ModelParams& params, const StateVector& psi0, double t_end,
                                          std::uint64_t seed, TrajectoryOptions options = {}) {
  options.t_end = t_end;
  return TrajectorySimulator(params, options).run(psi0, seed);
}

// ---------------------------------------------------------------------------
// Ensembles

namespace detail {

// Runs fn(k) for k in [0, n) on `threads` workers; the first failure (lowest
// index) is rethrown after all workers finish.
template <class Fn>
void parallel_for_indexed(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&](unsigned tid) {
    for (std::size_t k = tid; k < n; k += threads) {
      try {
        fn(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!errors[k]) continue;
    try {
      std::rethrow_exception(errors[k]);
    } catch (const IntegrationError& e) {
      throw IntegrationError("trajectory " + std::to_string(k) + ": " + e.what());
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw IntegrationError("trajectory " + std::to_string(k) + ": " + e.what());
    }
  }
}

}  // namespace detail

inline std::vector<TrajectoryRecord> run_ensemble(const TrajectorySimulator& sim, const StateVector& psi0,
                                                  std::size_t n_traj, std::uint64_t master_seed,
                                                  unsigned threads = 1) {
  if (n_traj < 1) throw ValidationError("n_traj must be >= 1");
  std::vector<TrajectoryRecord> out(n_traj);
  detail::parallel_for_indexed(n_traj, threads,
                               [&](std::size_t k) { out[k] = sim.run(psi0, trajectory_seed(master_seed, k)); });
  return out;
}

inline std::vector<TrajectoryRecord> run_ensemble(const ModelParams& params, const StateVector& psi0, double t_end,
                                                  std::size_t n_traj, std::uint64_t master_seed,
                                                  TrajectoryOptions options = {}, unsigned threads = 1) {
  options.t_end = t_end;
  return run_ensemble(TrajectorySimulator(params, options), psi0, n_traj, master_seed, threads);
}

// ---------------------------------------------------------------------------
// Steady-state estimates

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Time averages of one trajectory over [t1, t1 + T].
struct TrajectoryAverages {
  std::map<std::string, double> observables;
  std::vector<double> populations;
};

struct SteadyStateEstimate {
  std::map<std::string, Estimate> observables;  // "JpJm", "Jz", "sigma_z1", "sigma_z[j]", "jump_rate"
  std::vector<Estimate> populations;            // aligned with population_labels
  std::vector<std::pair<int, int>> population_labels;
  double t1 = 0.0;
  double T = 0.0;
  std::size_t n_traj = 0;

  bool has(const std::string& name) const { return observables.count(name) != 0; }

  const Estimate& at(const std::string& name) const {
    auto it = observables.find(name);
    if (it == observables.end()) throw ArgumentError("observable '" + name + "' not available");
    return it->second;
  }
};

/// t1 = 10 max(1/w, 1/(N gamma_c), 1/gamma_c); T = 10 t1.
inline double default_burn_in(const ModelParams& p) {
  const double inv_w = p.w > 0.0 ? 1.0 / p.w : 0.0;
  return 10.0 * std::max({inv_w, 1.0 / (p.N * p.gamma_c), 1.0 / p.gamma_c});
}

inline double default_window(const ModelParams& p) { return 10.0 * default_burn_in(p); }

namespace detail {

inline double window_average(const std::vector<double>& t, const std::vector<double>& x, std::size_t lo,
                             std::size_t hi) {
  if (hi == lo) return x[lo];
  double num = 0.0, den = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    const double dt = t[i + 1] - t[i];
    num += 0.5 * dt * (x[i] + x[i + 1]);
    den += dt;
  }
  return num / den;
}

}  // namespace detail

inline TrajectoryAverages time_average(const TrajectoryRecord& rec, double t1, double T) {
  if (!(T > 0.0)) throw ArgumentError("averaging window is empty (T <= 0)");
  if (rec.params.w == 0.0)
    throw DegeneracyError("steady state is not unique for w = 0 (J- dark states persist)");
  const double t2 = t1 + T;
  const double tol = 1e-9 * std::max(1.0, t2);
  if (rec.times.empty() || rec.times.back() < t2 - tol)
    throw ArgumentError("averaging window ends after the trajectory (t1 + T > t_end)");
  std::size_t lo = 0;
  while (lo < rec.times.size() && rec.times[lo] < t1 - tol) ++lo;
  std::size_t hi = lo;
  while (hi + 1 < rec.times.size() && rec.times[hi + 1] <= t2 + tol) ++hi;
  if (hi <= lo) throw ArgumentError("averaging window contains fewer than two samples");

  TrajectoryAverages avg;
  avg.observables["JpJm"] = detail::window_average(rec.times, rec.jpjm, lo, hi);
  avg.observables["Jz"] = detail::window_average(rec.times, rec.jz, lo, hi);
  avg.observables["sigma_z1"] = detail::window_average(rec.times, rec.sigma_z1, lo, hi);
  for (std::size_t j = 0; j < rec.sigma_z.size(); ++j)
    avg.observables["sigma_z[" + std::to_string(j) + "]"] = detail::window_average(rec.times, rec.sigma_z[j], lo, hi);
  const double ta = rec.times[lo], tb = rec.times[hi];
  std::size_t count = 0;
  for (const auto& jmp : rec.jumps)
    if (jmp.time >= ta && jmp.time < tb) ++count;
  avg.observables["jump_rate"] = static_cast<double>(count) / (tb - ta);
  for (const auto& row : rec.populations) avg.populations.push_back(detail::window_average(rec.times, row, lo, hi));
  return avg;
}

/// Mean and standard error of per-trajectory averages, reduced in index order.
inline SteadyStateEstimate combine_averages(const std::vector<TrajectoryAverages>& avgs,
                                            std::vector<std::pair<int, int>> labels, double t1, double T) {
  if (avgs.empty()) throw ArgumentError("no trajectories to average");
  SteadyStateEstimate est;
  est.t1 = t1;
  est.T = T;
  est.n_traj = avgs.size();
  est.population_labels = std::move(labels);
  const double n = static_cast<double>(avgs.size());
  auto reduce = [&](auto&& get) {
    double mean = 0.0;
    for (const auto& a : avgs) mean += get(a);
    mean /= n;
    double ss = 0.0;
    for (const auto& a : avgs) ss += (get(a) - mean) * (get(a) - mean);
    const double se = avgs.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : std::numeric_limits<double>::quiet_NaN();
    return Estimate{mean, se};
  };
  for (const auto& [name, _] : avgs.front().observables)
    est.observables[name] = reduce([&](const TrajectoryAverages& a) { return a.observables.at(name); });
  for (std::size_t i = 0; i < avgs.front().populations.size(); ++i)
    est.populations.push_back(reduce([&](const TrajectoryAverages& a) { return a.populations[i]; }));
  return est;
}

inline SteadyStateEstimate steady_state(const std::vector<TrajectoryRecord>& records, double t1, double T) {
  if (records.empty()) throw ArgumentError("no trajectories to average");
  std::vector<TrajectoryAverages> avgs;
  avgs.reserve(records.size());
  for (const auto& r : records) avgs.push_back(time_average(r, t1, T));
  return combine_averages(avgs, records.front().population_labels, t1, T);
}

/// Runs an ensemble and reduces each trajectory to its window averages as it
/// finishes, so records are never held all at once.
inline SteadyStateEstimate estimate_steady_state(const TrajectorySimulator& sim, const StateVector& psi0,
                                                 std::size_t n_traj, std::uint64_t master_seed, double t1, double T,
                                                 unsigned threads = 1) {
  if (n_traj < 1) throw ValidationError("n_traj must be >= 1");
  if (t1 + T > sim.options().t_end * (1.0 + 1e-12))
    throw ArgumentError("averaging window ends after t_end");
  std::vector<TrajectoryAverages> avgs(n_traj);
  std::vector<std::pair<int, int>> labels;
  std::once_flag once;
  detail::parallel_for_indexed(n_traj, threads, [&](std::size_t k) {
    auto rec = sim.run(psi0, trajectory_seed(master_seed, k));
    avgs[k] = time_average(rec, t1, T);
    std::call_once(once, [&] { labels = rec.population_labels; });
  });
  return combine_averages(avgs, labels, t1, T);
}

// ---------------------------------------------------------------------------
// Trajectory dump: '#' JSON header (params, seeds, grid), then one row per
// (trajectory, sample): trajectory,time,JpJm,Jz,sigma_z1[,P(2J;2M)...]

inline std::string trajectory_dump(const std::vector<TrajectoryRecord>& records, std::uint64_t master_seed) {
  if (records.empty()) throw ArgumentError("no trajectories to dump");
  const auto& first = records.front();
  std::vector<std::string> cols{"trajectory", "time", "JpJm", "Jz", "sigma_z1"};
  for (const auto& [tj, tm] : first.population_labels)
    cols.push_back("P(2J=" + std::to_string(tj) + ";2M=" + std::to_string(tm) + ")");
  CsvTable table(cols);
  nlohmann::json header;
  header["params"] = {{"N", first.params.N}, {"gamma_c", first.params.gamma_c}, {"w", first.params.w}};
  header["master_seed"] = master_seed;
  std::vector<std::uint64_t> seeds;
  for (const auto& r : records) seeds.push_back(r.seed);
  header["seeds"] = seeds;
  header["grid"] = {{"n", first.times.size()},
                    {"dt", first.times.size() > 1 ? first.times[1] - first.times[0] : 0.0},
                    {"t_end", first.times.empty() ? 0.0 : first.times.back()}};
  table.add_header(header);
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    for (std::size_t i = 0; i < r.times.size(); ++i) {
      std::vector<std::string> row{std::to_string(k), format_number(r.times[i]), format_number(r.jpjm[i]),
                                   format_number(r.jz[i]), format_number(r.sigma_z1[i])};
      for (const auto& p : r.populations) row.push_back(format_number(p[i]));
      table.add_row(row);
    }
  }
  return table.text();
}

}  // namespace superrad
