#pragma once

// Second-order cumulant theory: pair-correlation equations, their stationary
// roots, the rescaled large-N system, and the analytic coherence time.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include "superrad/errors.hpp"
#include "superrad/model.hpp"

namespace superrad {

// as_printed: the published equations with the third-order cumulant dropped.
// rate_balanced: adds the (w - gamma_c) source to d sz/dt and the sz^2 term
// that the connected sigma_z sigma_z correlator contributes to d spm/dt.
enum class CumulantMode { as_printed, rate_balanced };

inline std::string_view to_string(CumulantMode m) {
  return m == CumulantMode::as_printed ? "as-printed" : "rate-balanced";
}

inline CumulantMode parse_cumulant_mode(std::string_view s) {
  if (s == "as-printed" || s == "as_printed") return CumulantMode::as_printed;
  if (s == "rate-balanced" || s == "rate_balanced") return CumulantMode::rate_balanced;
  throw ValidationError("unknown cumulant mode '" + std::string(s) + "' (expected as-printed or rate-balanced)");
}

struct CumulantState {
  double sz = 0.0;
  double spm = 0.0;
  double szz = 0.0;

  friend bool operator==(const CumulantState&, const CumulantState&) = default;

  Eigen::Vector3d vec() const { return {sz, spm, szz}; }
  static CumulantState from(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }
};

inline constexpr double kCumulantBoundTol = 1e-6;

/// Empty when the state is physical; otherwise names the first violated bound.
inline std::optional<std::string> cumulant_violation(const CumulantState& s, double tol = kCumulantBoundTol) {
  if (!std::isfinite(s.sz) || !std::isfinite(s.spm) || !std::isfinite(s.szz)) return "non-finite component";
  if (std::abs(s.sz) > 1.0 + tol) return "|sz| > 1";
  if (std::abs(s.szz + s.sz * s.sz) > 1.0 + tol) return "|szz + sz^2| > 1";
  // Cauchy-Schwarz with the excited and the ground populations of each atom.
  // The singlet (sz = 0, spm = -1/2) saturates it.
  if (std::abs(s.spm) > 0.5 * (1.0 - std::abs(s.sz)) + tol) return "|spm| > (1 - |sz|)/2";
  return std::nullopt;
}

inline bool cumulant_physical(const CumulantState& s, double tol = kCumulantBoundTol) {
  return !cumulant_violation(s, tol);
}

/// Adds the N-atom conditions <J+J-> >= 0 and <J-J+> >= 0 for a
/// permutation-symmetric ensemble, i.e. spm >= -(1 -+ sz) / (2(N - 1)).
inline std::optional<std::string> cumulant_violation(const CumulantState& s, int N,
                                                     double tol = kCumulantBoundTol) {
  if (auto v = cumulant_violation(s, tol)) return v;
  if (N < 2) return std::nullopt;
  const double floor = -(1.0 - std::abs(s.sz)) / (2.0 * (N - 1.0));
  if (s.spm < floor - tol) return "collective emission rate negative (spm < -(1 - |sz|)/(2(N-1)))";
  return std::nullopt;
}

inline bool cumulant_physical(const CumulantState& s, int N, double tol = kCumulantBoundTol) {
  return !cumulant_violation(s, N, tol);
}

inline CumulantState cumulant_rhs(const CumulantState& s, const ModelParams& p,
                                  CumulantMode mode = CumulantMode::as_printed) {
  const double G = p.gamma_c, g = p.w + p.gamma_c, N = p.N;
  const bool rb = mode == CumulantMode::rate_balanced;
  CumulantState d;
  d.sz = (rb ? p.w - G : 0.0) - g * s.sz - 2.0 * G * (N - 1.0) * s.spm;
  if (p.N == 1) return d;  // no partner atom: pair moments are undefined and frozen
  d.spm = -g * s.spm + 0.5 * G * (s.szz + (rb ? s.sz * s.sz : 0.0) + s.sz) + G * (N - 2.0) * s.sz * s.spm;
  d.szz = -2.0 * g * s.szz + 4.0 * G * s.spm * (1.0 + s.sz);
  return d;
}

inline Eigen::Matrix3d cumulant_jacobian(const CumulantState& s, const ModelParams& p,
                                         CumulantMode mode = CumulantMode::as_printed) {
  const double G = p.gamma_c, g = p.w + p.gamma_c, N = p.N;
  const double b = mode == CumulantMode::rate_balanced ? 1.0 : 0.0;
  Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
  J(0, 0) = -g;
  J(0, 1) = -2.0 * G * (N - 1.0);
  if (p.N == 1) return J;
  J(1, 0) = 0.5 * G * (2.0 * b * s.sz + 1.0) + G * (N - 2.0) * s.spm;
  J(1, 1) = -g + G * (N - 2.0) * s.sz;
  J(1, 2) = 0.5 * G;
  J(2, 0) = 4.0 * G * s.spm;
  J(2, 1) = 4.0 * G * (1.0 + s.sz);
  J(2, 2) = -2.0 * g;
  return J;
}

/// I = gamma_c <J+J-> with the single-atom part N(1 + sz)/2 and N(N-1) pair terms.
inline double cumulant_intensity(const CumulantState& s, const ModelParams& p) {
  return p.gamma_c * (0.5 * p.N * (1.0 + s.sz) + p.N * (p.N - 1.0) * s.spm);
}

// ---------------------------------------------------------------------------

struct CumulantTrajectory {
  std::vector<double> times;
  std::vector<CumulantState> states;
  std::vector<std::string> warnings;  // model-breakdown notices

  const CumulantState& final_state() const { return states.back(); }
};

inline CumulantTrajectory integrate_cumulant(const CumulantState& s0, const ModelParams& params, double t_end,
                                             CumulantMode mode = CumulantMode::as_printed, int n_out = 200,
                                             double tol = 1e-9) {
  namespace ode = boost::numeric::odeint;
  const auto p = validate(params).params;
  if (auto v = cumulant_violation(s0, p.N)) throw ArgumentError("initial cumulant state is unphysical: " + *v);
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ArgumentError("t_end must be > 0");
  if (n_out < 1) throw ArgumentError("n_out must be >= 1");

  using state_t = std::array<double, 3>;
  auto rhs = [&](const state_t& x, state_t& dx, double) {
    const auto d = cumulant_rhs({x[0], x[1], x[2]}, p, mode);
    dx = {d.sz, d.spm, d.szz};
  };
  CumulantTrajectory out;
  bool warned = false;
  auto observer = [&](const state_t& x, double t) {
    const CumulantState s{x[0], x[1], x[2]};
    if (!warned) {
      if (auto v = cumulant_violation(s, p.N)) {
        out.warnings.push_back("model breakdown at t=" + std::to_string(t) + ": " + *v);
        warned = true;
      }
    }
    out.times.push_back(t);
    out.states.push_back(s);
  };
  std::vector<double> grid(static_cast<std::size_t>(n_out) + 1);
  for (int i = 0; i <= n_out; ++i) grid[static_cast<std::size_t>(i)] = t_end * i / n_out;
  state_t x{s0.sz, s0.spm, s0.szz};
  try {
    ode::integrate_times(ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<state_t>()), rhs, x, grid.begin(),
                         grid.end(), std::min(1e-3, grid[1]), observer);
  } catch (const std::exception& e) {
    throw IntegrationError(std::string("cumulant integration failed: ") + e.what());
  }
  const auto& last = out.states.back();
  if (!std::isfinite(last.sz) || !std::isfinite(last.spm) || !std::isfinite(last.szz))
    throw IntegrationError("cumulant integration diverged before t=" + std::to_string(t_end));
  return out;
}

// ---------------------------------------------------------------------------
// Stationary roots

/// Real roots of c3 x^3 + c2 x^2 + c1 x + c0, ascending. Leading coefficients
/// that vanish relative to the others reduce the degree.
inline std::vector<double> real_polynomial_roots(double c3, double c2, double c1, double c0) {
  const double scale = std::max({std::abs(c3), std::abs(c2), std::abs(c1), std::abs(c0)});
  std::vector<double> r;
  if (scale == 0.0) throw DegeneracyError("stationarity polynomial vanishes identically");
  const double eps = 1e-14 * scale;
  if (std::abs(c3) > eps) {
    const double a = c2 / c3, b = c1 / c3, c = c0 / c3;
    const double q = (a * a - 3.0 * b) / 9.0;
    const double rr = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
    if (rr * rr < q * q * q) {
      const double th = std::acos(std::clamp(rr / std::sqrt(q * q * q), -1.0, 1.0));
      const double sq = -2.0 * std::sqrt(q);
      for (int k = 0; k < 3; ++k) r.push_back(sq * std::cos((th + 2.0 * std::numbers::pi * k) / 3.0) - a / 3.0);
    } else {
      const double A = -std::copysign(std::cbrt(std::abs(rr) + std::sqrt(rr * rr - q * q * q)), rr);
      const double B = A == 0.0 ? 0.0 : q / A;
      r.push_back(A + B - a / 3.0);
    }
  } else if (std::abs(c2) > eps) {
    const double disc = c1 * c1 - 4.0 * c2 * c0;
    if (disc >= 0.0) {
      const double qq = -0.5 * (c1 + std::copysign(std::sqrt(disc), c1));
      if (qq != 0.0) {
        r.push_back(qq / c2);
        r.push_back(c0 / qq);
      } else {
        r.push_back(0.0);
        r.push_back(0.0);
      }
    }
  } else if (std::abs(c1) > eps) {
    r.push_back(-c0 / c1);
  } else {
    throw DegeneracyError("stationarity polynomial has no finite roots");
  }
  std::sort(r.begin(), r.end());
  return r;
}

struct CumulantRoot {
  CumulantState state;
  double residual = 0.0;  // max-norm of the right-hand side
  bool physical = false;
  bool stable = false;
  double max_real_eig = 0.0;
};

struct CumulantSteadyState {
  CumulantState state;
  std::vector<CumulantRoot> roots;
  std::string selection;  // which rule decided: "unique", "stability", or "continuation"
  CumulantMode mode = CumulantMode::as_printed;
};

namespace detail {

// Polynomial in spm after eliminating szz = 2 G spm (1 + sz)/g and
// sz = alpha + beta spm from the first and third stationarity conditions.
inline std::array<double, 4> stationarity_coefficients(const ModelParams& p, CumulantMode mode) {
  const double G = p.gamma_c, g = p.w + p.gamma_c, N = p.N;
  const double b = mode == CumulantMode::rate_balanced ? 1.0 : 0.0;
  const double alpha = (mode == CumulantMode::rate_balanced ? p.w - G : 0.0) / g;
  const double beta = -2.0 * G * (N - 1.0) / g;
  const double c0 = 0.5 * G * (b * alpha * alpha + alpha);
  const double c1 = -g + 0.5 * G * (2.0 * G / g * (1.0 + alpha) + 2.0 * b * alpha * beta + beta) + G * (N - 2.0) * alpha;
  const double c2 = 0.5 * G * (2.0 * G / g * beta + b * beta * beta) + G * (N - 2.0) * beta;
  return {0.0, c2, c1, c0};
}

inline CumulantState state_from_spm(double spm, const ModelParams& p, CumulantMode mode) {
  const double G = p.gamma_c, g = p.w + p.gamma_c;
  const double src = mode == CumulantMode::rate_balanced ? p.w - G : 0.0;
  const double sz = (src - 2.0 * G * (p.N - 1.0) * spm) / g;
  return {sz, spm, 2.0 * G * spm * (1.0 + sz) / g};
}

inline double max_abs(const CumulantState& s) {
  return std::max({std::abs(s.sz), std::abs(s.spm), std::abs(s.szz)});
}

inline CumulantState newton_polish(CumulantState s, const ModelParams& p, CumulantMode mode) {
  for (int it = 0; it < 20; ++it) {
    const auto f = cumulant_rhs(s, p, mode);
    if (max_abs(f) <= 1e-12 * std::max(1.0, p.w + p.gamma_c * p.N)) break;
    Eigen::Vector3d fv = f.vec();
    Eigen::Matrix3d J = cumulant_jacobian(s, p, mode);
    if (p.N == 1) {
      s.sz -= f.sz / J(0, 0);
      continue;
    }
    const Eigen::Vector3d step = J.fullPivLu().solve(fv);
    if (!step.allFinite()) break;
    s = CumulantState::from(s.vec() - step);
  }
  return s;
}

inline std::vector<CumulantRoot> all_roots(const ModelParams& p, CumulantMode mode) {
  std::vector<CumulantRoot> out;
  auto classify = [&](CumulantState s) {
    s = newton_polish(s, p, mode);
    CumulantRoot r;
    r.state = s;
    r.residual = max_abs(cumulant_rhs(s, p, mode));
    r.physical = cumulant_physical(s, p.N);
    const Eigen::Matrix3d J = cumulant_jacobian(s, p, mode);
    if (p.N == 1) {
      r.max_real_eig = J(0, 0);
    } else {
      r.max_real_eig = Eigen::EigenSolver<Eigen::Matrix3d>(J, false).eigenvalues().real().maxCoeff();
    }
    r.stable = r.max_real_eig <= 1e-8;
    out.push_back(r);
  };
  if (p.N == 1) {
    const double src = mode == CumulantMode::rate_balanced ? p.w - p.gamma_c : 0.0;
    classify({src / (p.w + p.gamma_c), 0.0, 0.0});
    return out;
  }
  const auto c = stationarity_coefficients(p, mode);
  for (double x : real_polynomial_roots(c[0], c[1], c[2], c[3])) classify(state_from_spm(x, p, mode));
  return out;
}

inline std::vector<std::size_t> candidates(const std::vector<CumulantRoot>& roots, bool need_stable) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < roots.size(); ++i)
    if (roots[i].physical && (!need_stable || roots[i].stable)) idx.push_back(i);
  return idx;
}

inline double distance(const CumulantState& a, const CumulantState& b) { return (a.vec() - b.vec()).norm(); }

}  // namespace detail

/// Every real stationary point, the physical one selected by: bounds, then
/// linear stability, then continuation from the strong-pumping limit.
inline CumulantSteadyState solve_cumulant_steady_state(const ModelParams& params,
                                                       CumulantMode mode = CumulantMode::as_printed) {
  const auto p = validate(params).params;
  if (!(p.w > 0.0)) throw ArgumentError("cumulant steady state requires w > 0");
  CumulantSteadyState out;
  out.mode = mode;
  out.roots = detail::all_roots(p, mode);

  auto physical = detail::candidates(out.roots, false);
  if (physical.empty()) {
    std::string diag = "no physical stationary root for N=" + std::to_string(p.N) + ", w=" + std::to_string(p.w) +
                       " (" + std::string(to_string(mode)) + "); roots:";
    for (const auto& r : out.roots) {
      diag += " (sz=" + std::to_string(r.state.sz) + ", spm=" + std::to_string(r.state.spm) +
              ", szz=" + std::to_string(r.state.szz) + ": " + cumulant_violation(r.state, p.N).value_or("ok") + ")";
    }
    throw SolverError(diag);
  }
  if (physical.size() == 1) {
    out.state = out.roots[physical.front()].state;
    out.selection = "unique";
    return out;
  }
  const auto stable = detail::candidates(out.roots, true);
  if (stable.size() == 1) {
    out.state = out.roots[stable.front()].state;
    out.selection = "stability";
    return out;
  }
  const auto& pool = stable.empty() ? physical : stable;

  // Track the root nearest to (1, 0, 0) at strong pumping down to the target w.
  ModelParams q = p;
  const double w_hi = 100.0 * std::max(p.w, p.N * p.gamma_c);
  CumulantState track{1.0, 0.0, 0.0};
  constexpr int kSteps = 400;
  for (int k = 0; k <= kSteps; ++k) {
    q.w = w_hi * std::pow(p.w / w_hi, static_cast<double>(k) / kSteps);
    const auto roots = detail::all_roots(q, mode);
    const CumulantRoot* best = nullptr;
    for (const auto& r : roots)
      if (!best || detail::distance(r.state, track) < detail::distance(best->state, track)) best = &r;
    if (best) track = best->state;
  }
  std::size_t pick = pool.front();
  for (auto i : pool)
    if (detail::distance(out.roots[i].state, track) < detail::distance(out.roots[pick].state, track)) pick = i;
  out.state = out.roots[pick].state;
  out.selection = "continuation";
  return out;
}

inline CumulantState steady_state_cubic(const ModelParams& params, CumulantMode mode = CumulantMode::as_printed) {
  return solve_cumulant_steady_state(params, mode).state;
}

// ---------------------------------------------------------------------------
// Rescaled large-N system

struct RescaledState {
  double jz = 0.0;
  double jpjm = 0.0;
};

inline RescaledState rescaled_rhs(const RescaledState& s, const ModelParams& p) {
  const double NG = p.N * p.gamma_c;
  return {-p.w * (s.jz - 0.5) - NG * s.jpjm, -p.w * s.jpjm + 2.0 * NG * s.jz * s.jpjm};
}

inline RescaledState rescaled_steady_state(const ModelParams& params) {
  const auto p = validate(params).params;
  const double x = p.w / (p.N * p.gamma_c);
  if (x >= 1.0) return {0.5, 0.0};
  return {0.5 * x, 0.5 * x * (1.0 - x)};
}

/// Large-N intensity N^2 gamma_c <j+ j->.
inline double closed_form_intensity(const ModelParams& params) {
  return static_cast<double>(params.N) * params.N * params.gamma_c * rescaled_steady_state(params).jpjm;
}

inline constexpr int kLargeNValidityThreshold = 10;

struct MaxIntensity {
  double w_star = 0.0;
  double I_max = 0.0;
  bool large_n_valid = false;  // gamma_c << w_star ~ N gamma_c needs N well above 1
  std::function<double(double)> curve;
};

inline MaxIntensity max_intensity(const ModelParams& params) {
  const auto p = validate(params).params;
  MaxIntensity m;
  m.w_star = 0.5 * p.N * p.gamma_c;
  m.I_max = static_cast<double>(p.N) * p.N * p.gamma_c / 8.0;
  m.large_n_valid = p.N >= kLargeNValidityThreshold;
  m.curve = [p](double w) {
    ModelParams q = p;
    q.w = w;
    return closed_form_intensity(q);
  };
  return m;
}

// ---------------------------------------------------------------------------

struct CoherenceTime {
  double t_coh = 0.0;           // N / (N gamma_c + 2 w)
  double decay_rate = 0.0;      // (1/2)(w + gamma_c - (N - 2) gamma_c sz_ss)
  double inverse_rate = 0.0;    // 1 / decay_rate = 2N / (N gamma_c + 2 w) below threshold
  double sz_ss = 0.0;           // 2 <jz>_ss
  std::string rate_expression;  // symbolic form with sz_ss substituted
};

inline CoherenceTime coherence_time(const ModelParams& params) {
  const auto p = validate(params).params;
  if (!(p.w > 0.0)) throw ArgumentError("coherence time requires w > 0");
  CoherenceTime c;
  c.t_coh = p.N / (p.N * p.gamma_c + 2.0 * p.w);
  c.sz_ss = 2.0 * rescaled_steady_state(p).jz;
  c.decay_rate = 0.5 * (p.w + p.gamma_c - (p.N - 2.0) * p.gamma_c * c.sz_ss);
  c.inverse_rate = 1.0 / c.decay_rate;
  c.rate_expression = "0.5*(w + gamma_c - (N - 2)*gamma_c*sz_ss), sz_ss = min(w/(N*gamma_c), 1)";
  return c;
}

}  // namespace superrad
