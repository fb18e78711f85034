#pragma once

// Physical parameters of the driven collective-decay model and the
// algebraic relations among the cavity-QED scale parameters.

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "superrad/errors.hpp"

namespace superrad {

/// N two-level atoms, collective decay rate gamma_c, non-collective repump w.
/// All rates share one time unit (gamma_c = 1 by convention).
struct ModelParams {
  int N = 1;
  double gamma_c = 1.0;
  double w = 0.0;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

enum class PumpRegime { weak, intermediate, strong };

inline std::string_view to_string(PumpRegime r) {
  switch (r) {
    case PumpRegime::weak: return "weak";
    case PumpRegime::intermediate: return "intermediate";
    case PumpRegime::strong: return "strong";
  }
  return "unknown";
}

// weak: w < gamma_c; intermediate: gamma_c <= w < N gamma_c; strong: w >= N gamma_c.
// For N = 1 the intermediate band is empty.
inline PumpRegime classify_regime(const ModelParams& p) {
  if (p.w < p.gamma_c) return PumpRegime::weak;
  if (p.w < p.N * p.gamma_c) return PumpRegime::intermediate;
  return PumpRegime::strong;
}

struct ValidatedParams {
  ModelParams params;
  PumpRegime regime;
};

inline ValidatedParams validate(const ModelParams& p) {
  if (p.N < 1) throw ValidationError("N must be >= 1 (got " + std::to_string(p.N) + ")");
  if (!(p.gamma_c > 0.0) || !std::isfinite(p.gamma_c))
    throw ValidationError("gamma_c must be > 0 (got " + std::to_string(p.gamma_c) + ")");
  if (!(p.w >= 0.0) || !std::isfinite(p.w))
    throw ValidationError("w must be >= 0 (got " + std::to_string(p.w) + ")");
  return {p, classify_regime(p)};
}

/// Single-atom cavity-QED quantities. gamma_aux is the rate entering m0; it
/// is carried as an independent input and drives no dynamics.
struct CQEDParams {
  double g = 0.0;
  double kappa = 0.0;
  double Gamma = 0.0;
  double gamma_aux = 0.0;
  double cooperativity = 0.0;  // C = g^2 / (Gamma kappa)
  double gamma_c = 0.0;        // C Gamma
  double n0 = 0.0;             // kappa Gamma / g^2
  double m0 = 0.0;             // gamma_aux^2 / g^2
};

namespace detail {
inline void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw ValidationError(std::string(name) + " must be > 0 (got " + std::to_string(v) + ")");
}
}  // namespace detail

inline CQEDParams derive_cqed(double g, double kappa, double Gamma, double gamma_aux) {
  detail::require_positive(g, "g");
  detail::require_positive(kappa, "kappa");
  detail::require_positive(Gamma, "Gamma");
  detail::require_positive(gamma_aux, "gamma_aux");
  CQEDParams c;
  c.g = g;
  c.kappa = kappa;
  c.Gamma = Gamma;
  c.gamma_aux = gamma_aux;
  const double g2 = g * g;
  c.cooperativity = g2 / (Gamma * kappa);
  c.gamma_c = c.cooperativity * Gamma;
  c.n0 = kappa * Gamma / g2;
  c.m0 = gamma_aux * gamma_aux / g2;
  return c;
}

struct CavityGeometry {
  double A = 0.0;        // mode cross-section
  double F = 0.0;        // finesse
  double lambda0 = 0.0;  // resonant wavelength
  double Q = 0.0;        // atomic transition quality factor
  double V_eff = 0.0;    // effective mode volume
};

inline double resonant_cross_section(double lambda0) {
  return 3.0 * lambda0 * lambda0 / (2.0 * std::numbers::pi);
}

struct CriticalNumbers {
  double n0 = 0.0;
  double m0 = 0.0;
};

inline CriticalNumbers geometric_critical_numbers(const CavityGeometry& geom) {
  detail::require_positive(geom.A, "A");
  detail::require_positive(geom.F, "F");
  detail::require_positive(geom.lambda0, "lambda0");
  detail::require_positive(geom.Q, "Q");
  detail::require_positive(geom.V_eff, "V_eff");
  constexpr double pi = std::numbers::pi;
  const double l3 = geom.lambda0 * geom.lambda0 * geom.lambda0;
  return {2.0 * pi * geom.A / (geom.F * resonant_cross_section(geom.lambda0)),
          4.0 * pi * pi * geom.V_eff / (geom.Q * l3)};
}

/// Non-fatal findings about a geometry (V_eff below one cubic wavelength).
inline std::vector<std::string> geometry_warnings(const CavityGeometry& geom) {
  std::vector<std::string> out;
  const double l3 = geom.lambda0 * geom.lambda0 * geom.lambda0;
  if (l3 > 0.0 && geom.V_eff / l3 < 1.0)
    out.push_back("V_eff/lambda0^3 = " + std::to_string(geom.V_eff / l3) + " is below 1");
  return out;
}

}  // namespace superrad
