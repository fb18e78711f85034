#pragma once

// Library form of the command-line operations: parameter sweeps across
// solution methods, subspace tables, and two-time correlation tables.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "superrad/analysis.hpp"
#include "superrad/config.hpp"
#include "superrad/cumulant.hpp"
#include "superrad/errors.hpp"
#include "superrad/hilbert.hpp"
#include "superrad/io.hpp"
#include "superrad/mcwf.hpp"
#include "superrad/model.hpp"
#include "superrad/oracle.hpp"
#include "superrad/version.hpp"

namespace superrad {

enum class Method { mcwf, cumulant, closed_form, oracle };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::mcwf: return "mcwf";
    case Method::cumulant: return "cumulant";
    case Method::closed_form: return "closed_form";
    case Method::oracle: return "oracle";
  }
  return "unknown";
}

inline Method parse_method(std::string_view s) {
  if (s == "mcwf") return Method::mcwf;
  if (s == "cumulant") return Method::cumulant;
  if (s == "closed_form" || s == "closed-form") return Method::closed_form;
  if (s == "oracle") return Method::oracle;
  throw ValidationError("unknown method '" + std::string(s) + "' (expected mcwf, cumulant, closed_form, oracle)");
}

enum class Spacing { linear, log };

/// Explicit values, or count points from min to max inclusive.
inline std::vector<double> make_grid(double lo, double hi, int count, Spacing spacing) {
  if (count < 1) throw ValidationError("grid count must be >= 1");
  if (!(hi >= lo)) throw ValidationError("grid max must be >= min");
  if (spacing == Spacing::log && !(lo > 0.0)) throw ValidationError("log-spaced grid requires min > 0");
  std::vector<double> v(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    v[static_cast<std::size_t>(i)] =
        spacing == Spacing::linear ? lo + f * (hi - lo) : std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)));
  }
  v.front() = lo;
  if (count > 1) v.back() = hi;
  return v;
}

struct EnsembleSettings {
  std::size_t n_traj = 1000;
  std::optional<double> t1;     // default_burn_in when unset
  std::optional<double> T;      // default_window when unset
  std::optional<double> t_end;  // t1 + T when unset
  std::uint64_t master_seed = 0;
  unsigned threads = 1;
};

struct SweepSpec {
  ModelParams base;
  std::vector<double> values;  // w
  std::set<Method> methods{Method::cumulant, Method::closed_form};
  EnsembleSettings ensemble;
  CumulantMode cumulant_mode = CumulantMode::rate_balanced;
  nlohmann::json config_echo;  // resolved configuration for the output header
};

inline void validate_sweep(const SweepSpec& s) {
  validate(s.base);
  if (s.values.empty()) throw ValidationError("sweep value list is empty");
  if (s.methods.empty()) throw ValidationError("no methods requested");
  for (double w : s.values)
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("sweep value w=" + std::to_string(w) + " must be >= 0");
  if (s.methods.count(Method::oracle) && s.base.N > kOracleCap)
    throw CapabilityError("oracle method supports N <= " + std::to_string(kOracleCap) + " (got N=" +
                          std::to_string(s.base.N) + ")");
  if (s.methods.count(Method::mcwf)) {
    hilbert_dim(s.base.N);
    if (s.ensemble.n_traj < 1) throw ValidationError("n_traj must be >= 1");
    if (s.ensemble.t1 && !(*s.ensemble.t1 >= 0.0)) throw ValidationError("t1 must be >= 0");
    if (s.ensemble.T && !(*s.ensemble.T > 0.0)) throw ValidationError("T must be > 0");
  }
}

struct SweepResult {
  CsvTable table;
  int exit_code = 0;                    // worst per-row failure class, 0 when every row succeeded
  std::vector<std::string> diagnostics; // "w=<value> <method>: <message>"
};

namespace detail {

inline std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

struct MethodColumns {
  std::vector<std::string> names;
  std::vector<std::string> blank() const { return std::vector<std::string>(names.size(), ""); }
};

inline MethodColumns columns_for(Method m) {
  switch (m) {
    case Method::mcwf: return {{"I_mcwf", "I_mcwf_err", "N_e_mcwf", "N_e_mcwf_err", "sz1_mcwf", "sz1_mcwf_err"}};
    case Method::cumulant: return {{"sz", "spm", "szz", "I_cumulant"}};
    case Method::closed_form: return {{"jz_closed", "jpjm_closed", "I_closed", "t_coh"}};
    case Method::oracle: return {{"I_oracle", "N_e_oracle", "sz1_oracle"}};
  }
  return {};
}

inline std::vector<std::string> run_method(Method m, const ModelParams& p, const SweepSpec& spec, std::size_t row,
                                           std::optional<double>& n_e) {
  const auto fmt = [](double v) { return format_number(v); };
  switch (m) {
    case Method::mcwf: {
      const double t1 = spec.ensemble.t1.value_or(default_burn_in(p));
      const double T = spec.ensemble.T.value_or(default_window(p));
      TrajectoryOptions opt;
      opt.t_end = spec.ensemble.t_end.value_or(t1 + T);
      const TrajectorySimulator sim(p, opt);
      // Row index folded into the seed keeps rows statistically independent.
      const std::uint64_t seed = trajectory_seed(spec.ensemble.master_seed, 0xC0FFEEULL + row);
      const auto est = estimate_steady_state(sim, all_ground(p.N), spec.ensemble.n_traj, seed, t1, T,
                                             spec.ensemble.threads);
      const auto rep = emission_report(p, est);
      n_e = rep.N_e;
      const auto& sz1 = est.at("sigma_z1");
      return {fmt(rep.I), fmt(rep.I_err), fmt(rep.N_e), fmt(rep.N_e_err), fmt(sz1.mean), fmt(sz1.std_error)};
    }
    case Method::cumulant: {
      const auto s = steady_state_cubic(p, spec.cumulant_mode);
      if (!n_e) n_e = 0.5 * p.N * (1.0 + s.sz);
      return {fmt(s.sz), fmt(s.spm), fmt(s.szz), fmt(cumulant_intensity(s, p))};
    }
    case Method::closed_form: {
      const auto r = rescaled_steady_state(p);
      if (!n_e) n_e = p.N * (r.jz + 0.5);
      const std::string tc = p.w > 0.0 ? fmt(coherence_time(p).t_coh) : "";
      return {fmt(r.jz), fmt(r.jpjm), fmt(closed_form_intensity(p)), tc};
    }
    case Method::oracle: {
      const auto rho = steady_state_dm(build_liouvillian(p));
      const auto rep = emission_report(p, rho);
      n_e = rep.N_e;  // exact value takes precedence over approximations
      return {fmt(rep.I), fmt(rep.N_e), fmt(rho.expectation(build_single_atom(SingleAtomOp::sigma_z, 0, p.N)))};
    }
  }
  return {};
}

}  // namespace detail

/// One row per w. Method failures are recorded in the row's error column and
/// reflected in exit_code; the sweep always completes.
inline SweepResult run_sweep(const SweepSpec& spec) {
  validate_sweep(spec);
  // Fixed method order keeps the column layout independent of flag order.
  const std::vector<Method> order{Method::mcwf, Method::oracle, Method::cumulant, Method::closed_form};
  std::vector<std::string> cols{"w", "regime", "N_e", "I_uncorr"};
  for (Method m : order)
    if (spec.methods.count(m))
      for (const auto& c : detail::columns_for(m).names) cols.push_back(c);
  cols.push_back("error");

  SweepResult out{CsvTable(cols)};
  nlohmann::json timing = nlohmann::json::array();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t r = 0; r < spec.values.size(); ++r) {
    ModelParams p = spec.base;
    p.w = spec.values[r];
    std::optional<double> n_e;
    std::vector<std::string> cells;
    std::string errors;
    nlohmann::json row_timing;
    row_timing["w"] = p.w;
    for (Method m : order) {
      if (!spec.methods.count(m)) continue;
      const auto start = std::chrono::steady_clock::now();
      try {
        for (auto& c : detail::run_method(m, p, spec, r, n_e)) cells.push_back(std::move(c));
      } catch (const Error& e) {
        for (auto& c : detail::columns_for(m).blank()) cells.push_back(std::move(c));
        if (!errors.empty()) errors += " | ";
        errors += std::string(to_string(m)) + ": " + e.what();
        out.diagnostics.push_back("w=" + format_number(p.w) + " " + std::string(to_string(m)) + ": " + e.what());
        out.exit_code = std::max(out.exit_code, e.exit_code());
      }
      row_timing[std::string(to_string(m))] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    std::vector<std::string> row{format_number(p.w), std::string(to_string(classify_regime(p))),
                                 n_e ? format_number(*n_e) : "", n_e ? format_number(*n_e * p.gamma_c) : ""};
    for (auto& c : cells) row.push_back(std::move(c));
    row.push_back(detail::csv_safe(errors));
    out.table.add_row(row);
    timing.push_back(row_timing);
  }

  nlohmann::json header;
  header["command"] = "sweep";
  header["version"] = std::string(kVersion);
  header["config"] = spec.config_echo.is_null() ? to_json(spec.base) : spec.config_echo;
  header["sweep"] = {{"variable", "w"}, {"values", spec.values}, {"cumulant_mode", std::string(to_string(spec.cumulant_mode))}};
  nlohmann::json methods = nlohmann::json::array();
  for (Method m : order)
    if (spec.methods.count(m)) methods.push_back(std::string(to_string(m)));
  header["sweep"]["methods"] = methods;
  if (spec.methods.count(Method::mcwf)) {
    header["ensemble"] = {{"n_traj", spec.ensemble.n_traj}, {"master_seed", spec.ensemble.master_seed}};
    if (spec.ensemble.t1) header["ensemble"]["t1"] = *spec.ensemble.t1;
    if (spec.ensemble.T) header["ensemble"]["T"] = *spec.ensemble.T;
    if (spec.ensemble.t_end) header["ensemble"]["t_end"] = *spec.ensemble.t_end;
  }
  out.table.add_header(header);
  out.table.add_header({{"timing_seconds", timing}});
  return out;
}

// ---------------------------------------------------------------------------
// Subspace tables

struct SubspaceOutput {
  double w = 0.0;
  SubspaceTable populations;
  TransitionDiagram diagram;
  CsvTable population_csv{{}};
  CsvTable transition_csv{{}};
  CsvTable net_csv{{}};
};

inline const std::vector<double>& fig3_pump_values() {
  static const std::vector<double> v{0.1, 2.0, 10.0};
  return v;
}

inline SubspaceOutput run_subspaces(const ModelParams& params, PopulationSource method, const EnsembleSettings& ens,
                                    const nlohmann::json& config_echo = {}) {
  const auto p = validate(params).params;
  if (p.N > kDecompositionCap)
    throw CapabilityError("subspace analysis supports N <= " + std::to_string(kDecompositionCap) + " (got N=" +
                          std::to_string(p.N) + ")");
  auto dec = std::make_shared<const JMDecomposition>(jm_decomposition(p.N));
  SubspaceOutput out;
  out.w = p.w;
  nlohmann::json header;
  header["version"] = std::string(kVersion);
  header["config"] = config_echo.is_null() ? to_json(p) : config_echo;
  header["config"]["w"] = p.w;
  header["method"] = std::string(to_string(method));

  if (method == PopulationSource::oracle) {
    const auto rho = steady_state_dm(build_liouvillian(p));
    out.populations = subspace_populations(*dec, rho);
  } else if (method == PopulationSource::mcwf) {
    const double t1 = ens.t1.value_or(default_burn_in(p));
    const double T = ens.T.value_or(default_window(p));
    TrajectoryOptions opt;
    opt.t_end = ens.t_end.value_or(t1 + T);
    opt.observables.populations = true;
    opt.propagator = Propagator::spectral;
    const TrajectorySimulator sim(p, opt, dec);
    const auto est = estimate_steady_state(sim, all_ground(p.N), ens.n_traj, ens.master_seed, t1, T, ens.threads);
    out.populations = subspace_populations(*dec, est);
    header["ensemble"] = {{"n_traj", ens.n_traj}, {"master_seed", ens.master_seed}, {"t1", t1}, {"T", T}};
  } else {
    throw ArgumentError("subspace method must be mcwf or oracle");
  }
  out.diagram = transition_diagram(p, *dec, &out.populations);

  out.population_csv = population_csv(out.populations);
  out.transition_csv = transition_csv(out.diagram);
  out.net_csv = net_transition_csv(out.diagram);
  header["table"] = "populations";
  out.population_csv.add_header(header);
  header["table"] = "transitions";
  out.transition_csv.add_header(header);
  header["table"] = "net_transitions";
  out.net_csv.add_header(header);
  return out;
}

// ---------------------------------------------------------------------------
// Coherence tables

enum class CoherenceMethod { analytic, oracle };

inline CoherenceMethod parse_coherence_method(std::string_view s) {
  if (s == "analytic") return CoherenceMethod::analytic;
  if (s == "oracle") return CoherenceMethod::oracle;
  throw ValidationError("unknown coherence method '" + std::string(s) + "' (expected analytic or oracle)");
}

/// Least-squares slope of -log|C| against tau over points with |C| above
/// floor * |C(0)|.
inline double fit_decay_rate(const std::vector<double>& tau, const std::vector<cplx>& c, double floor = 1e-6) {
  if (tau.size() != c.size() || tau.size() < 2) throw ArgumentError("fit requires at least two samples");
  const double c0 = std::abs(c.front());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const double a = std::abs(c[i]);
    if (!(a > floor * c0)) continue;
    const double y = std::log(a);
    sx += tau[i];
    sy += y;
    sxx += tau[i] * tau[i];
    sxy += tau[i] * y;
    n += 1;
  }
  if (n < 2) throw DegeneracyError("correlation decays below the fit floor too quickly");
  return -(n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct CoherenceOutput {
  CoherenceTime analytic;
  std::vector<double> tau;
  std::vector<cplx> correlation;  // oracle only
  std::optional<double> fitted_rate;
  CsvTable table{{}};
};

inline CoherenceOutput run_coherence(const ModelParams& params, double tau_max, const std::set<CoherenceMethod>& methods,
                                     int n_tau = 201, const nlohmann::json& config_echo = {}) {
  const auto p = validate(params).params;
  if (!(tau_max > 0.0) || !std::isfinite(tau_max)) throw ValidationError("tau_max must be > 0");
  if (n_tau < 2) throw ValidationError("n_tau must be >= 2");
  if (methods.empty()) throw ValidationError("no coherence methods requested");
  const bool oracle = methods.count(CoherenceMethod::oracle) != 0;
  const bool analytic = methods.count(CoherenceMethod::analytic) != 0;
  if (oracle && p.N > kOracleCap)
    throw CapabilityError("oracle method supports N <= " + std::to_string(kOracleCap) + " (got N=" +
                          std::to_string(p.N) + ")");
  CoherenceOutput out;
  out.analytic = coherence_time(p);
  for (int i = 0; i < n_tau; ++i) out.tau.push_back(tau_max * i / (n_tau - 1));

  std::vector<std::string> cols{"tau"};
  if (oracle) {
    const auto L = build_liouvillian(p);
    const auto rho = steady_state_dm(L);
    out.correlation = regression_correlation(L, rho, out.tau);
    try {
      out.fitted_rate = fit_decay_rate(out.tau, out.correlation);
    } catch (const DegeneracyError&) {
    }
    cols.insert(cols.end(), {"re_C", "im_C", "abs_C_normalized"});
  }
  if (analytic) cols.push_back("analytic_normalized");
  out.table = CsvTable(cols);
  for (std::size_t i = 0; i < out.tau.size(); ++i) {
    std::vector<std::string> row{format_number(out.tau[i])};
    if (oracle) {
      const auto c = out.correlation[i];
      const double c0 = std::abs(out.correlation.front());
      row.push_back(format_number(c.real()));
      row.push_back(format_number(c.imag()));
      row.push_back(format_number(c0 > 0.0 ? std::abs(c) / c0 : 0.0));
    }
    if (analytic) row.push_back(format_number(std::exp(-out.analytic.decay_rate * out.tau[i])));
    out.table.add_row(row);
  }
  nlohmann::json header;
  header["command"] = "coherence";
  header["version"] = std::string(kVersion);
  header["config"] = config_echo.is_null() ? to_json(p) : config_echo;
  header["tau_max"] = tau_max;
  header["t_coh"] = out.analytic.t_coh;
  header["inverse_rate"] = out.analytic.inverse_rate;
  header["decay_rate"] = out.analytic.decay_rate;
  header["decay_rate_expression"] = out.analytic.rate_expression;
  if (out.fitted_rate) header["fitted_oracle_rate"] = *out.fitted_rate;
  out.table.add_header(header);
  return out;
}

}  // namespace superrad
