// superrad: command-line front end for sweeps, subspace tables, coherence
// tables and configuration checks.
//
// Exit codes: 0 success, 1 validation, 2 capability, 3 numerical.

#include <cstdint>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "superrad/config.hpp"
#include "superrad/errors.hpp"
#include "superrad/io.hpp"
#include "superrad/sweep.hpp"
#include "superrad/version.hpp"

namespace {

using namespace superrad;

struct ModelFlags {
  std::string config;
  std::optional<int> N;
  std::optional<double> gamma_c;
  std::optional<double> w;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON model configuration");
    app->add_option("-N,--atoms", N, "number of atoms (overrides config)");
    app->add_option("--gamma-c", gamma_c, "collective decay rate (overrides config)");
    app->add_option("-w,--pump", w, "repump rate (overrides config)");
  }

  ModelConfig resolve(bool need_w = true) const {
    ModelConfig cfg;
    if (!config.empty()) {
      cfg = load_config(config);
    } else {
      if (!N) throw ValidationError("either --config or --atoms is required");
      if (need_w && !w) throw ValidationError("either --config or --pump is required");
    }
    if (N) cfg.params.N = *N;
    if (gamma_c) cfg.params.gamma_c = *gamma_c;
    if (w) cfg.params.w = *w;
    validate(cfg.params);
    return cfg;
  }
};

struct EnsembleFlags {
  std::size_t n_traj = 1000;
  std::optional<double> t1, T, t_end;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void attach(CLI::App* app) {
    app->add_option("--ntraj", n_traj, "trajectories per point")->capture_default_str();
    app->add_option("--t1", t1, "burn-in time (default 10 max(1/w, 1/(N gamma_c), 1/gamma_c))");
    app->add_option("--T", T, "averaging window (default 10 t1)");
    app->add_option("--t-end", t_end, "trajectory length (default t1 + T)");
    app->add_option("--seed", seed, "master seed")->capture_default_str();
    app->add_option("--threads", threads, "worker threads")->capture_default_str();
  }

  EnsembleSettings settings() const { return {n_traj, t1, T, t_end, seed, threads}; }
};

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-")
    std::cout << text;
  else
    write_file_atomic(out, text);
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ValidationError("cannot parse sweep value '" + item + "'");
    }
    if (item.find_first_not_of(" \t", used) != std::string::npos)
      throw ValidationError("cannot parse sweep value '" + item + "'");
    v.push_back(x);
  }
  return v;
}

std::string number_tag(double v) {
  std::string s = format_number(v);
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Steady-state superradiance simulator"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "sweep the repump rate across solution methods");
  ModelFlags sweep_model;
  EnsembleFlags sweep_ens;
  std::vector<std::string> sweep_methods;
  std::optional<std::string> sweep_values;
  double w_min = 0.05, w_max = 100.0;
  int w_count = 20;
  std::string spacing = "log", sweep_out, cumulant_mode = "rate-balanced";
  sweep_model.attach(sweep);
  sweep_ens.attach(sweep);
  sweep->add_option("--method", sweep_methods, "mcwf, cumulant, closed_form, oracle (repeatable)");
  sweep->add_option("--values", sweep_values, "comma-separated w values");
  sweep->add_option("--w-min", w_min, "grid minimum")->capture_default_str();
  sweep->add_option("--w-max", w_max, "grid maximum")->capture_default_str();
  sweep->add_option("--count", w_count, "grid points")->capture_default_str();
  sweep->add_option("--spacing", spacing, "lin or log")->check(CLI::IsMember({"lin", "log"}))->capture_default_str();
  sweep->add_option("--cumulant-mode", cumulant_mode, "as-printed or rate-balanced")->capture_default_str();
  sweep->add_option("--out", sweep_out, "output CSV (stdout when omitted)");

  // subspaces
  auto* subs = app.add_subcommand("subspaces", "(J, M) subspace populations and transition diagrams");
  ModelFlags subs_model;
  EnsembleFlags subs_ens;
  std::string subs_method = "oracle", subs_out;
  bool fig3 = false;
  subs_model.attach(subs);
  subs_ens.attach(subs);
  subs->add_option("--method", subs_method, "mcwf or oracle")->check(CLI::IsMember({"mcwf", "oracle"}))
      ->capture_default_str();
  subs->add_flag("--fig3", fig3, "N=4, gamma_c=1, w in {0.1, 2, 10}");
  subs->add_option("--out", subs_out, "output directory (stdout when omitted)");

  // coherence
  auto* coh = app.add_subcommand("coherence", "two-time dipole correlation");
  ModelFlags coh_model;
  std::vector<std::string> coh_methods;
  double tau_max = 0.0;
  int n_tau = 201;
  std::string coh_out;
  coh_model.attach(coh);
  coh->add_option("--tau-max", tau_max, "largest delay")->required();
  coh->add_option("--n-tau", n_tau, "delay samples")->capture_default_str();
  coh->add_option("--method", coh_methods, "analytic or oracle (repeatable)");
  coh->add_option("--out", coh_out, "output CSV (stdout when omitted)");

  // validate
  auto* val = app.add_subcommand("validate", "parse and echo a configuration without solving");
  std::string val_path;
  val->add_option("config", val_path, "JSON configuration")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sweep) {
      const auto cfg = sweep_model.resolve(false);
      SweepSpec spec;
      spec.base = cfg.params;
      if (sweep_values)
        spec.values = parse_values(*sweep_values);
      else
        spec.values = make_grid(w_min, w_max, w_count, spacing == "lin" ? Spacing::linear : Spacing::log);
      if (!sweep_methods.empty()) {
        spec.methods.clear();
        for (const auto& m : sweep_methods) spec.methods.insert(parse_method(m));
      }
      spec.ensemble = sweep_ens.settings();
      spec.cumulant_mode = parse_cumulant_mode(cumulant_mode);
      spec.config_echo = resolved_json(cfg);
      spec.config_echo.erase("w");  // swept; the per-row values are in the body
      spec.config_echo.erase("regime");
      const auto result = run_sweep(spec);
      emit(sweep_out, result.table.text());
      for (const auto& d : result.diagnostics) std::cerr << "error: " << d << "\n";
      return result.exit_code;
    }

    if (*subs) {
      std::vector<ModelParams> points;
      nlohmann::json echo;
      if (fig3) {
        for (double w : fig3_pump_values()) points.push_back({4, 1.0, w});
      } else {
        const auto cfg = subs_model.resolve();
        points.push_back(cfg.params);
        echo = resolved_json(cfg);
      }
      const auto method = subs_method == "mcwf" ? PopulationSource::mcwf : PopulationSource::oracle;
      for (const auto& p : points) {
        const auto r = run_subspaces(p, method, subs_ens.settings(), echo);
        if (subs_out.empty()) {
          std::cout << r.population_csv.text() << "\n" << r.transition_csv.text() << "\n" << r.net_csv.text() << "\n";
        } else {
          const std::filesystem::path dir(subs_out);
          const std::string tag = "N" + std::to_string(p.N) + "_w" + number_tag(p.w);
          write_file_atomic(dir / ("populations_" + tag + ".csv"), r.population_csv.text());
          write_file_atomic(dir / ("transitions_" + tag + ".csv"), r.transition_csv.text());
          write_file_atomic(dir / ("net_transitions_" + tag + ".csv"), r.net_csv.text());
        }
      }
      return 0;
    }

    if (*coh) {
      const auto cfg = coh_model.resolve();
      std::set<CoherenceMethod> methods;
      for (const auto& m : coh_methods) methods.insert(parse_coherence_method(m));
      if (methods.empty()) methods.insert(CoherenceMethod::analytic);
      const auto r = run_coherence(cfg.params, tau_max, methods, n_tau, resolved_json(cfg));
      emit(coh_out, r.table.text());
      return 0;
    }

    if (*val) {
      const auto cfg = load_config(val_path);
      nlohmann::json out = resolved_json(cfg);
      out["version"] = std::string(kVersion);
      std::cout << out.dump(2) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
