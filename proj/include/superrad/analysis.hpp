#pragma once

// Emission rate and uncorrelated baseline, (J, M) subspace populations, and
// the inter-subspace transition-rate diagram.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "superrad/errors.hpp"
#include "superrad/hilbert.hpp"
#include "superrad/io.hpp"
#include "superrad/mcwf.hpp"
#include "superrad/model.hpp"
#include "superrad/oracle.hpp"

namespace superrad {

// ---------------------------------------------------------------------------
// Emission

enum class EmissionCharacter { superradiant, subradiant, uncorrelated };

inline std::string_view to_string(EmissionCharacter c) {
  switch (c) {
    case EmissionCharacter::superradiant: return "superradiant";
    case EmissionCharacter::subradiant: return "subradiant";
    case EmissionCharacter::uncorrelated: return "uncorrelated";
  }
  return "unknown";
}

struct EmissionReport {
  double I = 0.0;         // gamma_c <J+J->
  double I_uncorr = 0.0;  // N_e gamma_c
  double N_e = 0.0;       // N/2 + <Jz>
  double I_err = 0.0;     // standard errors; zero for exact sources
  double N_e_err = 0.0;
  double I_uncorr_err = 0.0;
  PumpRegime regime = PumpRegime::weak;
  EmissionCharacter character = EmissionCharacter::uncorrelated;

  /// (I - I_uncorr) in units of the combined standard error; infinite for exact sources.
  double significance() const {
    const double se = std::hypot(I_err, I_uncorr_err);
    const double diff = I - I_uncorr;
    if (se == 0.0) return diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
    return diff / se;
  }
};

namespace detail {

inline EmissionReport make_report(const ModelParams& p, double jpjm, double jz, double jpjm_err, double jz_err) {
  EmissionReport r;
  r.I = p.gamma_c * jpjm;
  r.N_e = 0.5 * p.N + jz;
  r.I_uncorr = r.N_e * p.gamma_c;
  r.I_err = p.gamma_c * jpjm_err;
  r.N_e_err = jz_err;
  r.I_uncorr_err = p.gamma_c * jz_err;
  r.regime = classify_regime(p);
  const double tol = 1e-12 * std::max(1.0, std::abs(r.I_uncorr));
  if (r.I > r.I_uncorr + tol)
    r.character = EmissionCharacter::superradiant;
  else if (r.I < r.I_uncorr - tol)
    r.character = EmissionCharacter::subradiant;
  return r;
}

}  // namespace detail

inline EmissionReport emission_report(const ModelParams& params, const SteadyStateEstimate& est) {
  const auto p = validate(params).params;
  const auto& jpjm = est.at("JpJm");
  const auto& jz = est.at("Jz");
  return detail::make_report(p, jpjm.mean, jz.mean, jpjm.std_error, jz.std_error);
}

inline EmissionReport emission_report(const ModelParams& params, const DensityMatrix& rho) {
  const auto p = validate(params).params;
  if (rho.rho.rows() != static_cast<Eigen::Index>(hilbert_dim(p.N)))
    throw ArgumentError("density matrix dimension does not match N");
  return detail::make_report(p, rho.expectation(build_collective(CollectiveOp::JpJm, p.N)),
                             rho.expectation(build_collective(CollectiveOp::J_z, p.N)), 0.0, 0.0);
}

inline EmissionReport emission_report(const ModelParams& params, const StateVector& psi) {
  const auto p = validate(params).params;
  if (psi.size() != static_cast<Eigen::Index>(hilbert_dim(p.N)))
    throw ArgumentError("state dimension does not match N");
  const double n2 = psi.squaredNorm();
  return detail::make_report(p, apply_j_minus(psi, p.N).squaredNorm() / n2,
                             expectation(build_collective(CollectiveOp::J_z, p.N), psi) / n2, 0.0, 0.0);
}

// ---------------------------------------------------------------------------
// Subspace populations

enum class PopulationSource { mcwf, oracle, state };

inline std::string_view to_string(PopulationSource s) {
  switch (s) {
    case PopulationSource::mcwf: return "mcwf";
    case PopulationSource::oracle: return "oracle";
    case PopulationSource::state: return "state";
  }
  return "unknown";
}

struct SubspaceEntry {
  int twice_j = 0;
  int twice_m = 0;
  double P = 0.0;
  double P_err = 0.0;
};

struct SubspaceTable {
  std::vector<SubspaceEntry> entries;  // decomposition order
  PopulationSource source = PopulationSource::oracle;

  double total() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.P;
    return s;
  }

  std::optional<SubspaceEntry> find(int twice_j, int twice_m) const {
    for (const auto& e : entries)
      if (e.twice_j == twice_j && e.twice_m == twice_m) return e;
    return std::nullopt;
  }
};

inline SubspaceTable subspace_populations(const JMDecomposition& dec, const DensityMatrix& rho) {
  if (rho.rho.rows() != static_cast<Eigen::Index>(dec.local_index.size()))
    throw ArgumentError("density matrix dimension does not match decomposition");
  SubspaceTable t;
  t.source = PopulationSource::oracle;
  for (const auto& sub : dec.subspaces) {
    const auto& states = dec.sectors[static_cast<std::size_t>(sub.sector)].states;
    const auto d = static_cast<Eigen::Index>(states.size());
    Eigen::MatrixXcd block(d, d);
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c)
        block(r, c) = rho.rho(states[static_cast<std::size_t>(r)], states[static_cast<std::size_t>(c)]);
    const Eigen::MatrixXcd b = sub.basis.cast<cplx>();
    t.entries.push_back({sub.twice_j, sub.twice_m, (b.adjoint() * block * b).trace().real(), 0.0});
  }
  return t;
}

inline SubspaceTable subspace_populations(const JMDecomposition& dec, const StateVector& psi) {
  if (psi.size() != static_cast<Eigen::Index>(dec.local_index.size()))
    throw ArgumentError("state dimension does not match decomposition");
  SubspaceTable t;
  t.source = PopulationSource::state;
  const double n2 = psi.squaredNorm();
  for (const auto& sub : dec.subspaces)
    t.entries.push_back({sub.twice_j, sub.twice_m, subspace_weight(dec, sub, psi) / n2, 0.0});
  return t;
}

inline SubspaceTable subspace_populations(const JMDecomposition& dec, const SteadyStateEstimate& est) {
  if (est.populations.empty()) throw ArgumentError("estimate carries no P_{M,J} samples");
  if (est.populations.size() != dec.subspaces.size())
    throw ArgumentError("estimate populations do not match decomposition");
  SubspaceTable t;
  t.source = PopulationSource::mcwf;
  for (std::size_t i = 0; i < dec.subspaces.size(); ++i) {
    const auto& sub = dec.subspaces[i];
    if (est.population_labels[i] != std::make_pair(sub.twice_j, sub.twice_m))
      throw ArgumentError("estimate population labels do not match decomposition");
    t.entries.push_back({sub.twice_j, sub.twice_m, est.populations[i].mean, est.populations[i].std_error});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Transition diagram

enum class Mechanism { decay, repump };

inline std::string_view to_string(Mechanism m) { return m == Mechanism::decay ? "decay" : "repump"; }

struct TransitionEdge {
  int from_twice_j = 0, from_twice_m = 0;
  int to_twice_j = 0, to_twice_m = 0;
  Mechanism mechanism = Mechanism::decay;
  double rate = 0.0;
};

/// Population-weighted comparison of the two directions between a pair of subspaces.
struct NetEdge {
  int from_twice_j = 0, from_twice_m = 0;  // net flow goes from here
  int to_twice_j = 0, to_twice_m = 0;
  Mechanism dominant = Mechanism::decay;
  double forward_flux = 0.0;   // P_from * rate(from -> to)
  double backward_flux = 0.0;  // P_to * rate(to -> from)
  double forward_rate = 0.0;   // raw rates, before population weighting
  double backward_rate = 0.0;
  Mechanism raw_dominant = Mechanism::decay;  // larger raw rate
};

struct TransitionDiagram {
  std::vector<TransitionEdge> edges;
  std::vector<NetEdge> net;  // empty unless populations were supplied

  /// Sum of outgoing rates of one mechanism from a subspace.
  double total_rate(int twice_j, int twice_m, Mechanism mech) const {
    double s = 0.0;
    for (const auto& e : edges)
      if (e.from_twice_j == twice_j && e.from_twice_m == twice_m && e.mechanism == mech) s += e.rate;
    return s;
  }

  std::optional<double> rate(int fj, int fm, int tj, int tm, Mechanism mech) const {
    for (const auto& e : edges)
      if (e.from_twice_j == fj && e.from_twice_m == fm && e.to_twice_j == tj && e.to_twice_m == tm &&
          e.mechanism == mech)
        return e.rate;
    return std::nullopt;
  }
};

namespace detail {

// Average over the source basis of sum_k ||P_target op_k |v>||^2, accumulated per target subspace.
template <class ApplyOps>
std::vector<double> averaged_branching(const JMDecomposition& dec, const JMSubspace& src, int target_sector,
                                       ApplyOps&& apply_ops) {
  const auto& targets = dec.sector_subspaces[static_cast<std::size_t>(target_sector)];
  std::vector<double> acc(targets.size(), 0.0);
  for (int xi = 0; xi < src.multiplicity; ++xi) {
    const StateVector v = dec.basis_vector(src, xi);
    apply_ops(v, [&](const StateVector& out) {
      const Eigen::VectorXcd local = dec.restrict_to(out, target_sector);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto& tgt = dec.subspaces[static_cast<std::size_t>(targets[t])];
        acc[t] += (tgt.basis.transpose() * local).squaredNorm();
      }
    });
  }
  for (auto& a : acc) a /= src.multiplicity;
  return acc;
}

}  // namespace detail

/// Decay (J, M) -> (J, M-1) at gamma_c * avg_xi ||P J- |J,M,xi>||^2 and repump
/// (J, M) -> (J', M+1) at w * avg_xi sum_j ||P sigma+^(j) |J,M,xi>||^2. Zero
/// rates are omitted. With populations, net edges compare population-weighted
/// opposing fluxes for every connected pair.
inline TransitionDiagram transition_diagram(const ModelParams& params, const JMDecomposition& dec,
                                            const SubspaceTable* populations = nullptr) {
  const auto p = validate(params).params;
  if (dec.N != p.N) throw ArgumentError("decomposition size does not match N");
  const int N = p.N;
  constexpr double kZero = 1e-13;
  TransitionDiagram diag;
  for (const auto& src : dec.subspaces) {
    if (src.sector > 0) {
      const auto branch = detail::averaged_branching(
          dec, src, src.sector - 1, [&](const StateVector& v, auto&& sink) { sink(apply_j_minus(v, N)); });
      const auto& targets = dec.sector_subspaces[static_cast<std::size_t>(src.sector - 1)];
      for (std::size_t t = 0; t < targets.size(); ++t) {
        if (branch[t] <= kZero) continue;
        const auto& tgt = dec.subspaces[static_cast<std::size_t>(targets[t])];
        diag.edges.push_back(
            {src.twice_j, src.twice_m, tgt.twice_j, tgt.twice_m, Mechanism::decay, p.gamma_c * branch[t]});
      }
    }
    if (src.sector < N && p.w > 0.0) {
      const auto branch = detail::averaged_branching(dec, src, src.sector + 1, [&](const StateVector& v, auto&& sink) {
        for (int j = 0; j < N; ++j) sink(apply_sigma_plus(v, j));
      });
      const auto& targets = dec.sector_subspaces[static_cast<std::size_t>(src.sector + 1)];
      for (std::size_t t = 0; t < targets.size(); ++t) {
        if (branch[t] <= kZero) continue;
        const auto& tgt = dec.subspaces[static_cast<std::size_t>(targets[t])];
        diag.edges.push_back({src.twice_j, src.twice_m, tgt.twice_j, tgt.twice_m, Mechanism::repump, p.w * branch[t]});
      }
    }
  }

  if (populations) {
    auto pop = [&](int tj, int tm) {
      const auto e = populations->find(tj, tm);
      if (!e) throw ArgumentError("population table lacks a subspace present in the diagram");
      return e->P;
    };
    std::vector<bool> used(diag.edges.size(), false);
    for (std::size_t i = 0; i < diag.edges.size(); ++i) {
      if (used[i]) continue;
      used[i] = true;
      const auto& e = diag.edges[i];
      double fwd = pop(e.from_twice_j, e.from_twice_m) * e.rate;
      double back = 0.0, back_rate = 0.0;
      Mechanism back_mech = e.mechanism == Mechanism::decay ? Mechanism::repump : Mechanism::decay;
      for (std::size_t k = i + 1; k < diag.edges.size(); ++k) {
        const auto& r = diag.edges[k];
        if (!used[k] && r.from_twice_j == e.to_twice_j && r.from_twice_m == e.to_twice_m &&
            r.to_twice_j == e.from_twice_j && r.to_twice_m == e.from_twice_m) {
          used[k] = true;
          back += pop(r.from_twice_j, r.from_twice_m) * r.rate;
          back_rate += r.rate;
          back_mech = r.mechanism;
        }
      }
      const Mechanism raw = e.rate >= back_rate ? e.mechanism : back_mech;
      NetEdge n;
      if (fwd >= back) {
        n = {e.from_twice_j, e.from_twice_m, e.to_twice_j, e.to_twice_m, e.mechanism, fwd, back, e.rate, back_rate, raw};
      } else {
        n = {e.to_twice_j, e.to_twice_m, e.from_twice_j, e.from_twice_m, back_mech, back, fwd, back_rate, e.rate, raw};
      }
      diag.net.push_back(n);
    }
  }
  return diag;
}

// ---------------------------------------------------------------------------
// CSV / JSON forms

inline std::string half_integer(int twice) {
  if (twice % 2 == 0) return std::to_string(twice / 2);
  return std::to_string(twice) + "/2";
}

inline CsvTable population_csv(const SubspaceTable& t) {
  CsvTable csv({"J", "M", "P", "P_err"});
  for (const auto& e : t.entries)
    csv.add_row({half_integer(e.twice_j), half_integer(e.twice_m), format_number(e.P), format_number(e.P_err)});
  return csv;
}

inline CsvTable transition_csv(const TransitionDiagram& d) {
  CsvTable csv({"J", "M", "J'", "M'", "mechanism", "rate"});
  for (const auto& e : d.edges)
    csv.add_row({half_integer(e.from_twice_j), half_integer(e.from_twice_m), half_integer(e.to_twice_j),
                 half_integer(e.to_twice_m), std::string(to_string(e.mechanism)), format_number(e.rate)});
  return csv;
}

inline CsvTable net_transition_csv(const TransitionDiagram& d) {
  CsvTable csv({"J", "M", "J'", "M'", "dominant", "forward_flux", "backward_flux", "raw_dominant", "forward_rate",
                "backward_rate"});
  for (const auto& e : d.net)
    csv.add_row({half_integer(e.from_twice_j), half_integer(e.from_twice_m), half_integer(e.to_twice_j),
                 half_integer(e.to_twice_m), std::string(to_string(e.dominant)), format_number(e.forward_flux),
                 format_number(e.backward_flux), std::string(to_string(e.raw_dominant)),
                 format_number(e.forward_rate), format_number(e.backward_rate)});
  return csv;
}

/// Regression baseline record for one oracle steady state.
inline nlohmann::json oracle_fixture(const ModelParams& params, const DensityMatrix& rho, const JMDecomposition& dec) {
  const auto p = validate(params).params;
  const auto rep = emission_report(p, rho);
  nlohmann::json j;
  j["params"] = {{"N", p.N}, {"gamma_c", p.gamma_c}, {"w", p.w}};
  j["observables"] = {{"JpJm", rho.expectation(build_collective(CollectiveOp::JpJm, p.N))},
                      {"Jz", rho.expectation(build_collective(CollectiveOp::J_z, p.N))},
                      {"sigma_z1", rho.expectation(build_single_atom(SingleAtomOp::sigma_z, 0, p.N))},
                      {"I", rep.I},
                      {"N_e", rep.N_e}};
  nlohmann::json table = nlohmann::json::array();
  for (const auto& e : subspace_populations(dec, rho).entries)
    table.push_back({{"twice_J", e.twice_j}, {"twice_M", e.twice_m}, {"P", e.P}});
  j["populations"] = table;
  j["residual"] = rho.residual;
  return j;
}

}  // namespace superrad
