#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "superrad/analysis.hpp"

using namespace superrad;

namespace {

Eigen::MatrixXcd dense(const SparseOperator& op) { return Eigen::MatrixXcd(op.matrix); }

// Projector onto J^2 = J(J+1) and Jz = M built as products of (A - a')/(a - a')
// over the other eigenvalues, with no reference to any eigenbasis.
Eigen::MatrixXcd polynomial_projector(int N, int twice_j, int twice_m) {
  const auto d = static_cast<Eigen::Index>(hilbert_dim(N));
  const Eigen::MatrixXcd j2 = dense(build_collective(CollectiveOp::J_squared, N));
  const Eigen::MatrixXcd jz = dense(build_collective(CollectiveOp::J_z, N));
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(d, d);
  Eigen::MatrixXcd p = id;
  const double lam = 0.25 * twice_j * (twice_j + 2);
  for (int tj = N % 2; tj <= N; tj += 2) {
    if (tj == twice_j) continue;
    const double other = 0.25 * tj * (tj + 2);
    p = p * (j2 - other * id) / (lam - other);
  }
  for (int tm = -N; tm <= N; tm += 2) {
    if (tm == twice_m) continue;
    p = p * (jz - 0.5 * tm * id) / (0.5 * (twice_m - tm));
  }
  return p;
}

const char* fixture_path() { return SUPERRAD_FIXTURES "/oracle_n4.json"; }

}  // namespace

TEST(Emission, TwoAtomReferenceStates) {
  const ModelParams p{2, 1.0, 1.0};
  const auto ee = emission_report(p, all_excited(2));
  EXPECT_NEAR(ee.I, 2.0, 1e-14);
  EXPECT_NEAR(ee.N_e, 2.0, 1e-14);
  EXPECT_NEAR(ee.I_uncorr, 2.0, 1e-14);
  EXPECT_EQ(ee.character, EmissionCharacter::uncorrelated);

  const StateVector sym = (basis_state(2, 0b01) + basis_state(2, 0b10)) / std::sqrt(2.0);
  const auto s = emission_report(p, sym);
  EXPECT_NEAR(s.I, 2.0, 1e-14);
  EXPECT_NEAR(s.I_uncorr, 1.0, 1e-14);
  EXPECT_EQ(s.character, EmissionCharacter::superradiant);

  const StateVector singlet = (basis_state(2, 0b01) - basis_state(2, 0b10)) / std::sqrt(2.0);
  const auto a = emission_report(p, singlet);
  EXPECT_NEAR(a.I, 0.0, 1e-14);
  EXPECT_NEAR(a.I_uncorr, 1.0, 1e-14);
  EXPECT_EQ(a.character, EmissionCharacter::subradiant);
}

TEST(Emission, MissingObservableAndMismatch) {
  SteadyStateEstimate est;
  est.observables["Jz"] = {0.0, 0.0};
  EXPECT_THROW(emission_report({2, 1.0, 1.0}, est), ArgumentError);
  EXPECT_THROW(emission_report({3, 1.0, 1.0}, all_ground(2)), ArgumentError);
}

TEST(Emission, OracleFlagsMatchRegimes) {
  const auto strong = emission_report({4, 1.0, 2.0}, steady_state_dm(build_liouvillian({4, 1.0, 2.0})));
  EXPECT_EQ(strong.character, EmissionCharacter::superradiant);
  const auto weak = emission_report({4, 1.0, 0.1}, steady_state_dm(build_liouvillian({4, 1.0, 0.1})));
  EXPECT_EQ(weak.character, EmissionCharacter::subradiant);
  EXPECT_GE(weak.I, 0.0);
  EXPECT_GE(weak.N_e, 0.0);
  EXPECT_LE(weak.N_e, 4.0);
}

TEST(Emission, SignificanceUsesCombinedError) {
  SteadyStateEstimate est;
  est.observables["JpJm"] = {3.0, 0.1};
  est.observables["Jz"] = {0.0, 0.0};
  const auto r = emission_report({2, 1.0, 1.0}, est);  // I = 3, I_uncorr = 1
  EXPECT_NEAR(r.significance(), 20.0, 1e-12);
}

TEST(Populations, PureStates) {
  const auto dec = jm_decomposition(3);
  const auto t = subspace_populations(dec, all_excited(3));
  EXPECT_NEAR(t.find(3, 3)->P, 1.0, 1e-14);
  EXPECT_NEAR(t.total(), 1.0, 1e-14);

  const auto d2 = jm_decomposition(2);
  const StateVector singlet = (basis_state(2, 0b01) - basis_state(2, 0b10)) / std::sqrt(2.0);
  EXPECT_NEAR(subspace_populations(d2, singlet).find(0, 0)->P, 1.0, 1e-14);
}

TEST(Populations, OracleTableIsComplete) {
  const auto dec = jm_decomposition(2);
  const auto t = subspace_populations(dec, steady_state_dm(build_liouvillian({2, 1.0, 1.0})));
  EXPECT_EQ(t.entries.size(), 4U);
  EXPECT_NEAR(t.total(), 1.0, 1e-10);
  for (const auto& e : t.entries) EXPECT_GE(e.P, -1e-9);
  EXPECT_THROW(subspace_populations(jm_decomposition(3), steady_state_dm(build_liouvillian({2, 1.0, 1.0}))),
               ArgumentError);
}

TEST(Populations, OracleMatchesPolynomialProjectors) {
  const int N = 4;
  const auto rho = steady_state_dm(build_liouvillian({N, 1.0, 2.0}));
  const auto t = subspace_populations(jm_decomposition(N), rho);
  for (const auto& e : t.entries)
    EXPECT_NEAR((polynomial_projector(N, e.twice_j, e.twice_m) * rho.rho).trace().real(), e.P, 1e-10);
}

TEST(Populations, FrozenOracleFixtures) {
  std::ifstream in(fixture_path());
  ASSERT_TRUE(in) << fixture_path();
  const auto fixtures = nlohmann::json::parse(in);
  const auto dec = jm_decomposition(4);
  ASSERT_EQ(fixtures.size(), 3U);
  for (const auto& f : fixtures) {
    const ModelParams p{f["params"]["N"], f["params"]["gamma_c"], f["params"]["w"]};
    const auto now = oracle_fixture(p, steady_state_dm(build_liouvillian(p)), dec);
    for (const auto& [k, v] : f["observables"].items())
      EXPECT_NEAR(now["observables"][k].get<double>(), v.get<double>(), 1e-9) << "w=" << p.w << " " << k;
    ASSERT_EQ(now["populations"].size(), f["populations"].size());
    for (std::size_t i = 0; i < f["populations"].size(); ++i) {
      EXPECT_EQ(now["populations"][i]["twice_J"], f["populations"][i]["twice_J"]);
      EXPECT_EQ(now["populations"][i]["twice_M"], f["populations"][i]["twice_M"]);
      EXPECT_NEAR(now["populations"][i]["P"].get<double>(), f["populations"][i]["P"].get<double>(), 1e-9);
    }
  }
}

TEST(Populations, WeakAndStrongPumpPatterns) {
  const auto dec = jm_decomposition(4);
  const auto weak = subspace_populations(dec, steady_state_dm(build_liouvillian({4, 1.0, 0.1})));
  double low = 0.0, high = 0.0;
  for (const auto& e : weak.entries) (e.twice_j <= 2 ? low : high) += e.P;
  EXPECT_GT(low, high);
  const auto strong = subspace_populations(dec, steady_state_dm(build_liouvillian({4, 1.0, 10.0})));
  EXPECT_GT(strong.find(4, 4)->P, 0.5);
}

TEST(Transitions, DecayMatchesLadderAlgebra) {
  for (int N = 1; N <= 6; ++N) {
    const auto dec = jm_decomposition(N);
    const auto diag = transition_diagram({N, 1.0, 0.0}, dec);
    for (const auto& s : dec.subspaces) {
      const double J = s.J(), M = s.M();
      const double expected = (J + M) * (J - M + 1.0);
      const auto r = diag.rate(s.twice_j, s.twice_m, s.twice_j, s.twice_m - 2, Mechanism::decay);
      if (expected == 0.0) {
        EXPECT_FALSE(r.has_value());
        EXPECT_EQ(diag.total_rate(s.twice_j, s.twice_m, Mechanism::decay), 0.0);
      } else {
        ASSERT_TRUE(r.has_value());
        EXPECT_NEAR(*r, expected, 1e-8);
      }
    }
    for (const auto& e : diag.edges) {
      EXPECT_EQ(e.mechanism, Mechanism::decay);  // w = 0: no repump edges
      EXPECT_EQ(e.to_twice_j, e.from_twice_j);
      EXPECT_EQ(e.to_twice_m, e.from_twice_m - 2);
    }
  }
  const auto d4 = transition_diagram({4, 1.0, 1.0}, jm_decomposition(4));
  EXPECT_NEAR(*d4.rate(4, 4, 4, 2, Mechanism::decay), 4.0, 1e-12);
}

TEST(Transitions, CompletenessSumRule) {
  const int N = 5;
  const double w = 0.7, g = 1.3;
  const auto dec = jm_decomposition(N);
  const auto diag = transition_diagram({N, g, w}, dec);
  for (const auto& s : dec.subspaces) {
    double jpjm = 0.0, ground = 0.0;
    for (int xi = 0; xi < s.multiplicity; ++xi) {
      const auto v = dec.basis_vector(s, xi);
      jpjm += apply_j_minus(v, N).squaredNorm();
      for (int j = 0; j < N; ++j) ground += apply_sigma_plus(v, j).squaredNorm();
    }
    jpjm /= s.multiplicity;
    ground /= s.multiplicity;
    EXPECT_NEAR(diag.total_rate(s.twice_j, s.twice_m, Mechanism::decay), g * jpjm, 1e-8);
    EXPECT_NEAR(diag.total_rate(s.twice_j, s.twice_m, Mechanism::repump), w * ground, 1e-8);
    // Every state in the subspace has N/2 - M ground atoms.
    EXPECT_NEAR(ground, 0.5 * (N - s.twice_m), 1e-10);
  }
}

TEST(Transitions, RepumpSelectionRules) {
  const auto diag = transition_diagram({4, 1.0, 1.0}, jm_decomposition(4));
  for (const auto& e : diag.edges) {
    EXPECT_GE(e.rate, 0.0);
    if (e.mechanism == Mechanism::repump) {
      EXPECT_EQ(e.to_twice_m, e.from_twice_m + 2);
      EXPECT_LE(std::abs(e.to_twice_j - e.from_twice_j), 2);
    }
  }
}

TEST(Transitions, RepumpBranchingAgainstPolynomialProjectors) {
  // (J=1, M=-1) at N=4 branches into J' in {0, 1, 2} at M' = 0.
  const int N = 4;
  const double w = 1.0;
  const auto dec = jm_decomposition(N);
  const auto diag = transition_diagram({N, 1.0, w}, dec);
  const Eigen::MatrixXcd src = polynomial_projector(N, 2, -2);
  const double d = src.trace().real();
  ASSERT_NEAR(d, 3.0, 1e-10);
  double sum = 0.0;
  for (int tj : {0, 2, 4}) {
    const Eigen::MatrixXcd dst = polynomial_projector(N, tj, 0);
    double rate = 0.0;
    for (int j = 0; j < N; ++j) {
      const Eigen::MatrixXcd sp = dense(build_single_atom(SingleAtomOp::sigma_plus, j, N));
      rate += (dst * sp * src * sp.adjoint()).trace().real();
    }
    rate *= w / d;
    sum += rate;
    const auto r = diag.rate(2, -2, tj, 0, Mechanism::repump);
    ASSERT_TRUE(r.has_value()) << "2J'=" << tj;
    EXPECT_NEAR(*r, rate, 1e-10) << "2J'=" << tj;
  }
  EXPECT_NEAR(sum, w * 3.0, 1e-10);  // three ground atoms at M = -1
}

TEST(Transitions, DecayAgainstPolynomialProjectors) {
  const int N = 4;
  const auto diag = transition_diagram({N, 1.0, 1.0}, jm_decomposition(N));
  const Eigen::MatrixXcd jm = dense(build_collective(CollectiveOp::J_minus, N));
  for (int tj : {4, 2}) {
    for (int tm = tj; tm > -tj; tm -= 2) {
      const Eigen::MatrixXcd src = polynomial_projector(N, tj, tm);
      const Eigen::MatrixXcd dst = polynomial_projector(N, tj, tm - 2);
      const double rate = (dst * jm * src * jm.adjoint()).trace().real() / src.trace().real();
      EXPECT_NEAR(*diag.rate(tj, tm, tj, tm - 2, Mechanism::decay), rate, 1e-10);
    }
  }
}

TEST(Transitions, NetAnnotationsNeedPopulations) {
  const auto dec = jm_decomposition(4);
  const ModelParams p{4, 1.0, 10.0};
  EXPECT_TRUE(transition_diagram(p, dec).net.empty());
  const auto pops = subspace_populations(dec, steady_state_dm(build_liouvillian(p)));
  const auto diag = transition_diagram(p, dec, &pops);
  ASSERT_FALSE(diag.net.empty());
  for (const auto& n : diag.net) {
    EXPECT_GE(n.forward_flux, n.backward_flux);
    if (n.forward_rate > n.backward_rate) EXPECT_EQ(n.raw_dominant, n.dominant);
    if (n.forward_rate < n.backward_rate) EXPECT_NE(n.raw_dominant, n.dominant);
    EXPECT_NEAR(n.forward_flux, pops.find(n.from_twice_j, n.from_twice_m)->P * n.forward_rate, 1e-12);
    EXPECT_NEAR(n.backward_flux, pops.find(n.to_twice_j, n.to_twice_m)->P * n.backward_rate, 1e-12);
  }
  // Detailed flux balance is not required, but total in = total out for each subspace.
  for (const auto& s : dec.subspaces) {
    double in = 0.0, out = 0.0;
    for (const auto& e : diag.edges) {
      if (e.from_twice_j == s.twice_j && e.from_twice_m == s.twice_m) out += pops.find(s.twice_j, s.twice_m)->P * e.rate;
      if (e.to_twice_j == s.twice_j && e.to_twice_m == s.twice_m)
        in += pops.find(e.from_twice_j, e.from_twice_m)->P * e.rate;
    }
    EXPECT_NEAR(in, out, 1e-9) << "2J=" << s.twice_j << " 2M=" << s.twice_m;
  }
}

TEST(Csv, PopulationAndTransitionTables) {
  const auto dec = jm_decomposition(2);
  const auto pops = subspace_populations(dec, all_excited(2));
  const auto csv = population_csv(pops);
  EXPECT_EQ(csv.row_count(), 4U);
  EXPECT_EQ(csv.body().substr(0, 14), "J,M,P,P_err\n1,");
  const auto tcsv = transition_csv(transition_diagram({3, 1.0, 1.0}, jm_decomposition(3)));
  EXPECT_NE(tcsv.body().find("3/2,3/2,3/2,1/2,decay,3"), std::string::npos);
}
