#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "superrad/model.hpp"

using namespace superrad;

TEST(ModelParams, RegimeBoundaries) {
  EXPECT_EQ(classify_regime({10, 1.0, 0.5}), PumpRegime::weak);
  EXPECT_EQ(classify_regime({10, 1.0, 1.0}), PumpRegime::intermediate);
  EXPECT_EQ(classify_regime({10, 1.0, 9.99}), PumpRegime::intermediate);
  EXPECT_EQ(classify_regime({10, 1.0, 10.0}), PumpRegime::strong);
  EXPECT_EQ(classify_regime({1, 1.0, 1.0}), PumpRegime::strong);
}

TEST(ModelParams, ValidationNamesInvariant) {
  EXPECT_NO_THROW(validate({1, 1.0, 0.0}));
  try {
    validate({0, 1.0, 1.0});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("N must be"), std::string::npos);
  }
  EXPECT_THROW(validate({2, -1.0, 1.0}), ValidationError);
  EXPECT_THROW(validate({2, 0.0, 1.0}), ValidationError);
  EXPECT_THROW(validate({2, 1.0, -0.1}), ValidationError);
  EXPECT_THROW(validate({2, 1.0, std::nan("")}), ValidationError);
  EXPECT_THROW(validate({2, std::numeric_limits<double>::infinity(), 1.0}), ValidationError);
}

TEST(CQED, DerivedQuantities) {
  const auto c = derive_cqed(2.0, 4.0, 0.5, 0.25);
  EXPECT_DOUBLE_EQ(c.cooperativity, 4.0 / (0.5 * 4.0));
  EXPECT_DOUBLE_EQ(c.gamma_c, c.cooperativity * 0.5);
  EXPECT_DOUBLE_EQ(c.gamma_c, 2.0 * 2.0 / 4.0);
}

TEST(CQED, FixtureValues) {
  const auto a = derive_cqed(1.0, 10.0, 0.01, 1.0);
  EXPECT_NEAR(a.cooperativity, 10.0, 1e-12);
  EXPECT_NEAR(a.gamma_c, 0.1, 1e-14);
  EXPECT_NEAR(a.n0, 0.1, 1e-14);
  EXPECT_NEAR(a.m0, 1.0, 1e-14);
  const auto b = derive_cqed(1.0, 1.0, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(b.cooperativity, 1.0);
  EXPECT_DOUBLE_EQ(b.gamma_c, 1.0);
  EXPECT_DOUBLE_EQ(b.n0, 1.0);
  EXPECT_DOUBLE_EQ(b.m0, 1.0);
  const auto c = derive_cqed(1.0, 1.0, 1.0, 1e-6);
  EXPECT_NEAR(c.m0, 1e-12, 1e-24);
}

TEST(CQED, NonPositiveInputNamesField) {
  try {
    derive_cqed(1.0, 0.0, 1.0, 1.0);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("kappa"), std::string::npos);
  }
  EXPECT_THROW(derive_cqed(-1.0, 1.0, 1.0, 1.0), ValidationError);
}

TEST(Geometry, CrossSection) {
  const double lam = 0.8;
  EXPECT_DOUBLE_EQ(resonant_cross_section(lam), 3.0 * lam * lam / (2.0 * std::numbers::pi));
}

TEST(Geometry, UnityNormalizations) {
  const double lam = 0.78;
  const double pi = std::numbers::pi;
  const CavityGeometry g{resonant_cross_section(lam), 2.0 * pi, lam, 4.0 * pi * pi, lam * lam * lam};
  const auto c = geometric_critical_numbers(g);
  EXPECT_NEAR(c.n0, 1.0, 1e-12);
  EXPECT_NEAR(c.m0, 1.0, 1e-12);
  CavityGeometry h = g;
  h.Q *= 1e12;
  EXPECT_NEAR(geometric_critical_numbers(h).m0, 1e-12, 1e-24);
  h.F = -1.0;
  EXPECT_THROW(geometric_critical_numbers(h), ValidationError);
}

TEST(Geometry, SubWavelengthVolumeWarns) {
  CavityGeometry small{1.0, 100.0, 1.0, 1e4, 0.5};
  CavityGeometry big{1.0, 100.0, 1.0, 1e4, 10.0};
  EXPECT_FALSE(geometry_warnings(small).empty());
  EXPECT_TRUE(geometry_warnings(big).empty());
}
