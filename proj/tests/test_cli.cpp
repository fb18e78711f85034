#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("superrad_cli_" + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path file(const std::string& name, const std::string& text) const {
    const auto p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  CliRun run(const std::string& args) const {
    const auto err_path = dir_ / "stderr.txt";
    const std::string cmd = std::string("'") + SUPERRAD_CLI + "' " + args + " 2>'" + err_path.string() + "'";
    CliRun r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream e(err_path);
    r.err.assign(std::istreambuf_iterator<char>(e), {});
    return r;
  }

  static std::string body(const std::string& text) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      const auto end = text.find('\n', pos);
      const auto line = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos + 1);
      if (line.rfind("# ", 0) != 0) out += line;
      if (end == std::string::npos) break;
      pos = end + 1;
    }
    return out;
  }

  static nlohmann::json header(const std::string& text) {
    return nlohmann::json::parse(text.substr(2, text.find('\n') - 2));
  }

  fs::path dir_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_F(CliTest, VersionAndUsage) {
  EXPECT_EQ(run("--version").code, 0);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
}

TEST_F(CliTest, ValidateWellFormed) {
  const auto cfg = file("ok.json", R"({"N": 10, "gamma_c": 1, "w": 5})");
  const auto r = run("validate " + cfg.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["N"], 10);
  EXPECT_EQ(j["regime"], "intermediate");
  EXPECT_TRUE(j.contains("version"));
}

TEST_F(CliTest, ValidateUnknownKey) {
  const auto cfg = file("bad.json", R"({"N": 4, "gamma_c": 1, "w": 2, "pump": 3})");
  const auto r = run("validate " + cfg.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("pump"), std::string::npos) << r.err;
}

TEST_F(CliTest, ValidateNegativeDecay) {
  const auto cfg = file("neg.json", R"({"N": 4, "gamma_c": -1, "w": 2})");
  const auto r = run("validate " + cfg.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("gamma_c"), std::string::npos) << r.err;
}

TEST_F(CliTest, ValidateParseErrorHasLine) {
  const auto cfg = file("broken.json", "{\n  \"N\": 4,\n  \"gamma_c\" 1\n}\n");
  const auto r = run("validate " + cfg.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST_F(CliTest, SweepSingleAtomOracle) {
  const auto r = run("sweep -N 1 --gamma-c 1 --values 1 --method oracle");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\n1,"), std::string::npos);
  const auto b = body(r.out);
  EXPECT_EQ(b.substr(0, b.find('\n')), "w,regime,N_e,I_uncorr,I_oracle,N_e_oracle,sz1_oracle,error");
  EXPECT_NE(b.find(",0.5,"), std::string::npos) << b;
  EXPECT_EQ(header(r.out)["version"], "0.3.0");
}

TEST_F(CliTest, SweepEmptyValues) {
  const auto r = run("sweep -N 4 --values , --method cumulant");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("empty"), std::string::npos) << r.err;
}

TEST_F(CliTest, SweepOracleCap) {
  const auto r = run("sweep -N 8 --values 1 --method oracle");
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, SweepRowErrorExitCode) {
  const auto out = dir_ / "rows.csv";
  const auto r = run("sweep -N 4 --values 0,2 --method cumulant --out " + out.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("w=0 cumulant"), std::string::npos) << r.err;
  const auto text = slurp(out);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);  // two header lines, column line, two rows
}

TEST_F(CliTest, SweepDefaultGridToFile) {
  const auto out = dir_ / "fig2.csv";
  const auto r = run("sweep -N 10 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  const auto text = slurp(out);
  const auto h = header(text);
  EXPECT_EQ(h["config"]["N"], 10);
  EXPECT_FALSE(h["config"].contains("w"));
  EXPECT_EQ(h["sweep"]["values"].size(), 20U);
  EXPECT_EQ(h["sweep"]["values"][0], 0.05);
  EXPECT_EQ(h["sweep"]["values"][19], 100.0);
  EXPECT_FALSE(fs::exists(out.string() + ".tmp"));
}

TEST_F(CliTest, SweepDeterministicAcrossThreads) {
  const std::string base = "sweep -N 3 --values 0.5,2 --method mcwf --ntraj 30 --t1 4 --T 16 --seed 5";
  const auto a = run(base + " --threads 1");
  const auto b = run(base + " --threads 3");
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(body(a.out), body(b.out));
  EXPECT_NE(body(run(base.substr(0, base.size() - 1) + "6 --threads 1").out), body(a.out));
}

TEST_F(CliTest, SweepConfigFileWithOverride) {
  const auto cfg = file("c.json", R"({"N": 2, "gamma_c": 1, "w": 1})");
  const auto r = run("sweep --config " + cfg.string() + " -N 3 --values 2 --method oracle");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(header(r.out)["config"]["N"], 3);
  EXPECT_NE(body(r.out).find("2.258"), std::string::npos);
}

TEST_F(CliTest, SubspacesFig3Preset) {
  const auto r = run("subspaces --fig3 --out " + dir_.string());
  ASSERT_EQ(r.code, 0) << r.err;
  int count = 0;
  for (const auto& tag : {"N4_w0p1", "N4_w2", "N4_w10"})
    for (const auto& kind : {"populations_", "transitions_", "net_transitions_"}) {
      const auto p = dir_ / (std::string(kind) + tag + ".csv");
      EXPECT_TRUE(fs::exists(p)) << p;
      count += fs::exists(p) ? 1 : 0;
    }
  EXPECT_EQ(count, 9);
  const auto pops = slurp(dir_ / "populations_N4_w0p1.csv");
  EXPECT_EQ(header(pops)["config"]["w"], 0.1);
  EXPECT_NE(pops.find("1,-1,0.502"), std::string::npos);
}

TEST_F(CliTest, SubspacesTwoAtomsToStdout) {
  const auto r = run("subspaces -N 2 --gamma-c 1 -w 1 --method oracle");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("J,M,P,P_err"), std::string::npos);
  EXPECT_NE(r.out.find("J,M,J',M',mechanism,rate"), std::string::npos);
}

TEST_F(CliTest, SubspacesCapability) {
  const auto r = run("subspaces -N 20 -w 1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("14"), std::string::npos) << r.err;
}

TEST_F(CliTest, CoherenceAnalyticHeader) {
  const auto r = run("coherence -N 10 --gamma-c 1 -w 5 --tau-max 3 --n-tau 7");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto h = header(r.out);
  EXPECT_EQ(h["t_coh"], 0.5);
  EXPECT_EQ(h["inverse_rate"], 1.0);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 9);
}

TEST_F(CliTest, CoherenceBothMethods) {
  const auto r = run("coherence -N 3 -w 1.5 --tau-max 4 --method analytic --method oracle");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("tau,re_C,im_C,abs_C_normalized,analytic_normalized"), std::string::npos);
  EXPECT_TRUE(header(r.out).contains("fitted_oracle_rate"));
}

TEST_F(CliTest, CoherenceRejectsNonPositiveTau) {
  EXPECT_EQ(run("coherence -N 3 -w 1 --tau-max 0").code, 1);
  EXPECT_EQ(run("coherence -N 3 -w 1 --tau-max -2").code, 1);
  EXPECT_EQ(run("coherence -N 3 -w 1").code, 1);  // --tau-max is required
}
