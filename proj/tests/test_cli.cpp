#include <cstdio>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ldshift_app.hpp"
#include "oracles.hpp"

using namespace ldshift;
using app::Flags;

namespace {

struct Result {
  int code;
  std::string text;
  std::vector<std::string> lines;
  app::json footer;
};

Result run(const std::string& sub, const std::optional<std::string>& cfg, const Flags& f = {}) {
  std::ostringstream out;
  Result r;
  r.code = app::run(sub, cfg, f, out);
  r.text = out.str();
  std::istringstream in(r.text);
  for (std::string line; std::getline(in, line);) r.lines.push_back(line);
  r.footer = app::json::parse(r.lines.back());
  return r;
}

Flags example1_flags() {
  Flags f;
  f.example = 1;
  f.alpha_min = -1.2;
  f.alpha_max = 0.0;
  f.alpha_step = 0.02;
  return f;
}

const char* kReducible = "[measure]\nkind = markov\nP = 1, 0; 0, 1\npi = 0.5, 0.5\n";
const char* kMarkovPair = "[measure]\nkind = markov\nP = 0.9, 0.1; 0.5, 0.5\n[involution]\nkind = reversal\n";

}  // namespace

TEST(CliConfig, Bernoulli) {
  const RunConfig c = parse_config("[measure]\nkind = bernoulli\np = 0.5, 0.5\n");
  ASSERT_TRUE(c.measure);
  EXPECT_EQ(c.measure->kind(), "bernoulli");
  EXPECT_EQ(c.measure->alphabet_size(), 2u);
  EXPECT_NEAR(c.measure->probability(Word(2, {0, 1, 1})), 0.125, 1e-15);
  EXPECT_FALSE(c.hmc);
}

TEST(CliConfig, HmcPreset) {
  const RunConfig c = parse_config("# renewal pair\n[hmc]\npreset = 1\n");
  ASSERT_TRUE(c.hmc);
  EXPECT_EQ(c.hmc->name, "example1");
  EXPECT_DOUBLE_EQ(c.hmc->gamma(5), 5.0);
  EXPECT_DOUBLE_EQ(c.hmc->gamma_hat(5), 25.0);
  const RunConfig d = parse_config("[hmc]\ngamma = linear(1)\ngamma_hat = linear(2) + log1p(-2, 2)\n");
  EXPECT_NEAR(d.hmc->gamma_hat(3), renewal::preset(5).gamma_hat(3), 1e-14);
}

TEST(CliConfig, ProbabilitiesMustSumToOne) {
  try {
    parse_config("[measure]\nkind = bernoulli\np = 0.5, 0.6\n");
    FAIL() << "accepted p summing to 1.1";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("sum to 1.1"), std::string::npos) << e.what();
  }
}

TEST(CliConfig, UnknownKeysAndSections) {
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return e.line();
    }
    return 999;
  };
  EXPECT_EQ(line_of("[measure]\nkind = uniform\nsze = 2\n"), 3u);
  EXPECT_EQ(line_of("[measure]\nkind = uniform\n\n[sweeep]\n"), 4u);
  EXPECT_EQ(line_of("kind = uniform\n"), 1u);
  EXPECT_EQ(line_of("[sweep]\nt = eight\n"), 2u);
  EXPECT_EQ(line_of("[sweep]\nt = 4\nt = 5\n"), 3u);
  EXPECT_EQ(line_of("[measure]\nkind = markov\nP = 0.5, 0.5; 0.2\n"), 3u);
  EXPECT_EQ(line_of("[sweep]\nkind = xyz\n"), 2u);
  EXPECT_EQ(line_of("[hmc]\ngamma = linear(1)\ngamma_hat = quadratic(1, 2)\n"), 3u);
  EXPECT_EQ(line_of("[measure]\nkind = uniform\n[sweep]\nt = 3 # comment\n"), 999u);
}

TEST(CliConfig, Defaults) {
  const RunConfig c = parse_config("");
  EXPECT_EQ(c.sweep.t, 8u);
  EXPECT_EQ(c.sweep.alpha_min, -1.0);
  EXPECT_EQ(c.sweep.alpha_max, 1.0);
  EXPECT_EQ(c.sweep.kind, "sld");
  EXPECT_EQ(c.tol.identity, 1e-12);
  EXPECT_EQ(c.tol.transient, 1e-10);
  EXPECT_TRUE(c.out.empty());
}

TEST(CliRun, HmcExampleOneGrid) {
  const Result r = run("hmc", std::nullopt, example1_flags());
  EXPECT_EQ(r.code, 0);
  ASSERT_EQ(r.lines.size(), 1u + 61u + 1u);
  EXPECT_EQ(r.lines.front(), "alpha,rho,kappa,q");
  EXPECT_EQ(r.footer["points"], 61);
  EXPECT_EQ(r.footer["status"], "ok");
  EXPECT_EQ(r.footer["exit_code"], 0);
  EXPECT_EQ(r.footer["reason"], "");
  // last row is alpha = 0: rho = 1, kappa = e, q = 0
  EXPECT_EQ(r.lines[61], "0,1,2.71828182845905,0");
}

TEST(CliRun, ExtendedRealsInCsv) {
  Flags f = example1_flags();
  f.alpha_min = 0.2;
  f.alpha_max = 0.4;
  f.alpha_step = 0.1;
  const Result r = run("hmc", std::nullopt, f);
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.lines[1], "0.2,0,0,inf");
}

TEST(CliRun, FrCheckOnMarkovPair) {
  std::string cfg = std::string(kMarkovPair) + "[sweep]\nt = 8\nalpha_min = -2\nalpha_max = 2\nalpha_step = 1\n";
  const Result r = run("fr-check", cfg);
  EXPECT_EQ(r.code, 0) << r.footer.dump();
  EXPECT_LE(r.footer["gc_defect"].get<double>(), 1e-12);
  EXPECT_EQ(r.lines.front(), "alpha,gc_defect");
}

TEST(CliRun, ReducibleChainFailsSld) {
  // oracle: P(ab) = 0 while P(a) P(b) = 1/4, so (a, b) has no tau = 0 join
  EXPECT_EQ(oracle::markov_prob({{1, 0}, {0, 1}}, {0.5, 0.5}, {0, 1}), 0.0);
  Flags f;
  f.kind = "sld";
  f.tau = 0;
  f.t = 2;
  const Result r = run("decoupling", std::string(kReducible), f);
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.footer["status"], "check_failure");
  ASSERT_FALSE(r.footer["violations"].empty());
  bool seen = false;
  for (const auto& v : r.footer["violations"]) seen |= v["u"] == "a" && v["v"] == "b";
  EXPECT_TRUE(seen);
  EXPECT_NE(r.footer["reason"].get<std::string>().find("violate"), std::string::npos);
}

TEST(CliRun, BernoulliPassesSld) {
  Flags f;
  f.t = 3;
  const Result r = run("decoupling", std::string("[measure]\nkind = bernoulli\np = 0.3, 0.7\n"), f);
  EXPECT_EQ(r.code, 0);
  for (const auto& row : r.footer["per_t"]) EXPECT_NEAR(row["c_star"].get<double>(), 0.0, 1e-12);
}

TEST(CliRun, ExitCodes) {
  EXPECT_EQ(run("hmc", std::nullopt).code, 1);  // no pair
  EXPECT_EQ(run("nonsense", std::nullopt).code, 1);
  const Result bad = run("pressure", std::string("[measure]\nkind = bernoulli\np = 0.5, 0.6\n"));
  EXPECT_EQ(bad.code, 1);
  EXPECT_EQ(bad.footer["status"], "config_error");
  EXPECT_EQ(bad.lines.size(), 1u);  // no CSV on config errors
  Flags f;
  f.alpha_min = 1.0;
  f.alpha_max = 0.0;
  EXPECT_EQ(run("pressure", std::string("[measure]\nkind = uniform\n"), f).code, 1);
  // an undecidable series is a convergence failure, not a check failure
  const std::string tight = "[hmc]\npreset = 4\nmax_terms = 20\n[sweep]\nalpha_min = 0.99\nalpha_max = 0.99\n";
  EXPECT_EQ(run("hmc", tight).code, 3);
}

TEST(CliRun, PressureAndRate) {
  const std::string cfg =
      "[measure]\nkind = uniform\n[observable]\nkind = indicator\nsymbol = a\n[sweep]\nt = 6\nalpha_min = -3\n"
      "alpha_max = 3\nalpha_step = 0.5\n";
  const Result p = run("pressure", cfg);
  EXPECT_EQ(p.code, 0);
  EXPECT_EQ(p.lines.front(), "alpha,q");
  EXPECT_EQ(p.footer["points"], 13);
  const Result r = run("rate", cfg);
  EXPECT_EQ(r.code, 0) << r.footer.dump();
  EXPECT_EQ(r.lines.front(), "s,I");
  EXPECT_GE(r.footer["min_I"].get<double>(), -1e-9);
}

TEST(CliRun, Level3Csv) {
  const std::string cfg = std::string(kMarkovPair) + "[q_measure]\nkind = uniform\n[sweep]\nt_max = 6\n";
  const Result r = run("level3", cfg);
  EXPECT_EQ(r.code, 0) << r.footer.dump();
  EXPECT_EQ(r.lines.front(), "t,h_rate,varsigma_rate,ent_rate");
  EXPECT_EQ(r.lines.size(), 1u + 6u + 1u);
  EXPECT_LE(r.footer["fr_defect"].get<double>(), 1e-12);
}

TEST(CliRun, PsiCheckUniform) {
  Flags f;
  f.n = 2;
  f.t = 5;
  const Result r = run("psi-check", std::string("[measure]\nkind = uniform\n"), f);
  EXPECT_EQ(r.code, 0);
  EXPECT_NEAR(r.footer["g_min"].get<double>(), std::log(2.0), 1e-12);
  EXPECT_EQ(r.footer["multiplicity"], 1);
}

TEST(CliRun, ChernoffSymmetric) {
  Flags f;
  f.alpha_step = 0.05;
  f.t = 6;
  const Result r = run("chernoff", std::string(kMarkovPair), f);
  EXPECT_EQ(r.code, 0);
  EXPECT_NEAR(r.footer["alpha"].get<double>(), 0.5, 0.05);
  EXPECT_EQ(r.lines.front(), "alpha,e");
}

TEST(CliRun, ByteIdenticalAcrossRunsAndThreads) {
  const std::string probe =
      "[measure]\nkind = uniform\n[observable]\nkind = indicator\nsymbol = a\n[sweep]\nt_list = 10, 20\n"
      "samples = 20000\nseed = 7\ninterval = 0.7, 1\n";
  for (const std::string sub : {"probe", "hmc"}) {
    const std::optional<std::string> cfg = sub == "probe" ? std::optional<std::string>(probe) : std::nullopt;
    Flags one = example1_flags(), many = example1_flags();
    one.threads = 1;
    many.threads = 4;
    const Result a = run(sub, cfg, one), b = run(sub, cfg, many), c = run(sub, cfg, many);
    ASSERT_EQ(a.code, 0) << a.footer.dump();
    // the footer carries timings; the CSV must match byte for byte
    const auto csv = [](const Result& r) { return r.text.substr(0, r.text.size() - r.lines.back().size() - 1); };
    EXPECT_EQ(csv(a), csv(b)) << sub;
    EXPECT_EQ(csv(b), csv(c)) << sub;
  }
}

TEST(CliRun, WritesCsvFile) {
  const std::string path = ::testing::TempDir() + "ldshift_cli_ex1.csv";
  Flags f = example1_flags();
  f.out = path;
  const Result r = run("hmc", std::nullopt, f);
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.lines.size(), 1u);  // footer only on stdout
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "alpha,rho,kappa,q");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 61u);
  std::remove(path.c_str());
}

TEST(CliFormat, SignificantDigits) {
  const std::string s = format_double(1.0 / 3.0);
  EXPECT_GE(s.size() - 2, 12u);
  EXPECT_EQ(format_double(kInf), "inf");
  EXPECT_EQ(format_double(kNegInf), "-inf");
  EXPECT_EQ(format_double(-0.0), "0");
  EXPECT_EQ(std::stod(format_double(0.590265196123456)), 0.590265196123456);
}
