#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "cqsd/config.hpp"
#include "cqsd/csv.hpp"
#include "support.hpp"

using namespace cqsd;
namespace fs = std::filesystem;

namespace {

const char* const reference_text = R"(model.omega_s = 2
model.omega_cavity = 1
model.g = 1
model.kappa1 = 1
model.kappa2 = 1
bath.Gamma = 1
bath.gamma = 5
sim.t_max = 5
sim.dt = 0.01
sim.n_traj = 10
sim.seed = 11
sim.initial_state = bell_psi_plus
sim.method = oracle
)";

struct Outcome {
  int status = -1;
  std::string out, err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("cqsd_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }

  Outcome run(const std::string& args, const std::string& env = "") const {
    const std::string o = path("stdout.txt"), e = path("stderr.txt");
    const std::string cmd = env + " '" + std::string(CQSD_CLI_PATH) + "' " + args + " >'" + o + "' 2>'" + e + "'";
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(o), slurp(e)};
  }

  fs::path dir_;
};

std::string with(std::string text, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    const auto at = text.find(key + " = ");
    if (at == std::string::npos) {
      text += key + " = " + value + "\n";
    } else {
      const auto end = text.find('\n', at);
      text.replace(at, end - at, key + " = " + value);
    }
  }
  return text;
}

SimulationResult read_csv_file(const std::string& p) {
  std::ifstream is(p);
  return read_result_csv(is);
}

struct SweepTable {
  std::map<double, std::vector<std::pair<double, double>>> rows;  // value -> (t, C)
};

SweepTable read_sweep(const std::string& p) {
  std::ifstream is(p);
  std::string line;
  SweepTable s;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::istringstream ls(line);
    std::string v, t, c;
    std::getline(ls, v, ',');
    std::getline(ls, t, ',');
    std::getline(ls, c, ',');
    s.rows[std::stod(v)].emplace_back(std::stod(t), std::stod(c));
  }
  return s;
}

}  // namespace

TEST_F(Cli, DumpConfigEchoRoundTrips) {
  const auto a = run("dump-config " + write("a.cfg", reference_text));
  ASSERT_EQ(a.status, 0) << a.err;
  const auto b = run("dump-config " + write("b.cfg", a.out));
  ASSERT_EQ(b.status, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
}

TEST_F(Cli, EmptyConfigListsMissingKeys) {
  const auto r = run("dump-config " + write("empty.cfg", ""));
  EXPECT_EQ(r.status, 2);
  for (const auto& k : required_config_keys()) EXPECT_NE(r.err.find(k), std::string::npos) << k;
}

TEST_F(Cli, NegativeGammaNamesKey) {
  const auto r = run("run " + write("bad.cfg", with(reference_text, {{"bath.gamma", "-1"}})));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("bath.gamma"), std::string::npos) << r.err;
}

TEST_F(Cli, OracleRunWritesEveryStep) {
  const auto out = path("oracle.csv");
  const auto r = run("run " + write("o.cfg", reference_text) + " -o " + out);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto res = read_csv_file(out);
  ASSERT_EQ(res.size(), 501u);
  for (std::size_t k = 1; k < res.size(); ++k) EXPECT_GT(res.times[k], res.times[k - 1]);
  EXPECT_EQ(res.provenance.method, "oracle");
  EXPECT_NE(slurp(out).find("parameter_hash="), std::string::npos);
}

TEST_F(Cli, QsdRunIsByteIdenticalAcrossRunsAndWorkerCounts) {
  const auto cfg = write("q.cfg", with(reference_text, {{"sim.method", "qsd"}, {"sim.t_max", "1"}}));
  ASSERT_EQ(run("run " + cfg + " -o " + path("a.csv")).status, 0);
  ASSERT_EQ(run("run " + cfg + " -o " + path("b.csv"), "CASCADE_QSD_THREADS=1").status, 0);
  ASSERT_EQ(run("run " + cfg + " -o " + path("c.csv"), "CASCADE_QSD_THREADS=4").status, 0);
  const auto a = slurp(path("a.csv"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(path("b.csv")));
  EXPECT_EQ(a, slurp(path("c.csv")));
}

TEST_F(Cli, QuadratureWithBathFails) {
  const auto r = run("run " + write("q.cfg", with(reference_text, {{"sim.method", "quadrature"}})) + " -o " + path("q.csv"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("Gamma = 0"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("q.csv")));
}

TEST_F(Cli, SingleValueSweepMatchesRun) {
  const auto cfg = write("s.cfg", with(reference_text, {{"sim.t_max", "2"}, {"sweep.parameter", "g"}, {"sweep.values", "1"}}));
  ASSERT_EQ(run("sweep " + cfg + " -o " + path("s.csv")).status, 0);
  ASSERT_EQ(run("run " + cfg + " -o " + path("r.csv")).status, 0);
  const auto sweep = read_sweep(path("s.csv"));
  const auto res = read_csv_file(path("r.csv"));
  ASSERT_EQ(sweep.rows.size(), 1u);
  const auto& rows = sweep.rows.at(1.0);
  ASSERT_EQ(rows.size(), res.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(rows[k].first, res.times[k]);
    EXPECT_EQ(rows[k].second, res.concurrence[k]);
  }
}

TEST_F(Cli, FailedSweepPointIsLoggedAndSweepContinues) {
  const auto cfg = write("s.cfg", with(reference_text, {{"sim.method", "quadrature"},
                                                    {"sim.t_max", "1"},
                                                    {"sweep.parameter", "Gamma"},
                                                    {"sweep.values", "0, 1"}}));
  const auto r = run("sweep " + cfg + " -o " + path("s.csv"));
  EXPECT_EQ(r.status, 1);
  const auto log = slurp(path("s.csv.failed.log"));
  EXPECT_NE(log.find("Gamma=1"), std::string::npos) << log;
  const auto table = read_sweep(path("s.csv"));
  EXPECT_EQ(table.rows.size(), 1u);
  EXPECT_EQ(table.rows.count(0.0), 1u);
}

TEST_F(Cli, CompareSelfAndGridRefinement) {
  const auto coarse = write("c.cfg", reference_text);
  const auto fine = write("f.cfg", with(reference_text, {{"sim.dt", "0.005"}}));
  ASSERT_EQ(run("run " + coarse + " -o " + path("c.csv")).status, 0);
  ASSERT_EQ(run("run " + fine + " -o " + path("f.csv")).status, 0);
  const auto self = run("compare " + path("c.csv") + " " + path("c.csv"));
  EXPECT_EQ(self.status, 0);
  EXPECT_NE(self.out.find("max_trace_distance=0.000000e+00"), std::string::npos) << self.out;
  EXPECT_NE(self.out.find("max_concurrence_diff=0.000000e+00"), std::string::npos) << self.out;
  const auto halving = run("compare " + path("c.csv") + " " + path("f.csv") + " --threshold 1e-6");
  EXPECT_EQ(halving.status, 0) << halving.out;
}

TEST_F(Cli, CompareRejectsMismatchedGrids) {
  ASSERT_EQ(run("run " + write("a.cfg", with(reference_text, {{"sim.dt", "0.02"}})) + " -o " + path("a.csv")).status, 0);
  ASSERT_EQ(run("run " + write("b.cfg", with(reference_text, {{"sim.dt", "0.03"}, {"sim.t_max", "4.5"}})) + " -o " + path("b.csv")).status, 0);
  const auto r = run("compare " + path("a.csv") + " " + path("b.csv"));
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("time grids differ"), std::string::npos) << r.err;
}

TEST_F(Cli, NoiseCheckPasses) {
  const auto r = run("noise-check " + write("n.cfg", with(reference_text, {{"sim.method", "qsd"}})) + " --paths 2000");
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("statistic,max_deviation"), std::string::npos);
}

// Coupling sweep at the entanglement-generation parameters: the weakest
// coupling is expected to give the largest concurrence of the three.
TEST_F(Cli, CouplingSweepPeaksAtWeakCoupling) {
  const auto cfg = write("g.cfg", with(reference_text, {{"model.omega_s", "1"},
                                                    {"bath.gamma", "0.5"},
                                                    {"sim.t_max", "10"},
                                                    {"sim.initial_state", "ket_ee"},
                                                    {"sweep.parameter", "g"},
                                                    {"sweep.values", "0.4, 1, 5"}}));
  ASSERT_EQ(run("sweep " + cfg + " -o " + path("g.csv")).status, 0);
  const auto table = read_sweep(path("g.csv"));
  std::map<double, double> peak;
  for (const auto& [g, rows] : table.rows)
    for (const auto& [t, c] : rows) peak[g] = std::max(peak[g], c);
  ASSERT_EQ(peak.size(), 3u);
  EXPECT_GT(peak[0.4], peak[1.0]) << "max C: g=0.4 " << peak[0.4] << ", g=1 " << peak[1.0] << ", g=5 " << peak[5.0];
  EXPECT_GT(peak[0.4], peak[5.0]) << "max C: g=0.4 " << peak[0.4] << ", g=1 " << peak[1.0] << ", g=5 " << peak[5.0];
}

// Memory-time sweep: late-time concurrence (mean over the last fifth of
// t in [0, 10]) is larger for the longer memory.
TEST_F(Cli, LongMemoryKeepsEntanglementLonger) {
  const auto cfg = write("m.cfg", with(reference_text, {{"sim.t_max", "10"},
                                                    {"sweep.parameter", "gamma"},
                                                    {"sweep.values", "0.1, 0.5, 1.0"}}));
  ASSERT_EQ(run("sweep " + cfg + " -o " + path("m.csv")).status, 0);
  const auto table = read_sweep(path("m.csv"));
  std::map<double, double> late;
  for (const auto& [gamma, rows] : table.rows) {
    double s = 0.0;
    int n = 0;
    for (const auto& [t, c] : rows)
      if (t >= 8.0 - 1e-9) {
        s += c;
        ++n;
      }
    late[gamma] = s / n;
  }
  EXPECT_GE(late[0.1], late[1.0]) << late[0.1] << " vs " << late[1.0];
}
