#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "panelfe/cli.hpp"
#include "panelfe/montecarlo.hpp"

using namespace panelfe;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("panelfe_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) const {
    const auto path = dir_ / name;
    std::ofstream(path) << text;
    return path.string();
  }
  std::string read(const std::string& path) const {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  std::string probit_csv(bool dynamic = false) const {
    const auto panel = mc::synthetic_probit_panel(6, 120, 6, dynamic);
    std::ostringstream out;
    write_panel_csv(out, panel);
    return write(dynamic ? "dyn.csv" : "static.csv", out.str());
  }
  int run(cli::RunConfig c, std::string* console = nullptr, std::string* errors = nullptr) const {
    std::ostringstream out, err;
    const int code = cli::run(c, out, err);
    if (console) *console = out.str();
    if (errors) *errors = err.str();
    return code;
  }
  int shell(const std::string& args) const {
    const std::string cmd = std::string(PANELFE_CLI_PATH) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                            " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  }

  fs::path dir_;
};

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  }
  return lines;
}

}  // namespace

TEST_F(CliTest, FitWritesOneRowPerCoefficient) {
  cli::RunConfig c;
  c.command = "fit";
  c.data = probit_csv();
  c.family = "probit";
  std::string out;
  ASSERT_EQ(run(c, &out), 0);
  const auto lines = data_lines(out);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], "name,estimate,se");
  EXPECT_EQ(lines[1].substr(0, 5), "kids,");
  EXPECT_NE(out.find("# seed=1"), std::string::npos);
  EXPECT_NE(out.find("# version="), std::string::npos);
  EXPECT_NE(out.find("# config="), std::string::npos);
  EXPECT_NE(out.find("# dropped="), std::string::npos);
}

TEST_F(CliTest, NeymanScottHandCase) {
  cli::RunConfig c;
  c.command = "fit";
  c.data = write("ns.csv", "id,t,y\n1,1,1\n1,2,3\n");
  c.family = "neyman-scott";
  std::string out;
  ASSERT_EQ(run(c, &out), 0);
  EXPECT_EQ(data_lines(out)[1].substr(0, 11), "variance,1,");
}

TEST_F(CliTest, UnbalancedInputExitsTwo) {
  cli::RunConfig c;
  c.command = "fit";
  c.data = write("bad.csv", "id,t,y,x\n7,1,0,1\n7,2,1,2\n9,1,1,3\n");
  c.family = "probit";
  std::string err;
  EXPECT_EQ(run(c, nullptr, &err), 2);
  EXPECT_NE(err.find("unbalanced: id 9"), std::string::npos) << err;
}

TEST_F(CliTest, CollinearDataExitsThree) {
  cli::RunConfig c;
  c.command = "fit";
  std::ostringstream csv;
  csv << "id,t,y,a,b\n";
  for (int i = 0; i < 20; ++i) {
    for (int t = 1; t <= 4; ++t) csv << i << "," << t << "," << ((i + t) % 2) << "," << (0.3 * t + i) << "," << (0.6 * t + 2 * i) << "\n";
  }
  c.data = write("col.csv", csv.str());
  c.family = "probit";
  EXPECT_EQ(run(c), 3);
}

TEST_F(CliTest, CorrectIfeReportsBothEstimatorsAndSolverState) {
  cli::RunConfig c;
  c.command = "correct";
  c.data = probit_csv();
  c.family = "probit";
  c.method = "ife";
  c.H = 1;
  std::string out;
  ASSERT_EQ(run(c, &out), 0);
  const auto lines = data_lines(out);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "estimator,name,estimate,se");
  EXPECT_EQ(lines[1].substr(0, 3), "fe,");
  EXPECT_EQ(lines[3].substr(0, 6), "ife-1,");
  EXPECT_NE(out.find("# converged="), std::string::npos);
  EXPECT_NE(out.find("# residual="), std::string::npos);
  EXPECT_NE(out.find("# H=1"), std::string::npos);
  auto se_of = [](const std::string& line) { return std::stod(line.substr(line.rfind(',') + 1)); };
  EXPECT_NEAR(se_of(lines[3]) / se_of(lines[1]), std::sqrt(2.0), 1e-4);
}

TEST_F(CliTest, JackknifePreconditionsExitTwo) {
  cli::RunConfig c;
  c.command = "correct";
  c.family = "probit";
  c.method = "hbc";
  c.data = write("short.csv", "id,t,y,x\n1,1,0,1\n1,2,1,2\n1,3,0,0.5\n2,1,1,1\n2,2,0,3\n2,3,1,2\n");
  EXPECT_EQ(run(c), 2);
  c.method = "bc_hn";
  c.data = probit_csv(true);
  c.family.reset();
  c.schema = write("dyn.json", R"({"family":"probit","lag_column":"y_lag"})");
  std::string err;
  EXPECT_EQ(run(c, nullptr, &err), 2);
  EXPECT_NE(err.find("not applicable due to dynamics"), std::string::npos) << err;
}

TEST_F(CliTest, SameSeedSameBytes) {
  cli::RunConfig c;
  c.command = "correct";
  c.data = probit_csv();
  c.family = "probit";
  c.H = 3;
  c.seed = 42;
  c.out = (dir_ / "a.csv").string();
  std::string console;
  ASSERT_EQ(run(c, &console), 0);
  EXPECT_NE(console.find("FE"), std::string::npos);
  const auto first = read(*c.out);
  ASSERT_EQ(run(c), 0);
  EXPECT_EQ(first, read(*c.out));
  c.format = "json";
  ASSERT_EQ(run(c), 0);
  const auto doc = nlohmann::json::parse(read(*c.out));
  EXPECT_EQ(doc["meta"]["seed"], 42);
  EXPECT_EQ(doc["rows"].size(), 4u);
}

TEST_F(CliTest, MonteCarloShape) {
  cli::RunConfig c;
  c.command = "mc";
  c.design = "varying_T";
  c.n = 100;
  c.T = 4;
  c.R = 20;
  c.methods = {"fe", "ife"};
  std::string out;
  const int code = run(c, &out);
  EXPECT_TRUE(code == 0 || code == 3);
  const auto lines = data_lines(out);
  auto begin = std::find(lines.begin(), lines.end(), "method,coefficient,bias,stddev,coverage,R_effective");
  ASSERT_NE(begin, lines.end());
  EXPECT_EQ(lines.end() - begin - 1, 2);
}

TEST_F(CliTest, MonteCarloSingleReplication) {
  cli::RunConfig c;
  c.command = "mc";
  c.n = 100;
  c.T = 4;
  c.R = 1;
  c.methods = {"fe"};
  std::string out;
  ASSERT_EQ(run(c, &out), 0);
  auto d = mc::varying_T_design(100, 4, 1, 10, 1, {});
  const auto fit = fit_fe(mc::generate(d, 0), Family{FamilyKind::probit});
  const auto lines = data_lines(out);
  const std::string row = lines.back();
  EXPECT_EQ(row.substr(0, 5), "fe,x,");
  EXPECT_EQ(row.substr(5, row.find(',', 5) - 5), cli::fmt6((fit.theta_hat[0] - 1.0) * 100.0));
}

TEST_F(CliTest, NsDemoCentersOnTargets) {
  cli::RunConfig c;
  c.command = "ns-demo";
  c.R = 200;
  c.H = 1;
  c.out = "hist.csv";
  setenv(cli::output_dir_env, dir_.c_str(), 1);
  std::string console;
  const int code = run(c, &console);
  unsetenv(cli::output_dir_env);
  ASSERT_EQ(code, 0);
  const auto text = read((dir_ / "hist.csv").string());
  const auto lines = data_lines(text);
  EXPECT_EQ(lines[0], "estimator,bin_left,bin_right,density");
  EXPECT_EQ(lines.size(), 121u);
  auto meta = [&](const std::string& key) {
    const auto at = text.find("# " + key + "=") + key.size() + 3;
    return std::stod(text.substr(at, text.find('\n', at) - at));
  };
  EXPECT_NEAR(meta("mean_fe"), 1.6, 0.02);
  EXPECT_NEAR(meta("mean_ife"), 2.0, 0.05);
}

TEST_F(CliTest, BinaryExitCodesAndConfigOverrides) {
  const auto data = probit_csv();
  EXPECT_EQ(shell("fit --data " + data + " --family probit"), 0);
  EXPECT_EQ(shell("fit --data " + (dir_ / "missing.csv").string() + " --family probit"), 2);
  EXPECT_EQ(shell("fit --data " + data + " --family logit"), 2);
  EXPECT_EQ(shell("fit --bogus"), 2);
  const auto config = write("run.json", R"({"command":"correct","data":")" + data +
                                            R"(","family":"probit","method":"hbc","seed":5,"out":")" +
                                            (dir_ / "cfg.csv").string() + R"("})");
  EXPECT_EQ(shell("correct --config " + config), 0);
  const auto from_config = read((dir_ / "cfg.csv").string());
  EXPECT_NE(from_config.find("# method=hbc"), std::string::npos);
  EXPECT_NE(from_config.find("# seed=5"), std::string::npos);
  EXPECT_EQ(shell("correct --config " + config + " --seed 9 --method bc_hn"), 0);
  const auto overridden = read((dir_ / "cfg.csv").string());
  EXPECT_NE(overridden.find("# method=bc_hn"), std::string::npos);
  EXPECT_NE(overridden.find("# seed=9"), std::string::npos);
  EXPECT_EQ(shell("correct --config " + write("bad.json", R"({"colour":1})")), 2);
}
