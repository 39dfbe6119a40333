#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cli.hpp"
#include "nvsd/experiments.hpp"
#include "nvsd/io.hpp"
#include "nvsd/model.hpp"
#include "test_util.hpp"

namespace nvsd {
namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "nvsd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> column_names(int d) {
  std::vector<std::string> h;
  for (int a = 1; a <= d; ++a) h.push_back("x" + std::to_string(a));
  return h;
}

// Writes an E3-style data set (x.csv, y.csv, groups.json) into dir.
void write_dataset(const test::TempDir& dir, int n, std::uint64_t seed, const std::string& suffix = "") {
  const auto data = gen_e3(n, seed);
  write_file_atomic(dir.file("x" + suffix + ".csv"), csv_text(column_names(kSyntheticDim), data.X));
  write_file_atomic(dir.file("y" + suffix + ".csv"), csv_text({"y"}, data.y));
  write_file_atomic(dir.file("groups.json"), data.groups.to_json());
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override { write_dataset(dir, 30, 3); }
  test::TempDir dir{"cli"};
};

TEST_F(Cli, FitWritesModelAndReport) {
  const auto r = run_cli({"fit", "--x", dir.file("x.csv"), "--y", dir.file("y.csv"), "--reg", "gl",
                          "--groups", dir.file("groups.json"), "--tau", "0.01", "--sigma", "4",
                          "--model", dir.file("m.json"), "--report", dir.file("r.json")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto model = model_from_json(read_text_file(dir.file("m.json")));
  const auto report = nlohmann::json::parse(read_text_file(dir.file("r.json")));
  for (int a : report.at("support").get<std::vector<int>>()) {
    EXPECT_GE(a, 1);
    EXPECT_LE(a, 18);
  }
  EXPECT_EQ(report.at("derivative_norms").size(), 18u);
  EXPECT_EQ(model.input_dim, 18);

  // Predicting on the training file reproduces the reported fitted values.
  const auto p = run_cli({"predict", "--model", dir.file("m.json"), "--x", dir.file("x.csv"), "--out",
                          dir.file("p.csv")});
  ASSERT_EQ(p.code, cli::kExitOk) << p.err;
  const Vector pred = read_csv_vector(dir.file("p.csv"));
  const auto fitted = report.at("fitted_values").get<std::vector<double>>();
  ASSERT_EQ(pred.size(), static_cast<Eigen::Index>(fitted.size()));
  for (Eigen::Index i = 0; i < pred.size(); ++i) EXPECT_NEAR(pred(i), fitted[i], 1e-8);
}

TEST_F(Cli, AutoSigmaUsesWidthHeuristic) {
  const auto r = run_cli({"fit", "--x", dir.file("x.csv"), "--y", dir.file("y.csv"), "--reg", "l",
                          "--tau", "0.05", "--sigma", "auto", "--no-normalize", "--report",
                          dir.file("r.json")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto report = nlohmann::json::parse(read_text_file(dir.file("r.json")));
  const double expected = gaussian_width_heuristic(read_csv(dir.file("x.csv")).data, 20);
  EXPECT_DOUBLE_EQ(report.at("kernel").at("width").get<double>(), expected);
}

TEST_F(Cli, GroupLassoWithoutGroupsIsBadInput) {
  EXPECT_EQ(run_cli({"fit", "--x", dir.file("x.csv"), "--y", dir.file("y.csv"), "--reg", "gl", "--tau", "0.1"}).code,
            cli::kExitBadInput);
  EXPECT_EQ(run_cli({"fit", "--x", dir.file("x.csv"), "--y", dir.file("y.csv"), "--reg", "gl", "--groups",
                     dir.file("missing.json"), "--tau", "0.1"})
                .code,
            cli::kExitBadInput);
}

TEST_F(Cli, MalformedCsvNamesFileAndLine) {
  const auto bad = dir.write("bad.csv", "a,b\n1,2\n3,oops\n");
  const auto r = run_cli({"fit", "--x", bad, "--y", dir.file("y.csv"), "--tau", "0.1"});
  EXPECT_EQ(r.code, cli::kExitBadInput);
  EXPECT_NE(r.err.find("bad.csv:3"), std::string::npos) << r.err;
}

TEST_F(Cli, GridWithoutValidationIsBadInput) {
  EXPECT_EQ(run_cli({"fit", "--x", dir.file("x.csv"), "--y", dir.file("y.csv")}).code, cli::kExitBadInput);
}

TEST_F(Cli, PredictEdgeCases) {
  ASSERT_EQ(run_cli({"fit", "--x", dir.file("x.csv"), "--y", dir.file("y.csv"), "--tau", "0.05", "--model",
                     dir.file("m.json")})
                .code,
            cli::kExitOk);
  const auto empty = dir.write("empty.csv", "");
  auto r = run_cli({"predict", "--model", dir.file("m.json"), "--x", empty, "--out", dir.file("p.csv")});
  EXPECT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(read_csv(dir.file("p.csv")).data.rows(), 0);
  const auto narrow = dir.write("narrow.csv", "a,b\n1,2\n");
  r = run_cli({"predict", "--model", dir.file("m.json"), "--x", narrow, "--out", dir.file("p.csv")});
  EXPECT_EQ(r.code, cli::kExitBadInput);
  r = run_cli({"predict", "--model", dir.file("x.csv"), "--x", narrow, "--out", dir.file("p.csv")});
  EXPECT_EQ(r.code, cli::kExitBadInput);
}

TEST_F(Cli, PathWritesOneRowPerTau) {
  write_dataset(dir, 60, 4, "_val");
  const auto r = run_cli({"path", "--x", dir.file("x.csv"), "--y", dir.file("y.csv"), "--xval",
                          dir.file("x_val.csv"), "--yval", dir.file("y_val.csv"), "--tau-count", "5",
                          "--out", dir.file("path.csv"), "--model", dir.file("best.json")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const std::string text = read_text_file(dir.file("path.csv"));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
  EXPECT_NO_THROW(model_from_json(read_text_file(dir.file("best.json"))));
}

TEST_F(Cli, BenchKrlsIsDeterministic) {
  const std::vector<std::string> args = {"bench", "e1", "--methods", "krls", "--sizes", "30", "--reps", "2",
                                         "--validation-size", "200", "--test-size", "200", "--threads", "2"};
  auto first = args;
  first.insert(first.end(), {"--raw", dir.file("raw1.csv"), "--aggregate", dir.file("agg.csv")});
  auto second = args;
  second.insert(second.end(), {"--raw", dir.file("raw2.csv")});
  const auto a = run_cli(first);
  ASSERT_EQ(a.code, cli::kExitOk) << a.err;
  ASSERT_EQ(run_cli(second).code, cli::kExitOk);
  const std::string raw = read_text_file(dir.file("raw1.csv"));
  EXPECT_EQ(raw, read_text_file(dir.file("raw2.csv")));
  EXPECT_EQ(std::count(raw.begin(), raw.end(), '\n'), 3);
  std::istringstream lines(raw);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) {
    std::vector<std::string> fields;
    std::istringstream cells(line);
    for (std::string f; std::getline(cells, f, ',');) fields.push_back(f);
    ASSERT_GE(fields.size(), 8u);
    EXPECT_NEAR(std::stod(fields[6]), 2.0 / 3.0, 1e-15);
    EXPECT_EQ(fields[7], "18");
  }
  EXPECT_NE(a.out.find("krls"), std::string::npos);
}

TEST(CliArgs, UnknownCommandOrFlag) {
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitBadInput);
  EXPECT_EQ(run_cli({"bench", "e9", "--methods", "krls", "--sizes", "30"}).code, cli::kExitBadInput);
  EXPECT_EQ(run_cli({"bench", "e1", "--bogus"}).code, cli::kExitBadInput);
  EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
}

}  // namespace
}  // namespace nvsd
