// Copyright 2026 The kslab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kslab/harness.h"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kslab/paging.h"

namespace kslab::harness {
namespace {

std::filesystem::path TempDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("kslab_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TEST(GeneratorTest, ParseAndName) {
  EXPECT_EQ(ParseGenerator("uniform").kind, Generator::kUniform);
  EXPECT_EQ(ParseGenerator("zipf:1.5").zipf_exponent, 1.5);
  EXPECT_EQ(ParseGenerator("adversarial-paging").kind, Generator::kAdversarial);
  EXPECT_EQ(ParseGenerator("trace:/tmp/x").trace_path, "/tmp/x");
  EXPECT_EQ(GeneratorName(ParseGenerator("zipf:2")), "zipf:2");
  EXPECT_THROW(ParseGenerator("gauss"), InvalidInput);
  EXPECT_THROW(ParseGenerator("cycle:3"), InvalidInput);
  EXPECT_THROW(ParseGenerator("trace"), InvalidInput);
}

TEST(GeneratorTest, UniformIsReproducibleAndInRange) {
  const GeneratorSpec g;
  const auto a = GenerateRequests(g, 4, 2, 200, 9);
  EXPECT_EQ(a, GenerateRequests(g, 4, 2, 200, 9));
  EXPECT_NE(a, GenerateRequests(g, 4, 2, 200, 10));
  std::vector<int> count(4, 0);
  for (int r : a) {
    ASSERT_GE(r, 0);
    ASSERT_LT(r, 4);
    ++count[r];
  }
  for (int c : count) EXPECT_GT(c, 20);
}

TEST(GeneratorTest, ZipfHeadFrequency) {
  const GeneratorSpec g = ParseGenerator("zipf:1");
  const int n = 10, len = 20000;
  const auto r = GenerateRequests(g, n, 2, len, 4);
  double h = 0.0;
  for (int i = 1; i <= n; ++i) h += 1.0 / i;
  const double p = 1.0 / h;
  const double hits = std::count(r.begin(), r.end(), 0);
  EXPECT_NEAR(hits / len, p, 4 * std::sqrt(p * (1 - p) / len));
}

TEST(GeneratorTest, CycleAndAdversarial) {
  GeneratorSpec g;
  g.kind = Generator::kCycle;
  EXPECT_EQ(GenerateRequests(g, 5, 2, 7, 0), (std::vector<int>{0, 1, 2, 0, 1, 2, 0}));
  EXPECT_THROW(GenerateRequests(g, 2, 2, 3, 0), InvalidInput);
  g.kind = Generator::kAdversarial;
  EXPECT_THROW(GenerateRequests(g, 5, 2, 3, 0), InvalidInput);
}

TEST(GeneratorTest, TraceRoundTrip) {
  const auto dir = TempDir("trace");
  const std::vector<int> req = GenerateRequests(GeneratorSpec{}, 50, 3, 77, 1);
  {
    std::ofstream out(dir / "t.txt");
    out << "# recorded\n";
    WriteTrace(req, out);
  }
  const GeneratorSpec g = ParseGenerator("trace:" + (dir / "t.txt").string());
  EXPECT_EQ(GenerateRequests(g, 50, 3, 0, 0), req);
  EXPECT_EQ(GenerateRequests(g, 50, 3, 10, 0),
            std::vector<int>(req.begin(), req.begin() + 10));
  EXPECT_THROW(GenerateRequests(g, 20, 3, 0, 0), InvalidInput);
}

TEST(AdversaryTest, EveryPagingRequestCosts) {
  const paging::Instance inst = paging::Instance::Make(8, 3, Vec::Ones(8));
  paging::RunOptions opt;
  const auto res = paging::RunPagingOnline(
      inst, 60, [](int, const Vec& x) { return AdversarialPage(x); }, opt);
  ASSERT_EQ(res.log.size(), 60u);
  for (const auto& rec : res.log) EXPECT_GT(rec.x_before, inst.delta);
  EXPECT_GT(res.alg_cost, 0.0);
}

TEST(AdversaryTest, TreeAdversaryPicksEmptiestLeaf) {
  const hst::HstTree tree = hst::HstTree::Uniform(2, 2, 2.0);
  const hst::AssignmentLayout layout(tree, 2);
  const Vec x = layout.IntegralPoint({tree.leaves()[0], tree.leaves()[2]});
  EXPECT_EQ(AdversarialLeaf(layout, x), tree.leaves()[1]);
}

TEST(ConfigTest, ParsesSectionsAndSeeds) {
  std::istringstream in(
      "[experiment]\nname = demo\nalgorithm = paging\nk = 4\nrequests = 30\n"
      "generator = zipf:1.2\nseeds = 1,3-5\nverify = full\n"
      "[paging]\npages = 9\nweights = random\n[output]\ndir = /tmp/o\n");
  const ExperimentConfig c = LoadConfig(in);
  EXPECT_EQ(c.name, "demo");
  EXPECT_EQ(c.algorithm, Algorithm::kPaging);
  EXPECT_EQ(c.k, 4);
  EXPECT_EQ(c.length, 30);
  EXPECT_EQ(c.generator.zipf_exponent, 1.2);
  EXPECT_EQ(c.seeds, (std::vector<uint64_t>{1, 3, 4, 5}));
  EXPECT_EQ(c.verify, hst::VerifyLevel::kFull);
  EXPECT_EQ(c.pages, 9);
  EXPECT_EQ(c.out_dir, "/tmp/o");
  EXPECT_EQ(c.h_max, kFullVerifyHMax);
  std::istringstream explicit_step("[experiment]\nverify = full\n[hst]\nh_max = 0.01\n");
  EXPECT_EQ(LoadConfig(explicit_step).h_max, 0.01);
}

TEST(ConfigTest, InlineComments) {
  std::istringstream in("[experiment]\nalgorithm = mirror   # or paging\nk = 2 ; servers\n"
                        "generator = trace:/tmp/a#b\n");
  const ExperimentConfig c = LoadConfig(in);
  EXPECT_EQ(c.algorithm, Algorithm::kMirror);
  EXPECT_EQ(c.k, 2);
  EXPECT_EQ(c.generator.trace_path, "/tmp/a#b");
}

TEST(ConfigTest, RejectsUnknownKeysAndBadValues) {
  std::istringstream a("[experiment]\ncolour = red\n");
  EXPECT_THROW(LoadConfig(a), InvalidInput);
  std::istringstream b("[plots]\nx = 1\n");
  EXPECT_THROW(LoadConfig(b), InvalidInput);
  std::istringstream c("[experiment]\nk = three\n");
  EXPECT_THROW(LoadConfig(c), InvalidInput);
  std::istringstream d("[experiment]\nseeds = 5-2\n");
  EXPECT_THROW(LoadConfig(d), InvalidInput);
}

TEST(ConfigTest, EnvironmentOverrides) {
  ExperimentConfig c;
  setenv("KSLAB_OUT_DIR", "/tmp/elsewhere", 1);
  setenv("KSLAB_WORKERS", "3", 1);
  ApplyEnvironment(&c);
  unsetenv("KSLAB_OUT_DIR");
  unsetenv("KSLAB_WORKERS");
  EXPECT_EQ(c.out_dir, "/tmp/elsewhere");
  EXPECT_EQ(c.workers, 3);
}

ExperimentConfig Small(Algorithm a) {
  ExperimentConfig c;
  c.algorithm = a;
  c.k = 2;
  c.length = 15;
  c.seeds = {1, 2, 3};
  c.pages = 6;
  c.branching = 2;
  c.height = 2;
  c.points = 6;
  return c;
}

TEST(ExperimentTest, AllAlgorithmsRunCleanly) {
  for (Algorithm a : {Algorithm::kPaging, Algorithm::kKServer, Algorithm::kMirror,
                      Algorithm::kPipeline}) {
    const Summary s = RunExperiment(Small(a));
    ASSERT_EQ(s.rows.size(), 3u);
    for (const Row& r : s.rows) {
      EXPECT_TRUE(r.ok) << AlgorithmName(a) << " seed " << r.seed << ": " << r.note;
      EXPECT_GE(r.alg_cost, r.opt_cost - 1e-9);
    }
    EXPECT_TRUE(s.ok);
    EXPECT_GE(s.max_ratio, s.mean_ratio);
  }
}

TEST(ExperimentTest, AdversarialTreeRun) {
  ExperimentConfig c = Small(Algorithm::kKServer);
  c.generator.kind = Generator::kAdversarial;
  const Summary s = RunExperiment(c);
  for (const Row& r : s.rows) {
    EXPECT_TRUE(r.ok) << r.note;
    EXPECT_GT(r.alg_cost, 0.0);
  }
}

TEST(ExperimentTest, OutputBytesIndependentOfWorkers) {
  ExperimentConfig c = Small(Algorithm::kMirror);
  c.seeds = ParseSeeds("0-5");
  std::ostringstream one, many;
  WriteCsv(RunExperiment(c), one);
  c.workers = 4;
  WriteCsv(RunExperiment(c), many);
  EXPECT_EQ(one.str(), many.str());
}

TEST(ExperimentTest, ErrorsBecomeFailedRows) {
  ExperimentConfig c = Small(Algorithm::kPaging);
  c.k = 10;  // more servers than pages
  const Summary s = RunExperiment(c);
  EXPECT_FALSE(s.ok);
  EXPECT_NE(s.rows[0].note.find("error"), std::string::npos);
}

TEST(ExperimentTest, WritesOutputFiles) {
  ExperimentConfig c = Small(Algorithm::kMirror);
  c.name = "files";
  c.out_dir = TempDir("out").string();
  WriteOutputs(RunExperiment(c));
  for (const char* f : {"files.csv", "files_timing.csv", "files_summary.txt"}) {
    EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(c.out_dir) / f)) << f;
  }
  std::ifstream csv(std::filesystem::path(c.out_dir) / "files.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header.rfind("seed,algorithm", 0), 0u);
}

TEST(FitTest, RecoversExactLines) {
  const std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
  const LineFit f = FitLine(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
  EXPECT_NEAR(FitThroughOrigin({1, 2}, {3, 6}), 3.0, 1e-12);
  EXPECT_THROW(FitLine({1, 1}, {2, 3}), InvalidInput);
}

TEST(RatioTableTest, OneRowPerK) {
  ExperimentConfig c = Small(Algorithm::kKServer);
  c.verify = hst::VerifyLevel::kNone;
  c.seeds = {1, 2};
  const RatioTable t = CompetitiveRatioTable(c, {2, 3});
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1].k, 3);
  EXPECT_NEAR(t.rows[1].log_k_squared, std::log(3) * std::log(3), 1e-12);
  std::ostringstream out;
  WriteRatioTable(t, out);
  EXPECT_NE(out.str().find("(ln k)^2"), std::string::npos);
}

}  // namespace
}  // namespace kslab::harness
