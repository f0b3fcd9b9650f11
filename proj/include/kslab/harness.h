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

// Experiment orchestration: request generators, seeded batch runs over the
// paging, tree, mirrored-optimum and full-pipeline algorithms, and tidy
// CSV / text output.

#ifndef KSLAB_HARNESS_H_
#define KSLAB_HARNESS_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "kslab/common.h"
#include "kslab/hst.h"

namespace kslab::harness {

enum class Generator { kUniform, kZipf, kAdversarial, kCycle, kTrace };

struct GeneratorSpec {
  Generator kind = Generator::kUniform;
  double zipf_exponent = 1.0;
  std::string trace_path;
};

// "uniform", "zipf" or "zipf:<s>", "adversarial", "cycle", "trace:<path>".
GeneratorSpec ParseGenerator(const std::string& text);
std::string GeneratorName(const GeneratorSpec& spec);

// Oblivious sequences over ids 0..n-1. The cycle visits 0..k in order.
// Adversarial sequences depend on the algorithm state and are produced by
// RunExperiment; here they throw InvalidInput.
std::vector<int> GenerateRequests(const GeneratorSpec& spec, int n, int k, int length,
                                  uint64_t seed);

// Adversarial choices: the page with the most anti-cache mass, and the
// leaf with the least server mass. Ties go to the smallest id.
int AdversarialPage(const Vec& x);
int AdversarialLeaf(const hst::AssignmentLayout& layout, const Vec& x);

// Whitespace-separated ids, '#' comments.
std::vector<int> ReadTrace(std::istream& in);
void WriteTrace(const std::vector<int>& requests, std::ostream& out);

enum class Algorithm { kPaging, kKServer, kMirror, kPipeline };
Algorithm ParseAlgorithm(const std::string& text);
std::string AlgorithmName(Algorithm a);

struct ExperimentConfig {
  std::string name = "experiment";
  Algorithm algorithm = Algorithm::kKServer;
  int k = 3;
  int length = 100;
  GeneratorSpec generator;
  std::vector<uint64_t> seeds{1};
  hst::VerifyLevel verify = hst::VerifyLevel::kFast;
  int workers = 1;
  std::string out_dir;  // empty: no files

  // Paging instances.
  int pages = 20;
  std::string weights = "uniform";  // or "random"
  double weight_spread = 4.0;       // random weights are 2^U[0, spread]

  // Trees: uniform branching^height, or a tree file.
  int branching = 2;
  int height = 4;
  double tree_tau = 2.0;
  std::string tree_file;
  hst::Variant variant = hst::Variant::kWeighted;
  double eps = 0.0;
  double h_max = 1e-2;

  // Metrics for the mirrored optimum and the pipeline.
  int points = 12;
  int dim = 2;
  std::string metric_file;
  double embed_tau = 4.0;
  int max_leaves = 64;
};

// Default integrator step under full verification: the finite-difference
// Bregman check is first order in the step, and at 1e-2 its error alone
// approaches the 1e-3 tolerance.
inline constexpr double kFullVerifyHMax = 2e-3;

// Flat INI document with sections [experiment], [paging], [hst],
// [embedding], [output]. Unknown keys are rejected. verify = full without
// an explicit h_max selects kFullVerifyHMax. KSLAB_OUT_DIR and
// KSLAB_WORKERS override the output directory and worker count.
ExperimentConfig LoadConfig(std::istream& in);
ExperimentConfig LoadConfigFile(const std::string& path);
void ApplyEnvironment(ExperimentConfig* config);
// "1,2,5" or "0-9" (inclusive), or a mix.
std::vector<uint64_t> ParseSeeds(const std::string& text);

struct Row {
  uint64_t seed = 0;
  double alg_cost = 0.0;
  double opt_cost = 0.0;
  double ratio = 0.0;
  double slack = 0.0;  // largest checked invariant slack
  bool ok = true;      // invariants within tolerance and OPT <= ALG
  std::string note;    // first failing check, partial-run reason
  double seconds = 0.0;
};

struct Summary {
  ExperimentConfig config;
  std::vector<Row> rows;  // in seed order
  double mean_ratio = 0.0;
  double max_ratio = 0.0;
  bool ok = true;
};

// Seeds fan out over config.workers threads; each row depends only on
// (config, seed).
Summary RunExperiment(const ExperimentConfig& config);
Row RunSeed(const ExperimentConfig& config, uint64_t seed);

// Deterministic bytes: no timing columns.
void WriteCsv(const Summary& s, std::ostream& out);
void WriteTimingCsv(const Summary& s, std::ostream& out);
void WriteSummary(const Summary& s, std::ostream& out);
// Writes <name>.csv, <name>_timing.csv and <name>_summary.txt into
// config.out_dir (created if missing). No-op for an empty out_dir.
void WriteOutputs(const Summary& s);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
// Least squares y = intercept + slope x. Needs two distinct x values.
LineFit FitLine(const std::vector<double>& x, const std::vector<double>& y);
// Least squares through the origin: y = slope x.
double FitThroughOrigin(const std::vector<double>& x, const std::vector<double>& y);

struct RatioRow {
  int k = 0;
  double mean_ratio = 0.0;
  double max_ratio = 0.0;
  double log_k_squared = 0.0;  // (ln k)^2
  bool ok = true;
};

struct RatioTable {
  std::vector<RatioRow> rows;
  LineFit fit;                // mean ratio against (ln k)^2
  double origin_coefficient = 0.0;  // mean ratio = c (ln k)^2
  std::vector<Summary> runs;
};

RatioTable CompetitiveRatioTable(const ExperimentConfig& base, const std::vector<int>& ks);
void WriteRatioTable(const RatioTable& t, std::ostream& out);

}  // namespace kslab::harness

#endif  // KSLAB_HARNESS_H_
