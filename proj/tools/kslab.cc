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

// Command-line front end: batch experiments, single embedding runs, offline
// optima and the acceptance suite.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "kslab/acceptance.h"
#include "kslab/common.h"
#include "kslab/embedding.h"
#include "kslab/harness.h"
#include "kslab/offline_opt.h"

namespace {

using kslab::InvalidInput;
namespace harness = kslab::harness;
namespace embed = kslab::embed;

std::ifstream OpenOrThrow(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  return in;
}

std::vector<int> ReadTraceFile(const std::string& path) {
  std::ifstream in = OpenOrThrow(path);
  return harness::ReadTrace(in);
}

// A file of request ids, or a generator spec drawn for `length` requests.
std::vector<int> ResolveRequests(const std::string& arg, int n, int k, int length,
                                 uint64_t seed) {
  if (std::filesystem::exists(arg)) return ReadTraceFile(arg);
  return harness::GenerateRequests(harness::ParseGenerator(arg), n, k, length, seed);
}

// Comma/whitespace separated numbers, inline or in a file.
kslab::Vec ReadNumbers(const std::string& arg) {
  std::string text = arg;
  if (std::filesystem::exists(arg)) {
    std::ifstream in = OpenOrThrow(arg);
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  for (char& c : text) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(text);
  std::vector<double> values;
  for (double v; in >> v;) values.push_back(v);
  if (!in.eof()) throw InvalidInput("bad number list: " + arg);
  return Eigen::Map<kslab::Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

struct CommonFlags {
  int k = 3;
  int length = 100;
  std::string generator = "uniform";
  std::string seeds = "1";
  int workers = 1;
  std::string out_dir;
  std::string name;
};

void AddCommon(CLI::App* app, CommonFlags* f) {
  app->add_option("--k", f->k, "servers / cache size");
  app->add_option("--requests", f->length, "requests per run");
  app->add_option("--generator", f->generator,
                  "uniform | zipf[:s] | adversarial | cycle | trace:<path>");
  app->add_option("--seeds", f->seeds, "e.g. 1,3-5");
  app->add_option("--workers", f->workers, "threads over seeds");
  app->add_option("--out-dir", f->out_dir, "write <name>.csv and summaries here");
  app->add_option("--name", f->name, "output file stem");
}

void ApplyCommon(const CommonFlags& f, harness::ExperimentConfig* c) {
  c->k = f.k;
  c->length = f.length;
  c->generator = harness::ParseGenerator(f.generator);
  c->seeds = harness::ParseSeeds(f.seeds);
  c->workers = f.workers;
  c->out_dir = f.out_dir;
  c->name = f.name.empty() ? harness::AlgorithmName(c->algorithm) : f.name;
  harness::ApplyEnvironment(c);
}

int RunAndReport(const harness::ExperimentConfig& c) {
  const harness::Summary s = harness::RunExperiment(c);
  harness::WriteSummary(s, std::cout);
  harness::WriteOutputs(s);
  return s.ok ? 0 : 1;
}

int EmbedCommand(const std::string& metric_path, int k, double tau,
                 const std::string& requests_arg, int length, uint64_t seed,
                 const std::string& mode, int trials, int workers,
                 const std::string& csv_out) {
  std::ifstream in = OpenOrThrow(metric_path);
  const embed::FiniteMetric m = embed::FiniteMetric::Parse(in);
  const std::vector<int> req = ResolveRequests(requests_arg, m.size(), k, length, seed);
  std::ofstream csv;
  if (!csv_out.empty()) {
    csv.open(csv_out);
    if (!csv) throw InvalidInput("cannot write " + csv_out);
  }
  std::printf("metric: %d points, aspect ratio %.4g, %d levels at tau %.3g; %zu requests\n",
              m.size(), m.aspect_ratio(), m.Levels(tau), tau, req.size());
  if (mode == "stretch-mc") {
    const auto est = embed::StretchMc(m, k, tau, req, trials, seed, workers);
    int failures = 0;
    double worst = 0.0;
    if (csv.is_open()) csv << "x,distance,mean,stderr,stretch,bound,ok\n";
    for (const auto& e : est) {
      worst = std::max(worst, e.stretch());
      if (!e.ok()) ++failures;
      if (csv.is_open()) {
        csv << e.x << ',' << e.distance << ',' << e.mean << ',' << e.stderr_ << ','
            << e.stretch() << ',' << e.bound << ',' << (e.ok() ? 1 : 0) << '\n';
      }
    }
    std::printf("expected stretch to point %d over %d trials: max %.4f, bound factor %.2f, "
                "%d points above bound\n",
                req.back(), trials, worst, est.empty() ? 0.0 : est[0].bound / est[0].distance,
                failures);
    return failures == 0 ? 0 : 1;
  }
  if (mode == "mirror-opt") {
    embed::MirrorOptions opt;
    opt.tau = tau;
    const embed::MirrorReport r = embed::MirroredOptCost(m, k, req, kslab::MakeRng(seed, 5), opt);
    std::printf("opt %.6g embedded %.6g (stack %.6g: resets %.6g, insertions %.6g; mirrored "
                "%.6g) ratio %.4f, M = %d, reset checks %d, violations %d\n",
                r.opt_cost, r.embedded_cost, r.stack_move_cost, r.reset_cost, r.insertion_cost,
                r.mirror_cost, r.ratio, r.levels, r.reset_checks, r.reset_violations);
    if (csv.is_open()) {
      csv << "t,embedded_cost,opt_cost\n";
      for (size_t i = 0; i < r.checkpoint_t.size(); ++i) {
        csv << r.checkpoint_t[i] << ',' << r.checkpoint_cost[i] << ',' << r.checkpoint_opt[i]
            << '\n';
      }
    }
    return r.reset_violations == 0 ? 0 : 1;
  }
  if (mode == "full-pipeline") {
    embed::PipelineOptions opt;
    opt.tau = tau;
    const embed::PipelineReport r = embed::RunPipeline(m, k, req, kslab::MakeRng(seed, 5), opt);
    std::printf("served %d/%zu, alg %.6g (tree %.6g), opt %.6g, ratio %.4f, %d leaves%s%s\n",
                r.served, req.size(), r.alg_cost, r.tree_cost, r.opt_cost, r.ratio, r.leaves,
                r.partial ? ", partial: " : "", r.reason.c_str());
    if (csv.is_open()) {
      csv << "served,alg_cost,tree_cost,opt_cost,ratio,leaves,partial\n"
          << r.served << ',' << r.alg_cost << ',' << r.tree_cost << ',' << r.opt_cost << ','
          << r.ratio << ',' << r.leaves << ',' << (r.partial ? 1 : 0) << '\n';
    }
    return r.inverse_failures == 0 ? 0 : 1;
  }
  throw InvalidInput("unknown mode " + mode);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kslab: online paging and k-server by mirror descent"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "run an experiment from an INI config");
  run->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);

  std::string ks_text = "2,3,4,6,8";
  auto* table = app.add_subcommand("table", "competitive-ratio table over k");
  table->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
  table->add_option("--ks", ks_text, "comma-separated k values");

  CommonFlags paging_flags;
  int pages = 20;
  std::string weights = "uniform";
  auto* paging = app.add_subcommand("paging", "fractional weighted paging runs");
  AddCommon(paging, &paging_flags);
  paging->add_option("--pages", pages, "number of pages");
  paging->add_option("--weights", weights, "uniform | random");

  CommonFlags tree_flags;
  harness::ExperimentConfig tree_defaults;
  std::string tree_file, variant = "weighted", verify = "fast";
  auto* kserver = app.add_subcommand("kserver", "fractional k-server runs on a tree");
  AddCommon(kserver, &tree_flags);
  kserver->add_option("--branching", tree_defaults.branching, "uniform tree branching");
  kserver->add_option("--height", tree_defaults.height, "uniform tree height");
  kserver->add_option("--tree-tau", tree_defaults.tree_tau, "uniform tree weight ratio");
  kserver->add_option("--tree", tree_file, "tree file instead of a uniform tree")
      ->check(CLI::ExistingFile);
  kserver->add_option("--variant", variant, "combinatorial | cardinality | weighted");
  kserver->add_option("--verify", verify, "none | fast | full");
  auto* h_max_opt = kserver->add_option("--h-max", tree_defaults.h_max,
                                        "integrator step cap (full verification: 2e-3)");

  std::string metric_path, requests_arg = "uniform", mode = "mirror-opt", csv_out;
  int embed_k = 3, embed_length = 200, trials = 1000, embed_workers = 1;
  double tau = 4.0;
  uint64_t seed = 1;
  auto* emb = app.add_subcommand("embed", "dynamic embedding of a finite metric");
  emb->add_option("--metric", metric_path, "metric file")->required()->check(CLI::ExistingFile);
  emb->add_option("--k", embed_k, "servers");
  emb->add_option("--tau", tau, "level ratio (>= 4)");
  emb->add_option("--requests", requests_arg, "trace file or generator spec");
  emb->add_option("--length", embed_length, "requests drawn from a generator spec");
  emb->add_option("--seed", seed, "seed");
  emb->add_option("--mode", mode, "stretch-mc | mirror-opt | full-pipeline")
      ->check(CLI::IsMember({"stretch-mc", "mirror-opt", "full-pipeline"}));
  emb->add_option("--trials", trials, "Monte Carlo trials");
  emb->add_option("--workers", embed_workers, "Monte Carlo threads");
  emb->add_option("--csv-out", csv_out, "CSV output path");

  auto* opt = app.add_subcommand("opt", "offline optima");
  opt->require_subcommand(1);
  std::string opt_metric, opt_requests, opt_initial, opt_weights;
  int opt_k = 2;
  auto* opt_ks = opt->add_subcommand("kserver", "k-server optimum on a finite metric");
  opt_ks->add_option("--metric", opt_metric, "metric file")->required()->check(CLI::ExistingFile);
  opt_ks->add_option("--requests", opt_requests, "trace file")->required()->check(CLI::ExistingFile);
  opt_ks->add_option("--k", opt_k, "servers");
  opt_ks->add_option("--initial", opt_initial, "initial positions, default: first requests");
  auto* opt_pg = opt->add_subcommand("paging", "weighted paging optimum");
  opt_pg->add_option("--weights", opt_weights, "page weights, inline or file")->required();
  opt_pg->add_option("--requests", opt_requests, "trace file")->required()->check(CLI::ExistingFile);
  opt_pg->add_option("--k", opt_k, "cache size");
  opt_pg->add_option("--initial", opt_initial, "initially cached pages");

  std::vector<int> criteria;
  int verify_workers = 1;
  auto* ver = app.add_subcommand("verify", "run the acceptance criteria");
  ver->add_option("criteria", criteria, "criterion ids (default: all)");
  ver->add_option("--workers", verify_workers, "threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return RunAndReport(harness::LoadConfigFile(config_path));
    if (*table) {
      const harness::ExperimentConfig c = harness::LoadConfigFile(config_path);
      std::vector<int> ks;
      for (double v : ReadNumbers(ks_text)) ks.push_back(static_cast<int>(v));
      const harness::RatioTable t = harness::CompetitiveRatioTable(c, ks);
      harness::WriteRatioTable(t, std::cout);
      for (const auto& s : t.runs) harness::WriteOutputs(s);
      return 0;
    }
    if (*paging) {
      harness::ExperimentConfig c;
      c.algorithm = harness::Algorithm::kPaging;
      c.pages = pages;
      c.weights = weights;
      ApplyCommon(paging_flags, &c);
      return RunAndReport(c);
    }
    if (*kserver) {
      harness::ExperimentConfig c = tree_defaults;
      c.algorithm = harness::Algorithm::kKServer;
      c.tree_file = tree_file;
      c.variant = kslab::hst::ParseVariant(variant);
      c.verify = kslab::hst::ParseVerifyLevel(verify);
      if (c.verify == kslab::hst::VerifyLevel::kFull && h_max_opt->count() == 0) {
        c.h_max = harness::kFullVerifyHMax;
      }
      ApplyCommon(tree_flags, &c);
      return RunAndReport(c);
    }
    if (*emb) {
      return EmbedCommand(metric_path, embed_k, tau, requests_arg, embed_length, seed, mode,
                          trials, embed_workers, csv_out);
    }
    if (*opt_ks) {
      std::ifstream in = OpenOrThrow(opt_metric);
      const embed::FiniteMetric m = embed::FiniteMetric::Parse(in);
      const std::vector<int> req = ReadTraceFile(opt_requests);
      std::vector<int> init;
      if (opt_initial.empty()) {
        init = embed::InitialServers(m.size(), opt_k, req);
      } else {
        for (double v : ReadNumbers(opt_initial)) init.push_back(static_cast<int>(v));
      }
      const kslab::opt::KServerSchedule s = kslab::opt::KServerOpt(m.matrix(), opt_k, req, init);
      std::printf("opt %.9g over %zu requests (distances scaled by %.6g)\n", s.cost, req.size(),
                  m.scale());
      for (size_t t = 0; t < s.configurations.size(); ++t) {
        std::printf("%zu %d:", t, req[t]);
        for (int p : s.configurations[t]) std::printf(" %d", p);
        std::printf("\n");
      }
      return 0;
    }
    if (*opt_pg) {
      const kslab::Vec w = ReadNumbers(opt_weights);
      const std::vector<int> req = ReadTraceFile(opt_requests);
      std::vector<int> init;
      for (double v : ReadNumbers(opt_initial)) init.push_back(static_cast<int>(v));
      std::printf("opt %.9g over %zu requests\n",
                  kslab::opt::WeightedPagingOpt(w, opt_k, req, init), req.size());
      return 0;
    }
    if (*ver) {
      if (criteria.empty()) criteria = kslab::acceptance::AllCriteria();
      kslab::acceptance::Options o;
      o.workers = verify_workers;
      int failed = 0;
      for (int id : criteria) {
        const auto r = kslab::acceptance::RunCriterion(id, o);
        std::printf("criterion %d %s %s: %s [%.1f s]\n", r.id, r.pass ? "PASS" : "FAIL",
                    r.title.c_str(), r.summary.c_str(), r.seconds);
        for (const auto& note : r.notes) std::printf("    %s\n", note.c_str());
        std::fflush(stdout);
        if (!r.pass) ++failed;
      }
      return failed == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
