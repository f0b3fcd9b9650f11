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

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "kslab/embedding.h"
#include "kslab/offline_opt.h"
#include "kslab/paging.h"

namespace kslab::harness {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stream ids under one seed.
constexpr uint64_t kRequestStream = 11;
constexpr uint64_t kMetricStream = 3;
constexpr uint64_t kWeightStream = 7;
constexpr uint64_t kEmbedStream = 5;

std::string Num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double Ratio(double alg, double opt) {
  if (opt > 0.0) return alg / opt;
  return alg > 1e-9 ? kInf : 1.0;
}

// Records the first failed check and the largest slack.
struct Checks {
  Row* row;
  void Max(double v) { row->slack = std::max(row->slack, v); }
  void Require(bool ok, const std::string& what) {
    if (!ok && row->ok) row->note = what;
    row->ok = row->ok && ok;
  }
};

hst::HstTree MakeTree(const ExperimentConfig& c) {
  if (!c.tree_file.empty()) {
    std::ifstream in(c.tree_file);
    if (!in) throw InvalidInput("cannot open tree file " + c.tree_file);
    return hst::HstTree::Parse(in, true);
  }
  return hst::HstTree::Uniform(c.branching, c.height, c.tree_tau);
}

embed::FiniteMetric MakeMetric(const ExperimentConfig& c, uint64_t seed) {
  if (!c.metric_file.empty()) {
    std::ifstream in(c.metric_file);
    if (!in) throw InvalidInput("cannot open metric file " + c.metric_file);
    return embed::FiniteMetric::Parse(in);
  }
  Rng rng = MakeRng(seed, kMetricStream);
  return embed::FiniteMetric::RandomEuclidean(c.points, c.dim, rng);
}

void RunPagingSeed(const ExperimentConfig& c, uint64_t seed, Row* row) {
  Vec w = Vec::Ones(c.pages);
  if (c.weights == "random") {
    Rng rng = MakeRng(seed, kWeightStream);
    for (int i = 0; i < c.pages; ++i) w(i) = std::exp2(UniformIn(rng, 0.0, c.weight_spread));
  } else if (c.weights != "uniform") {
    throw InvalidInput("weights must be uniform or random");
  }
  const paging::Instance inst = paging::Instance::Make(c.pages, c.k, w);
  paging::RunOptions opt;
  opt.verify = c.verify != hst::VerifyLevel::kNone;
  paging::RunResult res;
  if (c.generator.kind == Generator::kAdversarial) {
    res = paging::RunPagingOnline(
        inst, c.length, [](int, const Vec& x) { return AdversarialPage(x); }, opt);
  } else {
    res = paging::RunPaging(inst, GenerateRequests(c.generator, c.pages, c.k, c.length, seed),
                            opt);
  }
  row->alg_cost = res.alg_cost;
  row->opt_cost = res.opt_cost;
  Checks ch{row};
  if (opt.verify) {
    const paging::VerifyReport& v = res.worst;
    ch.Max(v.descent_excess);
    ch.Max(v.mass_drift);
    ch.Max(v.total_mass_error);
    ch.Max(v.movement_excess);
    ch.Max(v.monotone_violation);
    ch.Require(v.descent_excess <= 1e-3, "descent slope");
    ch.Require(v.mass_drift <= 1e-10, "phase mass drift");
    ch.Require(v.total_mass_error <= 1e-10, "total mass");
    ch.Require(v.movement_excess <= 0.0, "movement bound");
    ch.Require(v.monotone_violation <= 0.0, "monotonicity");
  }
}

void RunKServerSeed(const ExperimentConfig& c, uint64_t seed, Row* row) {
  const hst::HstTree tree = MakeTree(c);
  hst::KServerOptions opt;
  opt.verify = c.verify;
  opt.potential.variant = c.variant;
  opt.potential.eps = c.eps;
  opt.policy.h_max = c.h_max;
  hst::FractionalServer server(tree, c.k, opt);
  std::vector<int> requests;
  if (c.generator.kind == Generator::kAdversarial) {
    for (int t = 0; t < c.length; ++t) {
      requests.push_back(AdversarialLeaf(server.layout(), server.x()));
      server.Serve(requests.back());
    }
  } else {
    for (int i : GenerateRequests(c.generator, tree.num_leaves(), c.k, c.length, seed)) {
      requests.push_back(tree.leaves()[i]);
      server.Serve(requests.back());
    }
  }
  const hst::KServerRun& run = server.summary();
  std::vector<int> req_idx, init_idx;
  for (int r : requests) req_idx.push_back(tree.leaf_index(r));
  for (int i = 0; i < c.k; ++i) init_idx.push_back(i);
  row->alg_cost = run.alg_cost;
  row->opt_cost = opt::KServerOpt(tree.LeafMetric(), c.k, req_idx, init_idx).cost;
  Checks ch{row};
  ch.Max(run.demand_shortfall);
  ch.Max(run.service_gap);
  ch.Require(run.service_gap <= 1e-6, "request not served");
  if (c.verify != hst::VerifyLevel::kNone) {
    const hst::DynamicsReport& d = run.dynamics;
    ch.Max(d.sortedness_slack);
    ch.Max(d.level_mass_drift);
    ch.Max(d.sign_violation);
    ch.Require(d.sortedness_slack <= 1e-7, "sortedness");
    ch.Require(d.level_mass_drift <= 1e-6, "level mass drift");
    ch.Require(d.sign_violation <= 1e-6, "flow sign pattern");
    ch.Require(d.union_failures == 0, "union closure");
    ch.Require(run.demand_shortfall <= 1e-9, "leaf conversion shortfall");
  }
  if (c.verify == hst::VerifyLevel::kFull) {
    const hst::DepthReport& d = run.depth;
    ch.Max(d.bregman_excess);
    ch.Require(d.bregman_violations == 0, "Bregman descent");
    ch.Require(d.corollary_charged.pass_fraction() >= 0.99, "depth corollary (charged)");
    ch.Require(d.log2k_charged.pass_fraction() >= 0.99, "rounded movement bound (charged)");
  }
}

void RunMirrorSeed(const ExperimentConfig& c, uint64_t seed, Row* row) {
  const embed::FiniteMetric m = MakeMetric(c, seed);
  const std::vector<int> req = GenerateRequests(c.generator, m.size(), c.k, c.length, seed);
  embed::MirrorOptions opt;
  opt.tau = c.embed_tau;
  const embed::MirrorReport rep =
      embed::MirroredOptCost(m, c.k, req, MakeRng(seed, kEmbedStream), opt);
  row->alg_cost = rep.embedded_cost;
  row->opt_cost = rep.opt_cost;
  Checks ch{row};
  ch.Max(rep.worst_reset_ratio - 1.0);
  ch.Require(rep.reset_violations == 0, "reset accounting");
  ch.Require(rep.mirror_cost >= rep.opt_cost - 1e-9, "mirrored moves contract");
}

void RunPipelineSeed(const ExperimentConfig& c, uint64_t seed, Row* row) {
  const embed::FiniteMetric m = MakeMetric(c, seed);
  const std::vector<int> req = GenerateRequests(c.generator, m.size(), c.k, c.length, seed);
  embed::PipelineOptions opt;
  opt.tau = c.embed_tau;
  opt.max_leaves = c.max_leaves;
  opt.kserver.verify = c.verify == hst::VerifyLevel::kNone ? hst::VerifyLevel::kNone
                                                           : hst::VerifyLevel::kFast;
  opt.kserver.potential.variant = c.variant;
  opt.kserver.potential.eps = c.eps;
  opt.kserver.policy.h_max = c.h_max;
  const embed::PipelineReport rep =
      embed::RunPipeline(m, c.k, req, MakeRng(seed, kEmbedStream), opt);
  row->alg_cost = rep.alg_cost;
  row->opt_cost = rep.opt_cost;
  Checks ch{row};
  ch.Max(rep.service_gap);
  ch.Require(rep.inverse_failures == 0, "chain inverse");
  ch.Require(rep.service_gap <= 1e-6, "request not served");
  if (rep.partial && row->ok) {
    row->note = "partial after " + std::to_string(rep.served) + " requests: " + rep.reason;
  }
}

std::string Trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

// Drops a trailing comment: '#' or ';' preceded by whitespace.
std::string StripComment(const std::string& s) {
  for (size_t i = 1; i < s.size(); ++i) {
    if ((s[i] == '#' || s[i] == ';') && (s[i - 1] == ' ' || s[i - 1] == '\t')) {
      return s.substr(0, i);
    }
  }
  return s;
}

int ToInt(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long x = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0') throw InvalidInput("config: " + key + " is not an integer");
  return static_cast<int>(x);
}

double ToDouble(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') throw InvalidInput("config: " + key + " is not a number");
  return x;
}

}  // namespace

GeneratorSpec ParseGenerator(const std::string& text) {
  GeneratorSpec g;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (head == "uniform") {
    g.kind = Generator::kUniform;
  } else if (head == "zipf") {
    g.kind = Generator::kZipf;
    if (!arg.empty()) g.zipf_exponent = ToDouble("zipf exponent", arg);
  } else if (head == "adversarial" || head == "adversarial-paging") {
    g.kind = Generator::kAdversarial;
  } else if (head == "cycle") {
    g.kind = Generator::kCycle;
  } else if (head == "trace") {
    g.kind = Generator::kTrace;
    g.trace_path = arg;
    if (arg.empty()) throw InvalidInput("trace generator needs trace:<path>");
  } else {
    throw InvalidInput("unknown request generator '" + text + "'");
  }
  if (head != "zipf" && head != "trace" && !arg.empty()) {
    throw InvalidInput("generator '" + head + "' takes no argument");
  }
  return g;
}

std::string GeneratorName(const GeneratorSpec& spec) {
  switch (spec.kind) {
    case Generator::kUniform: return "uniform";
    case Generator::kZipf: return "zipf:" + Num(spec.zipf_exponent);
    case Generator::kAdversarial: return "adversarial";
    case Generator::kCycle: return "cycle";
    case Generator::kTrace: return "trace:" + spec.trace_path;
  }
  return "?";
}

std::vector<int> GenerateRequests(const GeneratorSpec& spec, int n, int k, int length,
                                  uint64_t seed) {
  if (n < 1) throw InvalidInput("GenerateRequests: empty instance");
  Rng rng = MakeRng(seed, kRequestStream);
  std::vector<int> out;
  switch (spec.kind) {
    case Generator::kUniform:
      for (int t = 0; t < length; ++t) out.push_back(UniformInt(rng, n));
      break;
    case Generator::kZipf: {
      std::vector<double> cdf(n);
      double acc = 0.0;
      for (int i = 0; i < n; ++i) cdf[i] = acc += std::pow(i + 1.0, -spec.zipf_exponent);
      for (int t = 0; t < length; ++t) {
        const double u = Uniform01(rng) * acc;
        out.push_back(std::min<int>(n - 1, std::upper_bound(cdf.begin(), cdf.end(), u) -
                                               cdf.begin()));
      }
      break;
    }
    case Generator::kCycle: {
      if (k + 1 > n) throw InvalidInput("cycle generator needs k + 1 points");
      for (int t = 0; t < length; ++t) out.push_back(t % (k + 1));
      break;
    }
    case Generator::kTrace: {
      std::ifstream in(spec.trace_path);
      if (!in) throw InvalidInput("cannot open trace " + spec.trace_path);
      out = ReadTrace(in);
      if (length > 0 && static_cast<int>(out.size()) > length) out.resize(length);
      for (int r : out) {
        if (r >= n) throw InvalidInput("trace id " + std::to_string(r) + " out of range");
      }
      break;
    }
    case Generator::kAdversarial:
      throw InvalidInput("adversarial requests depend on the algorithm state");
  }
  return out;
}

int AdversarialPage(const Vec& x) {
  int best = 0;
  for (int i = 1; i < x.size(); ++i) {
    if (x(i) > x(best)) best = i;
  }
  return best;
}

int AdversarialLeaf(const hst::AssignmentLayout& layout, const Vec& x) {
  // A leaf's first coordinate is its missing server mass.
  int best = -1;
  double most = -kInf;
  for (int l : layout.tree().leaves()) {
    const double v = x(layout.index(l, 0));
    if (v > most) {
      most = v;
      best = l;
    }
  }
  return best;
}

std::vector<int> ReadTrace(std::istream& in) {
  std::vector<int> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      const int v = ToInt("trace", tok);
      if (v < 0) throw InvalidInput("trace: negative id");
      out.push_back(v);
    }
  }
  return out;
}

void WriteTrace(const std::vector<int>& requests, std::ostream& out) {
  for (size_t i = 0; i < requests.size(); ++i) {
    out << requests[i] << ((i + 1) % 20 == 0 || i + 1 == requests.size() ? "\n" : " ");
  }
}

Algorithm ParseAlgorithm(const std::string& text) {
  if (text == "paging") return Algorithm::kPaging;
  if (text == "kserver") return Algorithm::kKServer;
  if (text == "mirror") return Algorithm::kMirror;
  if (text == "pipeline") return Algorithm::kPipeline;
  throw InvalidInput("unknown algorithm '" + text + "'");
}

std::string AlgorithmName(Algorithm a) {
  switch (a) {
    case Algorithm::kPaging: return "paging";
    case Algorithm::kKServer: return "kserver";
    case Algorithm::kMirror: return "mirror";
    case Algorithm::kPipeline: return "pipeline";
  }
  return "?";
}

std::vector<uint64_t> ParseSeeds(const std::string& text) {
  std::vector<uint64_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = Trim(part);
    if (part.empty()) continue;
    const auto dash = part.find('-', 1);
    if (dash == std::string::npos) {
      out.push_back(static_cast<uint64_t>(ToInt("seeds", part)));
    } else {
      const int lo = ToInt("seeds", Trim(part.substr(0, dash)));
      const int hi = ToInt("seeds", Trim(part.substr(dash + 1)));
      if (lo > hi) throw InvalidInput("config: empty seed range " + part);
      for (int s = lo; s <= hi; ++s) out.push_back(static_cast<uint64_t>(s));
    }
  }
  if (out.empty()) throw InvalidInput("config: seed list is empty");
  return out;
}

ExperimentConfig LoadConfig(std::istream& in) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  bool h_max_set = false;
  using Setter = std::function<void(const std::string&)>;
  const std::map<std::string, std::map<std::string, Setter>> keys = {
      {"experiment",
       {{"name", [&](const std::string& v) { c.name = v; }},
        {"algorithm", [&](const std::string& v) { c.algorithm = ParseAlgorithm(v); }},
        {"k", [&](const std::string& v) { c.k = ToInt("k", v); }},
        {"requests", [&](const std::string& v) { c.length = ToInt("requests", v); }},
        {"generator", [&](const std::string& v) { c.generator = ParseGenerator(v); }},
        {"seeds", [&](const std::string& v) { c.seeds = ParseSeeds(v); }},
        {"verify", [&](const std::string& v) { c.verify = hst::ParseVerifyLevel(v); }},
        {"workers", [&](const std::string& v) { c.workers = ToInt("workers", v); }}}},
      {"paging",
       {{"pages", [&](const std::string& v) { c.pages = ToInt("pages", v); }},
        {"weights", [&](const std::string& v) { c.weights = v; }},
        {"weight_spread",
         [&](const std::string& v) { c.weight_spread = ToDouble("weight_spread", v); }}}},
      {"hst",
       {{"branching", [&](const std::string& v) { c.branching = ToInt("branching", v); }},
        {"height", [&](const std::string& v) { c.height = ToInt("height", v); }},
        {"tau", [&](const std::string& v) { c.tree_tau = ToDouble("tau", v); }},
        {"tree", [&](const std::string& v) { c.tree_file = v; }},
        {"variant", [&](const std::string& v) { c.variant = hst::ParseVariant(v); }},
        {"eps", [&](const std::string& v) { c.eps = ToDouble("eps", v); }},
        {"h_max", [&](const std::string& v) {
           c.h_max = ToDouble("h_max", v);
           h_max_set = true;
         }}}},
      {"embedding",
       {{"points", [&](const std::string& v) { c.points = ToInt("points", v); }},
        {"dim", [&](const std::string& v) { c.dim = ToInt("dim", v); }},
        {"metric", [&](const std::string& v) { c.metric_file = v; }},
        {"tau", [&](const std::string& v) { c.embed_tau = ToDouble("tau", v); }},
        {"max_leaves", [&](const std::string& v) { c.max_leaves = ToInt("max_leaves", v); }}}},
      {"output", {{"dir", [&](const std::string& v) { c.out_dir = v; }}}},
  };
  for (const auto& [section, body] : pt) {
    const auto sec = keys.find(section);
    if (sec == keys.end() || body.data() != "") {
      throw InvalidInput("config: unknown section or top-level key '" + section + "'");
    }
    for (const auto& [key, value] : body) {
      const auto it = sec->second.find(key);
      if (it == sec->second.end()) {
        throw InvalidInput("config: unknown key '" + section + "." + key + "'");
      }
      it->second(Trim(StripComment(value.data())));
    }
  }
  if (c.verify == hst::VerifyLevel::kFull && !h_max_set) c.h_max = kFullVerifyHMax;
  if (c.k < 1 || c.length < 0 || c.workers < 1) {
    throw InvalidInput("config: need k >= 1, requests >= 0, workers >= 1");
  }
  return c;
}

ExperimentConfig LoadConfigFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config " + path);
  return LoadConfig(in);
}

void ApplyEnvironment(ExperimentConfig* config) {
  if (const char* dir = std::getenv("KSLAB_OUT_DIR"); dir && *dir) config->out_dir = dir;
  if (const char* w = std::getenv("KSLAB_WORKERS"); w && *w) {
    config->workers = ToInt("KSLAB_WORKERS", w);
    if (config->workers < 1) throw InvalidInput("KSLAB_WORKERS must be positive");
  }
}

Row RunSeed(const ExperimentConfig& config, uint64_t seed) {
  Row row;
  row.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    switch (config.algorithm) {
      case Algorithm::kPaging: RunPagingSeed(config, seed, &row); break;
      case Algorithm::kKServer: RunKServerSeed(config, seed, &row); break;
      case Algorithm::kMirror: RunMirrorSeed(config, seed, &row); break;
      case Algorithm::kPipeline: RunPipelineSeed(config, seed, &row); break;
    }
  } catch (const Error& e) {
    row.ok = false;
    row.note = std::string("error: ") + e.what();
  }
  row.ratio = Ratio(row.alg_cost, row.opt_cost);
  if (row.ok && row.alg_cost < row.opt_cost - 1e-9 * std::max(1.0, row.opt_cost)) {
    row.ok = false;
    row.note = "ALG below OPT";
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

Summary RunExperiment(const ExperimentConfig& config) {
  if (config.seeds.empty()) throw InvalidInput("RunExperiment: no seeds");
  Summary s;
  s.config = config;
  s.rows.resize(config.seeds.size());
  const int workers = std::clamp<int>(config.workers, 1, static_cast<int>(config.seeds.size()));
  std::atomic<size_t> next{0};
  auto work = [&]() {
    for (size_t i = next++; i < config.seeds.size(); i = next++) {
      s.rows[i] = RunSeed(config, config.seeds[i]);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  double sum = 0.0;
  for (const Row& r : s.rows) {
    sum += r.ratio;
    s.max_ratio = std::max(s.max_ratio, r.ratio);
    s.ok = s.ok && r.ok;
  }
  s.mean_ratio = sum / s.rows.size();
  return s;
}

void WriteCsv(const Summary& s, std::ostream& out) {
  out << "seed,algorithm,k,requests,generator,alg_cost,opt_cost,ratio,max_slack,ok,note\n";
  for (const Row& r : s.rows) {
    std::string note = r.note;
    std::replace(note.begin(), note.end(), ',', ';');
    out << r.seed << ',' << AlgorithmName(s.config.algorithm) << ',' << s.config.k << ','
        << s.config.length << ',' << GeneratorName(s.config.generator) << ','
        << Num(r.alg_cost) << ',' << Num(r.opt_cost) << ',' << Num(r.ratio) << ','
        << Num(r.slack) << ',' << (r.ok ? 1 : 0) << ',' << note << '\n';
  }
}

void WriteTimingCsv(const Summary& s, std::ostream& out) {
  out << "seed,seconds\n";
  for (const Row& r : s.rows) out << r.seed << ',' << Num(r.seconds) << '\n';
}

void WriteSummary(const Summary& s, std::ostream& out) {
  const ExperimentConfig& c = s.config;
  out << "experiment " << c.name << ": " << AlgorithmName(c.algorithm) << ", k = " << c.k
      << ", " << c.length << " " << GeneratorName(c.generator) << " requests, "
      << s.rows.size() << " seeds\n";
  out << "mean ratio " << Num(s.mean_ratio) << ", max ratio " << Num(s.max_ratio) << "\n";
  int failed = 0;
  for (const Row& r : s.rows) {
    if (!r.ok) {
      ++failed;
      out << "  seed " << r.seed << " FAILED: " << r.note << "\n";
    } else if (!r.note.empty()) {
      out << "  seed " << r.seed << ": " << r.note << "\n";
    }
  }
  out << (failed ? "invariant checks FAILED on " + std::to_string(failed) + " seeds"
                 : std::string("all invariant checks passed"))
      << "\n";
}

void WriteOutputs(const Summary& s) {
  if (s.config.out_dir.empty()) return;
  const std::filesystem::path dir(s.config.out_dir);
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / (s.config.name + ".csv"));
  WriteCsv(s, csv);
  std::ofstream timing(dir / (s.config.name + "_timing.csv"));
  WriteTimingCsv(s, timing);
  std::ofstream text(dir / (s.config.name + "_summary.txt"));
  WriteSummary(s, text);
  if (!csv || !timing || !text) throw Error("cannot write outputs to " + dir.string());
}

LineFit FitLine(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  if (n != y.size() || n < 2) throw InvalidInput("FitLine: need >= 2 paired points");
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) throw InvalidInput("FitLine: x values are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

double FitThroughOrigin(const std::vector<double>& x, const std::vector<double>& y) {
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  if (sxx <= 0.0) throw InvalidInput("FitThroughOrigin: x is zero");
  return sxy / sxx;
}

RatioTable CompetitiveRatioTable(const ExperimentConfig& base, const std::vector<int>& ks) {
  RatioTable t;
  std::vector<double> x, y;
  for (int k : ks) {
    ExperimentConfig c = base;
    c.k = k;
    c.name = base.name + "_k" + std::to_string(k);
    t.runs.push_back(RunExperiment(c));
    const Summary& s = t.runs.back();
    RatioRow r;
    r.k = k;
    r.mean_ratio = s.mean_ratio;
    r.max_ratio = s.max_ratio;
    r.log_k_squared = std::log(k) * std::log(k);
    r.ok = s.ok;
    t.rows.push_back(r);
    x.push_back(r.log_k_squared);
    y.push_back(r.mean_ratio);
  }
  std::set<double> distinct(x.begin(), x.end());
  if (distinct.size() >= 2) t.fit = FitLine(x, y);
  t.origin_coefficient = *std::max_element(x.begin(), x.end()) > 0 ? FitThroughOrigin(x, y) : 0;
  return t;
}

void WriteRatioTable(const RatioTable& t, std::ostream& out) {
  out << "k,log_k_squared,mean_ratio,max_ratio,ok\n";
  for (const RatioRow& r : t.rows) {
    out << r.k << ',' << Num(r.log_k_squared) << ',' << Num(r.mean_ratio) << ','
        << Num(r.max_ratio) << ',' << (r.ok ? 1 : 0) << '\n';
  }
  out << "# fit mean_ratio = " << Num(t.fit.intercept) << " + " << Num(t.fit.slope)
      << " (ln k)^2, r2 = " << Num(t.fit.r2) << "; through origin c = "
      << Num(t.origin_coefficient) << "\n";
}

}  // namespace kslab::harness
