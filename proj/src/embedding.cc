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

#include "kslab/embedding.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "kslab/offline_opt.h"

namespace kslab::embed {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Strips '#' comments and returns the remaining tokens.
std::vector<std::string> Tokens(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) out.push_back(tok);
  }
  return out;
}

double ToDouble(const std::string& s) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) throw InvalidInput("metric file: bad number '" + s + "'");
  return v;
}

int ToInt(const std::string& s) {
  const double v = ToDouble(s);
  if (v != std::floor(v) || v < 0 || v > 1e7) {
    throw InvalidInput("metric file: bad count '" + s + "'");
  }
  return static_cast<int>(v);
}

}  // namespace

FiniteMetric FiniteMetric::FromMatrix(const Mat& d) {
  if (d.rows() == 0) throw InvalidInput("FiniteMetric: empty metric");
  opt::ValidateMetric(d);
  FiniteMetric m;
  m.scale_ = d.maxCoeff();
  const int n = static_cast<int>(d.rows());
  if (n == 1) {
    m.scale_ = 1.0;
    m.d_ = d;
    return m;
  }
  double lo = kInf;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) lo = std::min(lo, d(i, j));
  }
  if (!(lo > 0.0)) {
    throw InvalidInput("FiniteMetric: distinct points at distance 0 (infinite aspect ratio)");
  }
  m.d_ = d / m.scale_;
  m.min_distance_ = lo / m.scale_;
  return m;
}

FiniteMetric FiniteMetric::Parse(std::istream& in) {
  const std::vector<std::string> tok = Tokens(in);
  if (tok.empty()) throw InvalidInput("metric file: empty");
  size_t p = 0;
  auto next = [&]() -> const std::string& {
    if (p >= tok.size()) throw InvalidInput("metric file: truncated");
    return tok[p++];
  };
  Mat d;
  if (tok[0] == "l1" || tok[0] == "l2") {
    const bool l1 = tok[0] == "l1";
    ++p;
    const int n = ToInt(next());
    const int dim = ToInt(next());
    if (n == 0 || dim == 0) throw InvalidInput("metric file: empty point list");
    Mat pts(n, dim);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < dim; ++c) pts(i, c) = ToDouble(next());
    }
    d.resize(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const Vec diff = (pts.row(i) - pts.row(j)).transpose();
        d(i, j) = l1 ? diff.lpNorm<1>() : diff.norm();
      }
    }
  } else {
    const int n = ToInt(next());
    d = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) d(i, j) = d(j, i) = ToDouble(next());
    }
  }
  if (p != tok.size()) throw InvalidInput("metric file: trailing tokens");
  return FromMatrix(d);
}

FiniteMetric FiniteMetric::RandomEuclidean(int n, int dim, Rng& rng) {
  if (n < 1 || dim < 1) throw InvalidInput("RandomEuclidean: n, dim >= 1");
  Mat pts(n, dim);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < dim; ++c) pts(i, c) = Uniform01(rng);
  }
  Mat d(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) d(i, j) = (pts.row(i) - pts.row(j)).norm();
  }
  return FromMatrix(d);
}

int FiniteMetric::Levels(double tau) const {
  if (size() == 1) return 0;
  int m = 0;
  while (std::pow(tau, -m) >= min_distance_) ++m;
  return m;
}

std::string Chain::PrefixName(int j) const {
  if (j == 0) return "X";
  std::string s;
  for (int i = 1; i <= j; ++i) {
    s += i == 1 ? "" : "|";
    for (size_t a = 0; a < sets[i].size(); ++a) {
      if (a) s += ',';
      s += std::to_string(sets[i][a]);
    }
  }
  return s;
}

double ChainDistance(const Chain& a, const Chain& b, double tau) {
  const int common = std::min(a.length(), b.length());
  int lca = -1;
  while (lca < common && a.sets[lca + 1] == b.sets[lca + 1]) ++lca;
  if (lca == a.length() && lca == b.length()) return 0.0;
  if (lca < 0) throw InvalidInput("ChainDistance: chains with different roots");
  return std::pow(tau, -lca);
}

int InvertChain(const Chain& c, int levels) {
  if (!c.Complete(levels)) throw InvalidInput("InvertChain: chain is not complete");
  return c.sets.back()[0];
}

TauStack::TauStack(int n, double tau, std::vector<std::vector<int>> block)
    : n_(n), tau_(tau), block_(std::move(block)) {
  if (block_.empty()) throw InvalidInput("TauStack: no levels");
  for (const auto& level : block_) {
    if (static_cast<int>(level.size()) != n) throw InvalidInput("TauStack: level size");
  }
  for (int x = 0; x < n; ++x) {
    if (block_[0][x] != block_[0][0] || block_[0][x] < 0) {
      throw InvalidInput("TauStack: level 0 must be a single block");
    }
  }
}

bool TauStack::SameBlock(int j, int x, int y) const {
  return x == y || (block_[j][x] >= 0 && block_[j][x] == block_[j][y]);
}

Chain TauStack::Embed(int x) const {
  Chain c;
  std::vector<int> cell(n_);
  for (int y = 0; y < n_; ++y) cell[y] = y;
  c.sets.push_back(cell);
  for (int j = 1; j <= levels(); ++j) {
    std::vector<int> next;
    for (int y : cell) {
      if (SameBlock(j, x, y)) next.push_back(y);
    }
    cell = std::move(next);
    c.sets.push_back(cell);
  }
  return c;
}

void StackReport::Merge(const StackReport& o) {
  diameter_excess = std::max(diameter_excess, o.diameter_excess);
  diameter_violations += o.diameter_violations;
  contraction_violations += o.contraction_violations;
  prestack_violations += o.prestack_violations;
  inverse_failures += o.inverse_failures;
  incomplete_chains += o.incomplete_chains;
  pairs += o.pairs;
}

StackReport VerifyStack(const TauStack& stack, const FiniteMetric& metric, double tol) {
  const int n = stack.size();
  const int m = stack.levels();
  const double tau = stack.tau();
  StackReport rep;
  rep.diameter_excess = -kInf;
  for (int j = 0; j <= m; ++j) {
    const double cap = std::pow(tau, -j);
    for (int x = 0; x < n; ++x) {
      for (int y = x + 1; y < n; ++y) {
        if (!stack.SameBlock(j, x, y)) continue;
        rep.diameter_excess = std::max(rep.diameter_excess, metric(x, y) - cap);
        if (metric(x, y) > cap + tol) ++rep.diameter_violations;
      }
    }
  }
  std::vector<Chain> chains;
  for (int x = 0; x < n; ++x) {
    chains.push_back(stack.Embed(x));
    if (!chains.back().Complete(m)) {
      ++rep.incomplete_chains;
    } else if (InvertChain(chains.back(), m) != x) {
      ++rep.inverse_failures;
    }
  }
  for (int x = 0; x < n; ++x) {
    for (int y = x + 1; y < n; ++y) {
      ++rep.pairs;
      const double dt = ChainDistance(chains[x], chains[y], tau);
      if (metric(x, y) > dt + tol) ++rep.contraction_violations;
      double split = 0.0;
      for (int j = 1; j <= m; ++j) {
        if (!stack.SameBlock(j, x, y)) split += std::pow(tau, -j);
      }
      if (dt > tau * split + tol) ++rep.prestack_violations;
    }
  }
  return rep;
}

double SampleRadius(int j, int k, double tau, Rng& rng) {
  if (k < 2) throw InvalidInput("SampleRadius: needs k >= 2");
  const double u = Uniform01(rng);
  const double rate = std::pow(tau, j) * std::log(static_cast<double>(k));
  const double r = -std::log1p(-u * (k - 1.0) / k) / rate;
  return std::min(r, std::pow(tau, -j));
}

double RadiusCdf(double r, int j, int k, double tau) {
  if (k < 2) throw InvalidInput("RadiusCdf: needs k >= 2");
  if (r <= 0.0) return 0.0;
  const double top = std::pow(tau, -j);
  if (r >= top) return 1.0;
  const double rate = std::pow(tau, j) * std::log(static_cast<double>(k));
  return k / (k - 1.0) * -std::expm1(-rate * r);
}

double RadiusMean(int j, int k, double tau) {
  // Integral of (1 - CDF) over [0, tau^-j].
  const double top = std::pow(tau, -j);
  const double rate = std::pow(tau, j) * std::log(static_cast<double>(k));
  const double kk = k / (k - 1.0);
  return top - kk * (top + std::expm1(-rate * top) / rate);
}

DynamicEmbedder::DynamicEmbedder(const FiniteMetric& metric, int k, double tau, Rng rng)
    : metric_(&metric), k_(k), tau_(tau), levels_(metric.Levels(tau)), rng_(rng) {
  if (k < 1) throw InvalidInput("DynamicEmbedder: k >= 1");
  if (tau < 4.0) throw InvalidInput("DynamicEmbedder: tau >= 4");
  centers_.resize(levels_ + 1);
  radii_.resize(levels_ + 1);
  block_of_.assign(levels_ + 1, std::vector<int>(metric.size(), -1));
  resets_.assign(levels_ + 1, 0);
}

double DynamicEmbedder::CenterDistance(int j, int x) const {
  double best = kInf;
  for (int c : centers_[j]) best = std::min(best, (*metric_)(x, c));
  return best;
}

void DynamicEmbedder::Process(int sigma, const Observer& observer) {
  if (sigma < 0 || sigma >= metric_->size()) throw InvalidInput("Process: bad point");
  ++t_;
  const int cap = 2 * std::max(k_, 1);
  for (int j = 1; j <= levels_; ++j) {
    if (static_cast<int>(centers_[j].size()) >= cap) {
      for (int i = j; i <= levels_; ++i) {
        centers_[i].clear();
        radii_[i].clear();
        std::fill(block_of_[i].begin(), block_of_[i].end(), -1);
      }
      ++resets_[j];
      events_.push_back({t_, EmbedEvent::kReset, j, -1, 0.0});
      if (observer) observer(events_.back());
    }
    const double scale = std::pow(tau_, -j - 1);
    if (CenterDistance(j, sigma) > scale) {
      const double r = scale + (greedy() ? 0.0 : SampleRadius(j + 1, k_, tau_, rng_));
      const int id = static_cast<int>(centers_[j].size());
      centers_[j].push_back(sigma);
      radii_[j].push_back(r);
      for (int y = 0; y < metric_->size(); ++y) {
        if (block_of_[j][y] < 0 && (*metric_)(sigma, y) <= r) block_of_[j][y] = id;
      }
      events_.push_back({t_, EmbedEvent::kInsert, j, sigma, r});
      if (observer) observer(events_.back());
    }
  }
}

TauStack DynamicEmbedder::Stack() const {
  std::vector<std::vector<int>> block = block_of_;
  std::fill(block[0].begin(), block[0].end(), 0);
  return TauStack(metric_->size(), tau_, std::move(block));
}

SeparationEstimate SeparationProbability(const FiniteMetric& metric, int k, double tau,
                                         const std::vector<int>& prefix, int j, int x,
                                         int y, int trials, uint64_t seed, int workers) {
  if (k < 2) throw InvalidInput("SeparationProbability: needs k >= 2");
  if (trials < 2) throw InvalidInput("SeparationProbability: needs >= 2 trials");
  const int m = metric.Levels(tau);
  if (j < 1 || j > m) throw InvalidInput("SeparationProbability: level out of range");
  SeparationEstimate est;
  est.trials = trials;
  est.bound = (2.0 + 4.0 * std::numbers::e) * metric(x, y) * std::pow(tau, j + 1) *
              std::log(static_cast<double>(k));
  {
    // Centers do not depend on the radii, so one run decides the precondition.
    DynamicEmbedder e(metric, k, tau, MakeRng(seed, 0));
    for (int p : prefix) e.Process(p);
    est.precondition = e.CenterDistance(j, y) <= std::pow(tau, -j - 1);
  }
  if (!est.precondition) {
    throw InvalidInput("SeparationProbability: y is not near a level-j center");
  }
  workers = std::clamp(workers, 1, trials);
  std::vector<long> hits(workers, 0);
  auto work = [&](int w) {
    for (int i = w; i < trials; i += workers) {
      DynamicEmbedder e(metric, k, tau, MakeRng(seed, static_cast<uint64_t>(i)));
      for (int p : prefix) e.Process(p);
      if (!e.Stack().SameBlock(j, x, y)) ++hits[w];
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  long total = 0;
  for (long h : hits) total += h;
  est.estimate = static_cast<double>(total) / trials;
  est.stderr_ = std::sqrt(est.estimate * (1.0 - est.estimate) / (trials - 1.0));
  return est;
}

std::vector<StretchEstimate> StretchMc(const FiniteMetric& metric, int k, double tau,
                                       const std::vector<int>& requests, int trials,
                                       uint64_t seed, int workers) {
  if (k < 2) throw InvalidInput("StretchMc: needs k >= 2");
  if (trials < 2) throw InvalidInput("StretchMc: needs >= 2 trials");
  if (requests.empty()) throw InvalidInput("StretchMc: needs a request");
  const int n = metric.size();
  const int last = requests.back();
  workers = std::clamp(workers, 1, trials);
  // Per worker: running sums of the distance and its square for each point.
  std::vector<Vec> sum(workers, Vec::Zero(n)), sum_sq(workers, Vec::Zero(n));
  auto work = [&](int w) {
    for (int i = w; i < trials; i += workers) {
      DynamicEmbedder e(metric, k, tau, MakeRng(seed, static_cast<uint64_t>(i)));
      for (int p : requests) e.Process(p);
      const TauStack stack = e.Stack();
      const Chain target = stack.Embed(last);
      for (int x = 0; x < n; ++x) {
        const double d = ChainDistance(stack.Embed(x), target, tau);
        sum[w](x) += d;
        sum_sq[w](x) += d * d;
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  Vec s = Vec::Zero(n), s2 = Vec::Zero(n);
  for (int w = 0; w < workers; ++w) {
    s += sum[w];
    s2 += sum_sq[w];
  }
  const double scale = (2.0 + 4.0 * std::numbers::e) * tau * tau * metric.Levels(tau) *
                       std::log(static_cast<double>(k));
  std::vector<StretchEstimate> out;
  for (int x = 0; x < n; ++x) {
    if (x == last) continue;
    StretchEstimate est;
    est.x = x;
    est.distance = metric(x, last);
    est.mean = s(x) / trials;
    const double var = std::max(0.0, (s2(x) - trials * est.mean * est.mean) / (trials - 1.0));
    est.stderr_ = std::sqrt(var / trials);
    est.bound = scale * est.distance;
    out.push_back(est);
  }
  return out;
}

std::vector<int> InitialServers(int n, int k, const std::vector<int>& requests) {
  if (k > n) throw InvalidInput("InitialServers: k exceeds the number of points");
  std::vector<int> out;
  std::vector<bool> used(n, false);
  for (int r : requests) {
    if (static_cast<int>(out.size()) == k) break;
    if (!used[r]) {
      used[r] = true;
      out.push_back(r);
    }
  }
  for (int p = 0; static_cast<int>(out.size()) < k; ++p) {
    if (!used[p]) {
      used[p] = true;
      out.push_back(p);
    }
  }
  return out;
}

MirrorReport MirroredOptCost(const FiniteMetric& metric, int k,
                             const std::vector<int>& requests, Rng rng,
                             const MirrorOptions& options) {
  const int n = metric.size();
  for (int r : requests) {
    if (r < 0 || r >= n) throw InvalidInput("MirroredOptCost: request out of range");
  }
  const double tau = options.tau;
  const std::vector<int> initial = InitialServers(n, k, requests);
  const opt::KServerSchedule schedule = opt::KServerOpt(metric.matrix(), k, requests, initial);

  DynamicEmbedder embedder(metric, k, tau, rng);
  MirrorReport rep;
  rep.levels = embedder.levels();
  rep.opt_cost = schedule.cost;

  std::vector<int> pos = initial;
  auto images = [&](const TauStack& s) {
    std::vector<Chain> out;
    for (int p : pos) out.push_back(s.Embed(p));
    return out;
  };
  auto moved = [&](const std::vector<Chain>& a, const std::vector<Chain>& b) {
    double c = 0.0;
    for (int s = 0; s < k; ++s) c += ChainDistance(a[s], b[s], tau);
    return c;
  };

  std::set<int> checkpoints(options.checkpoints.begin(), options.checkpoints.end());
  checkpoints.insert(static_cast<int>(requests.size()));
  std::map<int, double> opt_prefix;
  auto prefix_opt = [&](int t) {
    auto it = opt_prefix.find(t);
    if (it != opt_prefix.end()) return it->second;
    const std::vector<int> pre(requests.begin(), requests.begin() + t);
    const double c = opt::KServerOpt(metric.matrix(), k, pre, initial).cost;
    opt_prefix[t] = c;
    return c;
  };

  std::vector<Chain> cur = images(embedder.Stack());
  for (size_t t = 0; t < requests.size(); ++t) {
    const std::vector<Chain> start = cur;
    bool reset = false;
    embedder.Process(requests[t], [&](const EmbedEvent& ev) {
      std::vector<Chain> next = images(embedder.Stack());
      const double c = moved(cur, next);
      (ev.type == EmbedEvent::kReset ? rep.reset_cost : rep.insertion_cost) += c;
      reset |= ev.type == EmbedEvent::kReset;
      cur = std::move(next);
    });
    rep.stack_move_cost += moved(start, cur);

    const TauStack stack = embedder.Stack();
    for (int s = 0; s < k; ++s) {
      if (schedule.configurations[t][s] != pos[s]) {
        const Chain to = stack.Embed(schedule.configurations[t][s]);
        rep.mirror_cost += ChainDistance(cur[s], to, tau);
        cur[s] = to;
        pos[s] = schedule.configurations[t][s];
      }
    }

    const int done = static_cast<int>(t) + 1;
    if (reset) {
      const double opt_t = prefix_opt(done);
      for (int j = 1; j <= embedder.levels(); ++j) {
        const double charged = k * std::pow(tau, -j - 1) * embedder.resets(j);
        if (charged == 0.0) continue;
        ++rep.reset_checks;
        rep.worst_reset_ratio =
            std::max(rep.worst_reset_ratio, opt_t > 0.0 ? charged / opt_t : kInf);
        if (charged > opt_t * (1.0 + 1e-9) + 1e-12) ++rep.reset_violations;
      }
    }
    if (checkpoints.count(done)) {
      rep.checkpoint_t.push_back(done);
      rep.checkpoint_cost.push_back(rep.stack_move_cost + rep.mirror_cost);
      rep.checkpoint_opt.push_back(done == static_cast<int>(requests.size())
                                       ? schedule.cost
                                       : prefix_opt(done));
    }
  }
  rep.resets.assign(embedder.levels() + 1, 0);
  for (int j = 1; j <= embedder.levels(); ++j) rep.resets[j] = embedder.resets(j);
  rep.embedded_cost = rep.stack_move_cost + rep.mirror_cost;
  rep.ratio = rep.opt_cost > 0.0 ? rep.embedded_cost / rep.opt_cost
                                 : (rep.embedded_cost > 0.0 ? kInf : 1.0);
  return rep;
}

PipelineReport RunPipeline(const FiniteMetric& metric, int k,
                           const std::vector<int>& requests, Rng rng,
                           const PipelineOptions& options) {
  const int n = metric.size();
  for (int r : requests) {
    if (r < 0 || r >= n) throw InvalidInput("RunPipeline: request out of range");
  }
  const double tau = options.tau;
  DynamicEmbedder embedder(metric, k, tau, rng);
  const int m = embedder.levels();
  if (m < 1) throw InvalidInput("RunPipeline: needs at least two points");
  const std::vector<int> initial = InitialServers(n, k, requests);

  PipelineReport rep;
  std::vector<hst::HstTree::Edge> edges;
  std::unordered_map<std::string, int> point_of;  // leaf name -> point
  // Adds the chain's missing prefixes; returns the leaf name.
  auto materialize = [&](const Chain& c) {
    for (int j = 1; j <= m; ++j) {
      const std::string name = c.PrefixName(j);
      if (j == m) {
        if (point_of.count(name)) break;
        point_of[name] = InvertChain(c, m);
      } else if (std::any_of(edges.begin(), edges.end(),
                             [&](const auto& e) { return e.child == name; })) {
        continue;
      }
      edges.push_back({c.PrefixName(j - 1), name, std::pow(tau, -j)});
    }
    return c.PrefixName(m);
  };

  std::vector<std::string> init_names;
  {
    const TauStack s0 = embedder.Stack();
    for (int p : initial) init_names.push_back(materialize(s0.Embed(p)));
  }
  auto build = [&]() { return hst::HstTree::FromEdges("X", edges, tau); };
  hst::KServerOptions ko = options.kserver;
  ko.compute_opt = false;
  hst::HstTree tree0 = build();
  ko.initial_leaves.clear();
  for (const auto& name : init_names) ko.initial_leaves.push_back(tree0.Find(name));
  hst::FractionalServer server(std::move(tree0), k, ko);
  server.converter().set_move_observer([&](int from, int to, double mass) {
    const hst::HstTree& tr = server.tree();
    rep.alg_cost += mass * metric(point_of.at(tr.name(from)), point_of.at(tr.name(to)));
  });

  for (int sigma : requests) {
    embedder.Process(sigma);
    const Chain c = embedder.Stack().Embed(sigma);
    if (InvertChain(c, m) != sigma) ++rep.inverse_failures;
    const size_t before = edges.size();
    const std::string leaf = materialize(c);
    if (edges.size() != before) {
      if (static_cast<int>(point_of.size()) > options.max_leaves) {
        rep.partial = true;
        rep.reason = "leaf cap " + std::to_string(options.max_leaves) + " reached";
        break;
      }
      try {
        server.Grow(build(), options.max_rows);
      } catch (const CapacityError& e) {
        rep.partial = true;
        rep.reason = e.what();
        break;
      }
    }
    server.Serve(server.tree().Find(leaf));
    ++rep.served;
  }
  rep.hst = server.summary();
  rep.tree_cost = rep.hst.alg_cost;
  rep.service_gap = rep.hst.service_gap;
  rep.leaves = server.tree().num_leaves();
  const std::vector<int> served(requests.begin(), requests.begin() + rep.served);
  rep.opt_cost = opt::KServerOpt(metric.matrix(), k, served, initial).cost;
  rep.ratio = rep.opt_cost > 0.0 ? rep.alg_cost / rep.opt_cost
                                 : (rep.alg_cost > 1e-9 ? kInf : 1.0);
  return rep;
}

}  // namespace kslab::embed
