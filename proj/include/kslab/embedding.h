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

// Request-driven embedding of a finite metric into a tau-HST of nested
// partitions (chains), and its composition with the fractional tree
// algorithm.
//
// A tau-stack is a sequence of partial partitions P^0 = {X}, P^1, ..., P^M.
// Points outside every block of P^j are singletons at level j. The forced
// refinement intersects each level with all coarser ones, so every point
// maps to a chain of nested cells ending in its own singleton.

#ifndef KSLAB_EMBEDDING_H_
#define KSLAB_EMBEDDING_H_

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "kslab/common.h"
#include "kslab/hst.h"

namespace kslab::embed {

// Metric normalized to diameter 1.
class FiniteMetric {
 public:
  // Rejects invalid metrics, n = 0 and coincident distinct points.
  static FiniteMetric FromMatrix(const Mat& d);
  // "n" followed by the n(n-1)/2 upper-triangle distances row by row, or
  // "l1 n dim" / "l2 n dim" followed by n coordinate rows. '#' comments.
  static FiniteMetric Parse(std::istream& in);
  // n points uniform in the unit cube of the given dimension, l2 distance.
  static FiniteMetric RandomEuclidean(int n, int dim, Rng& rng);

  int size() const { return static_cast<int>(d_.rows()); }
  double operator()(int x, int y) const { return d_(x, y); }
  const Mat& matrix() const { return d_; }
  // Diameter before normalization.
  double scale() const { return scale_; }
  double min_distance() const { return min_distance_; }
  double aspect_ratio() const { return 1.0 / min_distance_; }
  // Smallest M with tau^-M < min_distance (0 for one point).
  int Levels(double tau) const;

 private:
  Mat d_;
  double scale_ = 1.0;
  double min_distance_ = 1.0;
};

// Nested subsets xi_0 = X, xi_1, ..., each stored as sorted point ids.
struct Chain {
  std::vector<std::vector<int>> sets;

  int length() const { return static_cast<int>(sets.size()) - 1; }
  bool Complete(int levels) const {
    return length() == levels && sets.back().size() == 1;
  }
  // Canonical name of the prefix xi_0..xi_j.
  std::string PrefixName(int j) const;
};

// tau^-len(lca); 0 for identical chains.
double ChainDistance(const Chain& a, const Chain& b, double tau);
// The singleton point of a complete chain. Throws InvalidInput otherwise.
int InvertChain(const Chain& c, int levels);

class TauStack {
 public:
  // block[j][x] = block id of x at level j, or -1 if x is uncovered there.
  // Level 0 must put every point in one block.
  TauStack(int n, double tau, std::vector<std::vector<int>> block);

  int size() const { return n_; }
  int levels() const { return static_cast<int>(block_.size()) - 1; }
  double tau() const { return tau_; }
  // Covered points keep their block; uncovered ones are singletons.
  bool SameBlock(int j, int x, int y) const;
  Chain Embed(int x) const;

 private:
  int n_;
  double tau_;
  std::vector<std::vector<int>> block_;
};

struct StackReport {
  double diameter_excess = 0.0;  // max over blocks of diam - tau^-j
  int diameter_violations = 0;
  int contraction_violations = 0;  // d(x, y) > d_tau
  int prestack_violations = 0;     // d_tau > tau sum_j tau^-j [split at j]
  int inverse_failures = 0;
  int incomplete_chains = 0;
  long pairs = 0;

  bool ok() const {
    return diameter_violations == 0 && contraction_violations == 0 &&
           prestack_violations == 0 && inverse_failures == 0 && incomplete_chains == 0;
  }
  void Merge(const StackReport& o);
};

StackReport VerifyStack(const TauStack& stack, const FiniteMetric& metric,
                        double tol = 1e-12);

// Truncated exponential on [0, tau^-j] with rate tau^j log k. Requires k >= 2.
double SampleRadius(int j, int k, double tau, Rng& rng);
double RadiusCdf(double r, int j, int k, double tau);
double RadiusMean(int j, int k, double tau);

struct EmbedEvent {
  enum Type { kReset, kInsert };
  int t;
  Type type;
  int level;
  int point;     // inserted center (-1 for resets)
  double radius; // 0 for resets
};

class DynamicEmbedder {
 public:
  // k < 2 switches to the deterministic greedy variant: every radius is
  // exactly tau^-j-1 at level j (greedy() reports this).
  DynamicEmbedder(const FiniteMetric& metric, int k, double tau, Rng rng);

  // Observer called after each reset and each insertion, before the next
  // operation.
  using Observer = std::function<void(const EmbedEvent&)>;
  void Process(int point, const Observer& observer = nullptr);

  TauStack Stack() const;
  int levels() const { return levels_; }
  double tau() const { return tau_; }
  bool greedy() const { return k_ < 2; }
  int requests() const { return t_; }
  // Number of level-j resets so far (j in 1..M).
  long resets(int j) const { return resets_[j]; }
  const std::vector<int>& centers(int j) const { return centers_[j]; }
  const std::vector<double>& radii(int j) const { return radii_[j]; }
  // Distance from x to the nearest level-j center (+inf if none).
  double CenterDistance(int j, int x) const;
  const std::vector<EmbedEvent>& events() const { return events_; }

 private:
  const FiniteMetric* metric_;
  int k_;
  double tau_;
  int levels_;
  Rng rng_;
  int t_ = 0;
  std::vector<std::vector<int>> centers_;
  std::vector<std::vector<double>> radii_;
  std::vector<std::vector<int>> block_of_;  // index into centers_, or -1
  std::vector<long> resets_;
  std::vector<EmbedEvent> events_;
};

struct SeparationEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
  double bound = 0.0;  // (2 + 4e) d(x, y) tau^(j+1) log k
  bool precondition = false;
  int trials = 0;

  bool ok() const { return estimate <= bound + 3.0 * stderr_; }
};

// Pr[P^j(x) != P^j(y)] after the prefix, over the radius randomness; trial
// i uses MakeRng(seed, i). Throws InvalidInput when y is farther than
// tau^-j-1 from every level-j center after the prefix.
SeparationEstimate SeparationProbability(const FiniteMetric& metric, int k, double tau,
                                         const std::vector<int>& prefix, int j, int x,
                                         int y, int trials, uint64_t seed,
                                         int workers = 1);

struct StretchEstimate {
  int x = 0;
  double distance = 0.0;  // d(x, last request)
  double mean = 0.0;      // E d_tau(F(x), F(last request))
  double stderr_ = 0.0;
  double bound = 0.0;     // (2 + 4e) tau^2 M log k d(x, last request)

  double stretch() const { return mean / distance; }
  bool ok() const { return mean <= bound + 3.0 * stderr_; }
};

// Expected embedded distance from every other point to the last request of
// `requests`, over the radius randomness; trial i uses MakeRng(seed, i).
// The bound sums the separation bound over levels through the prestack
// inequality.
std::vector<StretchEstimate> StretchMc(const FiniteMetric& metric, int k, double tau,
                                       const std::vector<int>& requests, int trials,
                                       uint64_t seed, int workers = 1);

struct MirrorOptions {
  double tau = 4.0;
  // Request counts at which prefix costs and prefix optima are recorded;
  // the full length is always appended.
  std::vector<int> checkpoints;
};

struct MirrorReport {
  double opt_cost = 0.0;
  double embedded_cost = 0.0;    // stack moves + mirrored moves, in d_tau
  double stack_move_cost = 0.0;  // images moving because the stack changed
  double reset_cost = 0.0;       // stack movement attributed to resets
  double insertion_cost = 0.0;   // stack movement attributed to insertions
  double mirror_cost = 0.0;      // the optimum's moves between images
  double ratio = 0.0;
  int levels = 0;
  std::vector<long> resets;  // per level, index 0 unused
  // Checks of k tau^-j-1 K_{j,t} <= OPT(prefix) at every reset time.
  int reset_checks = 0;
  int reset_violations = 0;
  double worst_reset_ratio = 0.0;  // max k tau^-j-1 K / OPT
  std::vector<int> checkpoint_t;
  std::vector<double> checkpoint_cost;
  std::vector<double> checkpoint_opt;
};

// Replays the conservative offline optimum through the embedder's stacks.
// Servers start at the first k distinct requests (padded with the
// smallest unused ids).
MirrorReport MirroredOptCost(const FiniteMetric& metric, int k,
                             const std::vector<int>& requests, Rng rng,
                             const MirrorOptions& options = {});

std::vector<int> InitialServers(int n, int k, const std::vector<int>& requests);

struct PipelineOptions {
  double tau = 4.0;
  hst::KServerOptions kserver;
  int max_leaves = 64;
  long max_rows = 100000;
};

struct PipelineReport {
  double alg_cost = 0.0;   // physical moves pushed to X through F_in
  double tree_cost = 0.0;  // the same moves in the chain tree
  double opt_cost = 0.0;   // offline optimum on the served prefix
  double ratio = 0.0;
  int served = 0;
  int leaves = 0;
  bool partial = false;
  std::string reason;
  double service_gap = 0.0;  // max 1 - mass on the requested leaf
  int inverse_failures = 0;  // requested chains not mapping back to sigma_t
  hst::KServerRun hst;
};

PipelineReport RunPipeline(const FiniteMetric& metric, int k,
                           const std::vector<int>& requests, Rng rng,
                           const PipelineOptions& options = {});

}  // namespace kslab::embed

#endif  // KSLAB_EMBEDDING_H_
