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

// Offline optima for k-server and weighted paging. Both reduce to
// min-cost flow on a DAG; small k-server instances are also solved by an
// exhaustive DP over configurations to certify the flow model.

#ifndef KSLAB_OFFLINE_OPT_H_
#define KSLAB_OFFLINE_OPT_H_

#include <cstdint>
#include <vector>

#include "kslab/common.h"

namespace kslab::opt {

// Successive shortest paths with Johnson potentials. Integer costs; the
// graph may carry negative arc costs but no negative cycles.
class MinCostFlow {
 public:
  explicit MinCostFlow(int nodes);
  int AddArc(int from, int to, int64_t capacity, int64_t cost);
  // Pushes up to `amount` units from s to t at minimum cost. Returns the
  // amount pushed.
  int64_t Solve(int s, int t, int64_t amount);
  int64_t total_cost() const { return total_cost_; }
  int64_t Flow(int arc) const;
  int nodes() const { return static_cast<int>(head_.size()); }

 private:
  struct Arc {
    int to;
    int64_t cap;
    int64_t cost;
  };
  std::vector<std::vector<int>> head_;
  std::vector<Arc> arcs_;  // arc 2i forward, 2i+1 reverse
  std::vector<int64_t> initial_cap_;
  int64_t total_cost_ = 0;
};

// Metric sanity: square, symmetric, zero diagonal, nonnegative, finite,
// triangle inequality up to a relative tolerance. Throws InvalidInput.
void ValidateMetric(const Mat& d, double tol = 1e-9);

struct KServerSchedule {
  double cost = 0.0;
  // configurations[t][s]: position of server s after serving request t.
  std::vector<std::vector<int>> configurations;
};

// Exact offline optimum. Distances are scaled to integers by `scale` for
// the flow; the reported cost is recomputed in floating point from the
// recovered schedule.
KServerSchedule KServerOpt(const Mat& d, int k, const std::vector<int>& requests,
                           const std::vector<int>& initial, double scale = 1e6);

// Exhaustive DP over multisets of positions; small instances only.
double KServerBruteForce(const Mat& d, int k, const std::vector<int>& requests,
                         const std::vector<int>& initial);

// Weighted paging, fetch-cost convention: bringing page p into the cache
// costs w_p. `initial` lists up to k cached pages.
double WeightedPagingOpt(const Vec& weights, int k,
                         const std::vector<int>& requests,
                         const std::vector<int>& initial);

// Fault count of Belady's furthest-in-future rule.
int BeladyFaults(int n, int k, const std::vector<int>& requests,
                 const std::vector<int>& initial);

// Optimal transport between equal-mass real supplies and demands under an
// arbitrary nonnegative cost matrix (rows: supply points). Successive
// shortest paths with Bellman-Ford over the residual bipartite graph.
double TransportCost(const Mat& cost, const Vec& supply, const Vec& demand);

// Cost of a k-server schedule replayed against the metric.
double ReplayCost(const Mat& d, const std::vector<int>& initial,
                  const KServerSchedule& s);

}  // namespace kslab::opt

#endif  // KSLAB_OFFLINE_OPT_H_
