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

// Fractional weighted paging by entropic dynamics on the antipaging
// polytope P_delta = {x in [delta, 1]^n : sum x = n - k}. x_i is the
// missing fraction of page i. A request to r drives x_r down to delta;
// every other unsaturated page absorbs the mass in proportion to x_i / w_i.

#ifndef KSLAB_PAGING_H_
#define KSLAB_PAGING_H_

#include <functional>
#include <vector>

#include "kslab/common.h"
#include "kslab/geometry.h"

namespace kslab::paging {

struct Instance {
  int n = 0;
  int k = 0;
  Vec weights;
  double delta = 0.0;

  // delta <= 0 selects 1/(2k) (1/4 when k = 1). Throws InvalidInput on bad parameters.
  static Instance Make(int n, int k, Vec weights, double delta = 0.0);
  // Mass excess absorbed by the rounding: delta k / (1 - delta).
  double eps() const { return delta * k / (1.0 - delta); }
  geometry::Polyhedron Polytope() const;
};

// (x_r / w_r) / sum_{i free} x_i / w_i, where free means x_i < 1 or i = r.
double MuValue(const Vec& x, const Vec& w, int r);

// Flat on [l, l + eps], slope 1/(1 - eps) on [l + eps, l + 1].
double Sigma(double v, double eps);

struct Phase {
  std::vector<int> saturated;
  double t_start = 0.0;
  double t_end = 0.0;
  double mu_start = 0.0;
  double mu_end = 0.0;
  double mass_drift = 0.0;  // max |sum x - sum x(t_start)| inside the phase
};

struct ServeSample {
  double t;
  Vec x;
};

struct ServeLog {
  std::vector<Phase> phases;
  std::vector<ServeSample> samples;
  double duration = 0.0;
  double cost_into = 0.0;  // integral of w_r |dx_r/dt|
};

struct ServeOptions {
  // RK4 step as a fraction of the smallest free weight.
  double step_fraction = 0.01;
  double time_tol = 1e-13;
  bool record_samples = true;
};

// Moves x until x_r = delta. Returns x unchanged when x_r <= delta already.
Vec ServePageRequest(const Instance& inst, const Vec& x, int r,
                     ServeLog* log = nullptr, const ServeOptions& options = {});

// x-hat with the given pages cached, pulled toward the barycenter by the
// least amount that puts it in P_delta; sigma((1-x)/(1-delta)) stays integral.
Vec InitialState(const Instance& inst, const std::vector<int>& cached);
// First k distinct pages of the sequence, padded with the lowest unused ids.
std::vector<int> InitialCache(const Instance& inst, const std::vector<int>& requests);

// Rounded cache content sigma((1 - x_i) / (1 - delta)).
Vec CacheContent(const Instance& inst, const Vec& x);

struct ElementaryMove {
  int from;  // page whose x decreases (mass fetched)
  int to;    // page whose x increases (mass evicted)
  double mass;
};

// Greedy pairing of the negative and positive parts of a balanced change.
std::vector<ElementaryMove> DecomposeMoves(const Vec& dx, double tol = 1e-15);

struct RoundingStep {
  double cost_in = 0.0;   // sum w (d content)_+
  double cost_out = 0.0;  // sum w (d content)_-
  double bound = 0.0;     // sum over moves (w_i + w_j) m / ((1-delta)(1-eps))
  double center_mass = 0.0;  // k - sum content after the step
};

// Rounds the path x_a -> x_b. Throws InvalidInput if the change is not
// balanced.
RoundingStep RoundStep(const Instance& inst, const Vec& x_a, const Vec& x_b);

struct VerifyReport {
  double descent_excess = -1e300;   // max FD slope + x_r over integral x-hat
  double mass_drift = 0.0;          // per phase
  double total_mass_error = 0.0;    // |sum x - (n - k)|
  double movement_excess = -1e300;  // max w_r |dx_r|/dt - x_r (1 + tol)
  double monotone_violation = 0.0;  // max decrease of some x_i, i != r
  int samples = 0;
};

// Checks one served request against the paging lemmas. movement_tol is the
// relative slack in w_r |dx_r| <= x_r (1 + tol).
VerifyReport VerifyServe(const Instance& inst, int r, const ServeLog& log,
                         double movement_tol);

// max_i |1 + log x_i| over x; bounded by log(1/delta) + 1 on P_delta.
double GradientNorm(const Vec& x);

using RequestSource = std::function<int(int t, const Vec& x)>;

struct RequestRecord {
  int page;
  double x_before;
  double cost_in;
  double cost_out;
  int phases;
};

struct RunResult {
  std::vector<int> requests;
  double alg_cost = 0.0;       // rounded, into-cache convention
  double alg_cost_out = 0.0;
  double fractional_cost = 0.0;  // integral of w_r |dx_r| (unrounded)
  double opt_cost = 0.0;
  double ratio = 0.0;
  VerifyReport worst;  // componentwise worst over requests (when verifying)
  std::vector<RequestRecord> log;
};

struct RunOptions {
  bool verify = false;
  double movement_tol = 1e-3;
  ServeOptions serve;
};

// Serves `count` requests drawn from `source`; the initial cache is the first
// k distinct pages of the realized sequence for fixed sequences, or pages
// 0..k-1 for online sources.
RunResult RunPaging(const Instance& inst, const std::vector<int>& requests,
                    const RunOptions& options = {});
RunResult RunPagingOnline(const Instance& inst, int count,
                          const RequestSource& source,
                          const RunOptions& options = {});

}  // namespace kslab::paging

#endif  // KSLAB_PAGING_H_
