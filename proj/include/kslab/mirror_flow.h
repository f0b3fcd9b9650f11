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

// Integrator for the constrained mirror flow
//
//   Hess Phi(x) x' in f(t, x) - N_K(x),   x(t0) = x0 in K,
//
// taking at every instant the least-action velocity. Steps are explicit
// Euler along v*, truncated so the first inactive face is hit exactly and
// refined by bisection at user events.

#ifndef KSLAB_MIRROR_FLOW_H_
#define KSLAB_MIRROR_FLOW_H_

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "kslab/common.h"
#include "kslab/geometry.h"

namespace kslab::flow {

// A separable Legendre potential: Hess Phi is diagonal.
struct MirrorMap {
  std::function<double(const Vec&)> potential;
  std::function<Vec(const Vec&)> gradient;
  // Diagonal of Hess Phi(x)^-1.
  std::function<Vec(const Vec&)> inverse_hessian;
  // Strictly positive per-coordinate length scale used to cap relative
  // steps; null means no cap.
  std::function<Vec(const Vec&)> scale;
  std::function<bool(const Vec&)> in_domain;

  static MirrorMap Euclidean(int n);
  // sum_i w_i (x_i + s_i) log(x_i + s_i).
  static MirrorMap WeightedEntropy(Vec weights, Vec shift);

  // -Phi(x) - <grad Phi(x), y - x>; affine in y.
  double BregmanFunctional(const Vec& y, const Vec& x) const;
};

using Drive = std::function<Vec(double t, const Vec& x)>;
Drive ConstantDrive(Vec f);

// Stops the flow when g changes sign (or reaches zero) along the path.
struct Event {
  std::string label;
  std::function<double(double t, const Vec& x)> g;
};

struct StepPolicy {
  double h_max = 1e-2;
  // Steps below this (other than exact face landings) abort the run.
  double h_min = 1e-14;
  // Cap on |h v_i| / scale_i(x); <= 0 disables it.
  double max_relative_change = 0.05;
  double active_tol = 1e-9;
  double drift_tol = 1e-7;
  double time_tol = 1e-12;
  double event_zero_tol = 1e-12;
  long max_steps = 10'000'000;
  bool land_on_faces = true;
};

struct Sample {
  double t = 0.0;
  Vec x;
  Vec v;
  double residual = 0.0;  // max constraint violation at x
  double step = 0.0;      // step that produced this sample
  // Polyhedron generators with positive multipliers at x.
  std::vector<int> keys;
  std::vector<double> multipliers;
};

struct Trajectory {
  std::vector<Sample> samples;
  std::string stop_reason;  // "horizon", "event:<label>", "step-underflow", "max-steps"
  int event_index = -1;
  bool aborted = false;
  int repairs = 0;
  uint64_t problem_hash = 0;

  const Sample& back() const { return samples.back(); }
};

// Throws Infeasible if x0 is outside K or the potential's domain.
Trajectory Integrate(const geometry::Polyhedron& k, const MirrorMap& phi,
                     const Drive& f, const Vec& x0, double t0, double horizon,
                     const std::vector<Event>& events,
                     const StepPolicy& policy = {});

// Bregman-type repair: projection of y onto K in the Hess Phi(y) metric.
Vec RepairProjection(const geometry::Polyhedron& k, const MirrorMap& phi,
                     const Vec& y);

struct CheckReport {
  double worst = 0.0;  // largest excess over the bound (<= 0 means held)
  int worst_sample = -1;
  int violations = 0;  // samples whose excess exceeded the tolerance
  int checked = 0;
};

// Finite-difference slope of D(y; x(t)) against the trapezoidal value of
// <f, x - y>. Excess = slope - rhs. Throws Infeasible if y is not in K.
CheckReport CheckDescent(const Trajectory& traj, const geometry::Polyhedron& k,
                         const MirrorMap& phi, const Drive& f, const Vec& y,
                         double tol);

// |<g, v>| over generators with positive multipliers, relative to |g||v|.
CheckReport CheckOrthogonality(const Trajectory& traj,
                               const geometry::Polyhedron& k, double tol);

// |v|_{x,*} - |f|_x at every sample.
CheckReport CheckVelocityBound(const Trajectory& traj, const MirrorMap& phi,
                               const Drive& f, double tol);

// Header row with the problem hash, then t, x_1..x_n, v_1..v_n, residual,
// step.
void WriteTrajectoryCsv(const Trajectory& traj, std::ostream& out);

}  // namespace kslab::flow

#endif  // KSLAB_MIRROR_FLOW_H_
