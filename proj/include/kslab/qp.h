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

// Dense convex quadratic programs with a diagonal positive Hessian:
//
//   minimize  0.5 x'Dx + g'x   subject to  A_in x <= b_in,  A_eq x = b_eq.
//
// Solved by the Goldfarb-Idnani dual active-set method. The active-set
// factorization is recomputed from scratch each iteration; the problems here
// have at most a few hundred rows, and the recompute variant is immune to
// the drift that plagues rank-one updated factorizations on nearly
// dependent normals.

#ifndef KSLAB_QP_H_
#define KSLAB_QP_H_

#include "kslab/common.h"

namespace kslab::qp {

struct Problem {
  Vec hessian_diag;  // strictly positive
  Vec linear;
  Mat ineq_a;
  Vec ineq_b;
  Mat eq_a;
  Vec eq_b;
};

// Multipliers follow Dx + g + A_in' lambda + A_eq' nu = 0.
struct Result {
  bool feasible = false;
  Vec x;
  Vec ineq_multipliers;  // >= 0, zero off the active set
  Vec eq_multipliers;
  int iterations = 0;
};

// Throws SolverError when the iteration cap is hit.
Result Solve(const Problem& problem, double tol = 1e-12);

// argmin_z 0.5 (z - y)' D (z - y) over {A_in z <= b_in, A_eq z = b_eq}.
Result ProjectDiag(const Vec& y, const Vec& metric_diag, const Mat& ineq_a,
                   const Vec& ineq_b, const Mat& eq_a, const Vec& eq_b,
                   double tol = 1e-12);

}  // namespace kslab::qp

#endif  // KSLAB_QP_H_
