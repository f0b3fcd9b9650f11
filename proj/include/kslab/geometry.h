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

// Polyhedra, their active normal cones, and Moreau decompositions in a
// diagonal local metric. Everything downstream (flows, paging, trees) calls
// into LeastActionVelocity().

#ifndef KSLAB_GEOMETRY_H_
#define KSLAB_GEOMETRY_H_

#include <vector>

#include "kslab/common.h"

namespace kslab::geometry {

// {x : a_i x <= b_i for inequality rows, a_i x = b_i for equality rows}.
class Polyhedron {
 public:
  // Validates shapes and finiteness and rejects empty sets.
  Polyhedron(Mat a, Vec b, std::vector<bool> is_equality);

  static Polyhedron Box(const Vec& lo, const Vec& hi);
  // {x >= 0, sum x = mass}.
  static Polyhedron Simplex(int n, double mass = 1.0);
  // {lo <= x <= 1, sum x = total}.
  static Polyhedron CappedSimplex(int n, double total, double lo);

  int dim() const { return static_cast<int>(a_.cols()); }
  int rows() const { return static_cast<int>(a_.rows()); }
  const Mat& a() const { return a_; }
  const Vec& b() const { return b_; }
  bool is_equality(int row) const { return is_equality_[row]; }

  // Largest violation (a_i x - b_i for inequalities, |a_i x - b_i| for
  // equalities), clipped at 0; *worst_row gets its index or -1.
  double MaxViolation(const Vec& x, int* worst_row = nullptr) const;
  // Throws Infeasible naming the worst row.
  void CheckMember(const Vec& x, double tol) const;

  // Inequality rows with a_i x >= b_i - tol * scale_i, plus all equalities.
  std::vector<int> ActiveRows(const Vec& x, double tol) const;

  // Rows of equal direction share a class; key 2i is +a_i, 2i + 1 is -a_i.
  // -1 for zero rows.
  int direction_class(int key) const { return direction_class_[key]; }

  // Dense QP data split by row type, for projections.
  void Split(Mat* ineq_a, Vec* ineq_b, Mat* eq_a, Vec* eq_b) const;

 private:
  Mat a_;
  Vec b_;
  std::vector<bool> is_equality_;
  Vec row_scale_;  // max(1, |a_i|_inf)
  std::vector<int> direction_class_;
};

// ||a||_x^2 = a' D a; the dual norm uses D^-1.
class LocalMetric {
 public:
  explicit LocalMetric(Vec diag);
  static LocalMetric Identity(int n) { return LocalMetric(Vec::Ones(n)); }

  int dim() const { return static_cast<int>(diag_.size()); }
  const Vec& diag() const { return diag_; }
  double Inner(const Vec& a, const Vec& b) const;
  double Norm(const Vec& a) const;
  double DualNorm(const Vec& a) const;
  Vec Apply(const Vec& a) const { return diag_.cwiseProduct(a); }

 private:
  Vec diag_;
};

// cone{g_1, ..., g_p}. Columns of generators(); source keys identify the
// polyhedron row and sign each generator came from (warm starts use them).
struct GeneratedCone {
  Mat generators;
  std::vector<int> source_key;  // 2 * row + (sign < 0)

  int dim() const { return static_cast<int>(generators.rows()); }
  int size() const { return static_cast<int>(generators.cols()); }
};

// Normals of the active rows at x: a_i for active inequalities, +-a_i for
// equalities. Parallel duplicates are removed. Throws Infeasible if x
// violates some row by more than tol.
GeneratedCone ActiveNormalGenerators(const Polyhedron& k, const Vec& x,
                                     double tol = 1e-9);

struct MoreauOptions {
  double tol = 1e-12;
  // Source keys expected in the passive set; unknown keys are ignored.
  const std::vector<int>* warm_start = nullptr;
  int max_iterations = 0;  // 0 = 3 * (p + n)
};

// x = u + v with u in C, v in the polar of C, <u, v>_M = 0.
struct MoreauResult {
  Vec u;
  Vec v;
  Vec coefficients;  // u = G c, c >= 0
  std::vector<int> passive_keys;
  int iterations = 0;
};

// Lawson-Hanson NNLS in the metric M. Throws SolverError on stall.
MoreauResult MoreauDecompose(const GeneratedCone& c, const Vec& x,
                             const LocalMetric& m,
                             const MoreauOptions& options = {});

struct MoreauReport {
  double reconstruction = 0.0;  // |x - u - v|_inf
  double orthogonality = 0.0;   // |<u, v>_M|
  double polar = 0.0;           // max_i <g_i, v>_M, clipped at 0
  double negativity = 0.0;      // max_i -c_i, clipped at 0
  double worst() const;
};
MoreauReport CheckMoreau(const GeneratedCone& c, const Vec& x,
                         const LocalMetric& m, const MoreauResult& r);

// Independent route: projection of x onto the polar cone by a dual
// active-set QP. Returns v; u = x - v.
Vec PolarProjectionQp(const GeneratedCone& c, const Vec& x,
                      const LocalMetric& m);

struct LeastAction {
  Vec velocity;     // v* = H (f - u), H = metric diag
  Vec normal;       // u
  GeneratedCone cone;
  Vec multipliers;  // u = G multipliers
  std::vector<int> passive_keys;
};

// Minimum-norm element of H (f - N_K(x)) in the dual local norm. u is the
// H-metric projection of f onto N_K(x).
LeastAction LeastActionVelocity(const Polyhedron& k, const Vec& x,
                                const LocalMetric& h, const Vec& f,
                                double active_tol = 1e-9,
                                const std::vector<int>* warm_start = nullptr);

}  // namespace kslab::geometry

#endif  // KSLAB_GEOMETRY_H_
