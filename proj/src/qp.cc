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

#include "kslab/qp.h"

#include <cmath>
#include <limits>
#include <vector>

namespace kslab::qp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Constraint j in "n_j'x >= c_j" form. Inequalities keep their index in
// [0, m_in); equalities are numbered m_in + e.
struct Constraints {
  const Problem& p;
  int m_in() const { return static_cast<int>(p.ineq_a.rows()); }
  int m_eq() const { return static_cast<int>(p.eq_a.rows()); }
  bool is_eq(int j) const { return j >= m_in(); }
  Vec normal(int j) const {
    return is_eq(j) ? Vec(-p.eq_a.row(j - m_in()).transpose())
                    : Vec(-p.ineq_a.row(j).transpose());
  }
  double rhs(int j) const {
    return is_eq(j) ? -p.eq_b(j - m_in()) : -p.ineq_b(j);
  }
};

// For the active normals N: z = H n and r = (N'G^-1 N)^-1 N'G^-1 n with
// H = G^-1 - G^-1 N (N'G^-1 N)^-1 N'G^-1.
void StepDirections(const Vec& ginv, const Mat& n_act, const Vec& np, Vec* z,
                    Vec* r) {
  const Vec ginv_np = ginv.cwiseProduct(np);
  if (n_act.cols() == 0) {
    *z = ginv_np;
    r->resize(0);
    return;
  }
  const Mat ginv_n = ginv.asDiagonal() * n_act;
  const Mat gram = n_act.transpose() * ginv_n;
  Eigen::LDLT<Mat> ldlt(gram);
  *r = ldlt.solve(n_act.transpose() * ginv_np);
  *z = ginv_np - ginv_n * (*r);
}

}  // namespace

Result Solve(const Problem& problem, double tol) {
  const int n = static_cast<int>(problem.hessian_diag.size());
  if (problem.linear.size() != n ||
      (problem.ineq_a.rows() > 0 && problem.ineq_a.cols() != n) ||
      (problem.eq_a.rows() > 0 && problem.eq_a.cols() != n) ||
      problem.ineq_b.size() != problem.ineq_a.rows() ||
      problem.eq_b.size() != problem.eq_a.rows()) {
    throw InvalidInput("qp::Solve: dimension mismatch");
  }
  if ((problem.hessian_diag.array() <= 0).any() ||
      !problem.hessian_diag.allFinite()) {
    throw InvalidInput("qp::Solve: Hessian diagonal must be positive");
  }
  Constraints c{problem};
  const Vec ginv = problem.hessian_diag.cwiseInverse();

  Result res;
  res.x = -ginv.cwiseProduct(problem.linear);
  res.ineq_multipliers = Vec::Zero(c.m_in());
  res.eq_multipliers = Vec::Zero(c.m_eq());

  std::vector<int> active;
  std::vector<double> u;
  // Inequalities found dependent on the active set with a roundoff-level
  // violation; they are consistent and never re-enter.
  std::vector<bool> settled(c.m_in(), false);
  auto active_normals = [&]() {
    Mat na(n, active.size());
    for (size_t a = 0; a < active.size(); ++a) na.col(a) = c.normal(active[a]);
    return na;
  };
  auto scale_of = [&](const Vec& v) { return 1.0 + v.lpNorm<Eigen::Infinity>(); };

  const int max_iter = 20 * (c.m_in() + c.m_eq() + n) + 100;
  int iter = 0;

  // Equalities first: full steps, multipliers of either sign.
  for (int e = 0; e < c.m_eq(); ++e) {
    const int j = c.m_in() + e;
    const Vec np = c.normal(j);
    Vec z, r;
    StepDirections(ginv, active_normals(), np, &z, &r);
    const double s = np.dot(res.x) - c.rhs(j);
    const double zn = z.dot(np);
    if (zn <= tol * np.squaredNorm() * ginv.maxCoeff()) {
      if (std::abs(s) > 1e-9 * scale_of(np) * scale_of(res.x)) return res;
      continue;  // dependent and consistent
    }
    const double t = -s / zn;
    res.x += t * z;
    for (size_t a = 0; a < active.size(); ++a) u[a] -= t * r(a);
    active.push_back(j);
    u.push_back(t);
    ++iter;
  }

  while (true) {
    if (++iter > max_iter) {
      throw SolverError("qp::Solve: iteration cap reached", kInf);
    }
    // Most violated inequality, scaled by its normal.
    int p = -1;
    double worst = 0.0;
    for (int j = 0; j < c.m_in(); ++j) {
      bool is_active = false;
      for (int a : active) is_active |= (a == j);
      if (is_active || settled[j]) continue;
      const double nrm = problem.ineq_a.row(j).norm();
      if (nrm == 0.0) {
        if (problem.ineq_b(j) < -tol) return res;
        continue;
      }
      const double s = (problem.ineq_b(j) - problem.ineq_a.row(j).dot(res.x)) / nrm;
      if (s < worst) {
        worst = s;
        p = j;
      }
    }
    if (p < 0 || worst >= -tol * scale_of(res.x)) break;

    const Vec np = c.normal(p);
    double up = 0.0;
    while (true) {
      if (++iter > max_iter) {
        throw SolverError("qp::Solve: iteration cap reached", -worst);
      }
      Vec z, r;
      StepDirections(ginv, active_normals(), np, &z, &r);
      // Partial step: the first active inequality multiplier to hit zero.
      double t1 = kInf;
      int drop = -1;
      for (size_t a = 0; a < active.size(); ++a) {
        if (c.is_eq(active[a]) || r(a) <= 1e-14) continue;
        const double ratio = u[a] / r(a);
        if (ratio < t1) {
          t1 = ratio;
          drop = static_cast<int>(a);
        }
      }
      const double zn = z.dot(np);
      const double s = np.dot(res.x) - c.rhs(p);
      const bool z_zero = zn <= tol * np.squaredNorm() * ginv.maxCoeff();
      const double t2 = z_zero ? kInf : -s / zn;
      if (z_zero && drop < 0) {
        if (-s > 1e-9 * scale_of(np) * scale_of(res.x)) return res;  // primal infeasible
        settled[p] = true;
        break;
      }
      const double t = std::min(t1, t2);
      if (!z_zero) res.x += t * z;
      for (size_t a = 0; a < active.size(); ++a) u[a] -= t * r(a);
      up += t;
      if (t2 <= t1) {
        active.push_back(p);
        u.push_back(up);
        break;
      }
      active.erase(active.begin() + drop);
      u.erase(u.begin() + drop);
    }
  }

  for (size_t a = 0; a < active.size(); ++a) {
    const int j = active[a];
    if (c.is_eq(j)) {
      res.eq_multipliers(j - c.m_in()) = u[a];
    } else {
      res.ineq_multipliers(j) = std::max(0.0, u[a]);
    }
  }
  res.feasible = true;
  res.iterations = iter;
  return res;
}

Result ProjectDiag(const Vec& y, const Vec& metric_diag, const Mat& ineq_a,
                   const Vec& ineq_b, const Mat& eq_a, const Vec& eq_b,
                   double tol) {
  Problem p;
  p.hessian_diag = metric_diag;
  p.linear = -metric_diag.cwiseProduct(y);
  p.ineq_a = ineq_a;
  p.ineq_b = ineq_b;
  p.eq_a = eq_a;
  p.eq_b = eq_b;
  return Solve(p, tol);
}

}  // namespace kslab::qp
