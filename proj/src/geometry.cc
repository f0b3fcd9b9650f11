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

#include "kslab/geometry.h"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <string>
#include <unordered_map>

#include "kslab/qp.h"

namespace kslab::geometry {

Polyhedron::Polyhedron(Mat a, Vec b, std::vector<bool> is_equality)
    : a_(std::move(a)), b_(std::move(b)), is_equality_(std::move(is_equality)) {
  if (a_.rows() != b_.size() ||
      static_cast<size_t>(a_.rows()) != is_equality_.size()) {
    throw InvalidInput("Polyhedron: row count mismatch");
  }
  if (a_.cols() == 0) throw InvalidInput("Polyhedron: zero dimension");
  if (!a_.allFinite() || !b_.allFinite()) {
    throw InvalidInput("Polyhedron: non-finite data");
  }
  row_scale_.resize(a_.rows());
  for (int i = 0; i < rows(); ++i) {
    row_scale_(i) = std::max(1.0, a_.row(i).lpNorm<Eigen::Infinity>());
  }
  // Quantized normalized directions; parallel rows collide.
  direction_class_.assign(2 * rows(), -1);
  std::unordered_map<std::string, int> seen;
  for (int key = 0; key < 2 * rows(); ++key) {
    const Vec g = (key % 2 ? -1.0 : 1.0) * a_.row(key / 2).transpose();
    const double scale = g.lpNorm<Eigen::Infinity>();
    if (scale == 0.0) continue;
    std::string sig(sizeof(long long) * g.size(), '\0');
    for (int j = 0; j < g.size(); ++j) {
      const long long q = std::llround(g(j) / scale * 1e9);
      std::memcpy(sig.data() + j * sizeof(long long), &q, sizeof(q));
    }
    direction_class_[key] =
        seen.emplace(std::move(sig), static_cast<int>(seen.size())).first->second;
  }
  // Nonempty iff the projection of 0 exists.
  Mat ia, ea;
  Vec ib, eb;
  Split(&ia, &ib, &ea, &eb);
  const qp::Result r =
      qp::ProjectDiag(Vec::Zero(dim()), Vec::Ones(dim()), ia, ib, ea, eb);
  if (!r.feasible) throw InvalidInput("Polyhedron: empty set");
}

Polyhedron Polyhedron::Box(const Vec& lo, const Vec& hi) {
  const int n = static_cast<int>(lo.size());
  if (hi.size() != n) throw InvalidInput("Box: bound size mismatch");
  Mat a = Mat::Zero(2 * n, n);
  Vec b(2 * n);
  for (int i = 0; i < n; ++i) {
    a(i, i) = 1.0;
    b(i) = hi(i);
    a(n + i, i) = -1.0;
    b(n + i) = -lo(i);
  }
  return Polyhedron(a, b, std::vector<bool>(2 * n, false));
}

Polyhedron Polyhedron::Simplex(int n, double mass) {
  Mat a = Mat::Zero(n + 1, n);
  Vec b = Vec::Zero(n + 1);
  for (int i = 0; i < n; ++i) a(i, i) = -1.0;
  a.row(n).setOnes();
  b(n) = mass;
  std::vector<bool> eq(n + 1, false);
  eq[n] = true;
  return Polyhedron(a, b, eq);
}

Polyhedron Polyhedron::CappedSimplex(int n, double total, double lo) {
  Mat a = Mat::Zero(2 * n + 1, n);
  Vec b(2 * n + 1);
  for (int i = 0; i < n; ++i) {
    a(i, i) = 1.0;
    b(i) = 1.0;
    a(n + i, i) = -1.0;
    b(n + i) = -lo;
  }
  a.row(2 * n).setOnes();
  b(2 * n) = total;
  std::vector<bool> eq(2 * n + 1, false);
  eq[2 * n] = true;
  return Polyhedron(a, b, eq);
}

double Polyhedron::MaxViolation(const Vec& x, int* worst_row) const {
  if (x.size() != dim()) throw InvalidInput("MaxViolation: dimension mismatch");
  const Vec r = a_ * x - b_;
  double worst = 0.0;
  int arg = -1;
  for (int i = 0; i < rows(); ++i) {
    const double v = is_equality_[i] ? std::abs(r(i)) : r(i);
    if (v > worst) {
      worst = v;
      arg = i;
    }
  }
  if (worst_row != nullptr) *worst_row = arg;
  return worst;
}

void Polyhedron::CheckMember(const Vec& x, double tol) const {
  int row = -1;
  const double v = MaxViolation(x, &row);
  if (v > tol) {
    throw Infeasible("point violates row " + std::to_string(row) + " by " +
                         std::to_string(v),
                     row, v);
  }
}

std::vector<int> Polyhedron::ActiveRows(const Vec& x, double tol) const {
  const Vec r = a_ * x - b_;
  std::vector<int> out;
  for (int i = 0; i < rows(); ++i) {
    if (is_equality_[i] || r(i) >= -tol * row_scale_(i)) out.push_back(i);
  }
  return out;
}

void Polyhedron::Split(Mat* ineq_a, Vec* ineq_b, Mat* eq_a, Vec* eq_b) const {
  int n_eq = 0;
  for (bool e : is_equality_) n_eq += e;
  ineq_a->resize(rows() - n_eq, dim());
  ineq_b->resize(rows() - n_eq);
  eq_a->resize(n_eq, dim());
  eq_b->resize(n_eq);
  int ii = 0, ie = 0;
  for (int i = 0; i < rows(); ++i) {
    if (is_equality_[i]) {
      eq_a->row(ie) = a_.row(i);
      (*eq_b)(ie++) = b_(i);
    } else {
      ineq_a->row(ii) = a_.row(i);
      (*ineq_b)(ii++) = b_(i);
    }
  }
}

LocalMetric::LocalMetric(Vec diag) : diag_(std::move(diag)) {
  if (!diag_.allFinite() || (diag_.array() <= 0).any()) {
    throw InvalidInput("LocalMetric: diagonal must be positive and finite");
  }
}

double LocalMetric::Inner(const Vec& a, const Vec& b) const {
  return a.dot(diag_.cwiseProduct(b));
}
double LocalMetric::Norm(const Vec& a) const { return std::sqrt(Inner(a, a)); }
double LocalMetric::DualNorm(const Vec& a) const {
  return std::sqrt(a.dot(a.cwiseQuotient(diag_)));
}

GeneratedCone ActiveNormalGenerators(const Polyhedron& k, const Vec& x,
                                     double tol) {
  k.CheckMember(x, std::max(tol, 1e-12) * 10.0);
  const std::vector<int> rows = k.ActiveRows(x, tol);
  std::vector<int> keys;
  std::vector<bool> taken(2 * k.rows(), false);
  auto add = [&](int key) {
    const int cls = k.direction_class(key);
    if (cls < 0 || taken[cls]) return;
    taken[cls] = true;
    keys.push_back(key);
  };
  for (int i : rows) {
    add(2 * i);
    if (k.is_equality(i)) add(2 * i + 1);
  }
  GeneratedCone c;
  c.generators.resize(k.dim(), keys.size());
  for (size_t j = 0; j < keys.size(); ++j) {
    c.generators.col(j) = (keys[j] % 2 ? -1.0 : 1.0) * k.a().row(keys[j] / 2).transpose();
  }
  c.source_key = std::move(keys);
  return c;
}

MoreauResult MoreauDecompose(const GeneratedCone& c, const Vec& x,
                             const LocalMetric& m,
                             const MoreauOptions& options) {
  const int n = c.dim();
  const int p = c.size();
  if (x.size() != n || m.dim() != n) {
    throw InvalidInput("MoreauDecompose: dimension mismatch");
  }
  if (!x.allFinite()) throw InvalidInput("MoreauDecompose: non-finite input");

  // Standard NNLS on B = M^1/2 G, y = M^1/2 x.
  const Vec sq = m.diag().cwiseSqrt();
  const Mat bmat = sq.asDiagonal() * c.generators;
  const Vec y = sq.cwiseProduct(x);
  Vec col_norm(p);
  for (int j = 0; j < p; ++j) col_norm(j) = bmat.col(j).norm();

  Vec coef = Vec::Zero(p);
  std::vector<char> passive(p, 0);
  if (options.warm_start != nullptr) {
    for (int key : *options.warm_start) {
      for (int j = 0; j < p; ++j) {
        if (c.source_key[j] == key) passive[j] = 1;
      }
    }
  }

  auto passive_list = [&]() {
    std::vector<int> out;
    for (int j = 0; j < p; ++j) {
      if (passive[j]) out.push_back(j);
    }
    return out;
  };
  // Least squares on the passive columns; false if they are dependent.
  auto solve_passive = [&](const std::vector<int>& pl, Vec* s) {
    Mat bp(n, pl.size());
    for (size_t a = 0; a < pl.size(); ++a) bp.col(a) = bmat.col(pl[a]);
    Eigen::ColPivHouseholderQR<Mat> qr(bp);
    qr.setThreshold(1e-10);
    if (qr.rank() < static_cast<int>(pl.size())) return false;
    const Vec sp = qr.solve(y);
    *s = Vec::Zero(p);
    for (size_t a = 0; a < pl.size(); ++a) (*s)(pl[a]) = sp(a);
    return true;
  };

  // Brings coef to the LS solution on the passive set while keeping it
  // nonnegative; drops columns that hit zero.
  int iterations = 0;
  const int max_iter = options.max_iterations > 0 ? options.max_iterations
                                                  : 3 * (p + n) + 10;
  auto inner = [&]() {
    while (true) {
      if (++iterations > max_iter) {
        throw SolverError("MoreauDecompose: NNLS iteration cap",
                          (y - bmat * coef).norm());
      }
      std::vector<int> pl = passive_list();
      if (pl.empty()) {
        coef.setZero();
        return;
      }
      Vec s;
      if (!solve_passive(pl, &s)) {
        // Dependent warm set: drop the last column and retry.
        passive[pl.back()] = 0;
        continue;
      }
      double alpha = 1.0;
      bool clipped = false;
      for (int j : pl) {
        if (s(j) <= 0.0) {
          const double denom = coef(j) - s(j);
          const double a = denom > 0 ? coef(j) / denom : 0.0;
          if (a < alpha) alpha = a;
          clipped = true;
        }
      }
      if (!clipped) {
        coef = s;
        return;
      }
      coef += alpha * (s - coef);
      for (int j : pl) {
        if (s(j) <= 0.0 &&
            coef(j) <= 1e-15 * (1.0 + coef.lpNorm<Eigen::Infinity>())) {
          coef(j) = 0.0;
          passive[j] = 0;
        }
      }
    }
  };

  inner();
  const double ynorm = 1.0 + y.norm();
  std::vector<char> blocked(p, 0);
  while (true) {
    const Vec resid = y - bmat * coef;
    const Vec w = bmat.transpose() * resid;
    int best = -1;
    double best_w = 0.0;
    for (int j = 0; j < p; ++j) {
      if (passive[j] || blocked[j] || col_norm(j) == 0.0) continue;
      const double score = w(j) / col_norm(j);
      if (score > options.tol * ynorm && score > best_w) {
        best_w = score;
        best = j;
      }
    }
    if (best < 0) break;
    passive[best] = 1;
    Vec s;
    if (!solve_passive(passive_list(), &s)) {
      passive[best] = 0;
      blocked[best] = 1;
      continue;
    }
    std::fill(blocked.begin(), blocked.end(), 0);
    inner();
  }

  MoreauResult r;
  r.coefficients = coef;
  r.u = c.generators * coef;
  r.v = x - r.u;
  r.iterations = iterations;
  for (int j = 0; j < p; ++j) {
    if (passive[j]) r.passive_keys.push_back(c.source_key[j]);
  }
  return r;
}

double MoreauReport::worst() const {
  return std::max({reconstruction, orthogonality, polar, negativity});
}

MoreauReport CheckMoreau(const GeneratedCone& c, const Vec& x,
                         const LocalMetric& m, const MoreauResult& r) {
  MoreauReport rep;
  rep.reconstruction = (x - r.u - r.v).lpNorm<Eigen::Infinity>();
  rep.orthogonality = std::abs(m.Inner(r.u, r.v));
  for (int j = 0; j < c.size(); ++j) {
    rep.polar = std::max(rep.polar, m.Inner(c.generators.col(j), r.v));
  }
  if (r.coefficients.size() > 0) {
    rep.negativity = std::max(0.0, -r.coefficients.minCoeff());
  }
  return rep;
}

Vec PolarProjectionQp(const GeneratedCone& c, const Vec& x,
                      const LocalMetric& m) {
  const Mat rows = (m.diag().asDiagonal() * c.generators).transpose();
  const qp::Result r = qp::ProjectDiag(x, m.diag(), rows, Vec::Zero(c.size()),
                                       Mat(0, c.dim()), Vec(0));
  if (!r.feasible) throw SolverError("PolarProjectionQp: infeasible", 0.0);
  return r.x;
}

LeastAction LeastActionVelocity(const Polyhedron& k, const Vec& x,
                                const LocalMetric& h, const Vec& f,
                                double active_tol,
                                const std::vector<int>* warm_start) {
  if (f.size() != k.dim()) throw InvalidInput("LeastActionVelocity: f size");
  LeastAction la;
  la.cone = ActiveNormalGenerators(k, x, active_tol);
  MoreauOptions opt;
  opt.warm_start = warm_start;
  const MoreauResult mr = MoreauDecompose(la.cone, f, h, opt);
  la.normal = mr.u;
  la.velocity = h.Apply(mr.v);
  la.multipliers = mr.coefficients;
  la.passive_keys = mr.passive_keys;
  return la;
}

}  // namespace kslab::geometry
