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

#include "kslab/paging.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kslab/offline_opt.h"

namespace kslab::paging {
namespace {

// Saturation is decided with a hair of slack; snapped coordinates are set to
// exactly 1.
constexpr double kSatTol = 1e-12;

double Potential(const Instance& inst, const Vec& x) {
  return (inst.weights.array() * x.array() * x.array().log()).sum();
}

Vec Gradient(const Instance& inst, const Vec& x) {
  return Vec(inst.weights.array() * (1.0 + x.array().log()));
}

struct PhaseRhs {
  const Vec& w;
  const std::vector<char>& free;
  int r;

  Vec operator()(const Vec& x) const {
    double denom = 0.0;
    for (int i = 0; i < x.size(); ++i) {
      if (free[i]) denom += x(i) / w(i);
    }
    const double mu = (x(r) / w(r)) / denom;
    Vec dx = Vec::Zero(x.size());
    for (int i = 0; i < x.size(); ++i) {
      if (free[i]) dx(i) = x(i) / w(i) * (mu - (i == r ? 1.0 : 0.0));
    }
    return dx;
  }
};

Vec Rk4(const PhaseRhs& f, const Vec& x, double h) {
  const Vec k1 = f(x);
  const Vec k2 = f(x + 0.5 * h * k1);
  const Vec k3 = f(x + 0.5 * h * k2);
  const Vec k4 = f(x + h * k3);
  return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

Instance Instance::Make(int n, int k, Vec weights, double delta) {
  if (k < 1 || k >= n) throw InvalidInput("paging: need 1 <= k < n");
  if (weights.size() != n) throw InvalidInput("paging: weight count != n");
  if (!weights.allFinite() || (weights.array() <= 0).any()) {
    throw InvalidInput("paging: weights must be positive");
  }
  Instance inst;
  inst.n = n;
  inst.k = k;
  inst.weights = std::move(weights);
  // 1/(2k) gives eps = 1 at k = 1, which the rounding cannot use.
  inst.delta = delta > 0 ? delta : (k == 1 ? 0.25 : 1.0 / (2.0 * k));
  if (inst.delta * n > n - k || inst.delta >= 1.0) {
    throw InvalidInput("paging: P_delta is empty (need n delta <= n - k)");
  }
  if (inst.eps() >= 1.0) {
    throw InvalidInput("paging: need delta k / (1 - delta) < 1");
  }
  return inst;
}

geometry::Polyhedron Instance::Polytope() const {
  return geometry::Polyhedron::CappedSimplex(n, n - k, delta);
}

double MuValue(const Vec& x, const Vec& w, int r) {
  double denom = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    if (x(i) < 1.0 || i == r) denom += x(i) / w(i);
  }
  return (x(r) / w(r)) / denom;
}

double Sigma(double v, double eps) {
  const double l = std::floor(v);
  const double frac = v - l;
  if (frac <= eps) return l;
  return l + (frac - eps) / (1.0 - eps);
}

Vec InitialState(const Instance& inst, const std::vector<int>& cached) {
  if (static_cast<int>(cached.size()) != inst.k) {
    throw InvalidInput("InitialState: need exactly k cached pages");
  }
  Vec xhat = Vec::Ones(inst.n);
  for (int p : cached) {
    if (p < 0 || p >= inst.n) throw InvalidInput("InitialState: page out of range");
    xhat(p) = 0.0;
  }
  if (std::abs(xhat.sum() - (inst.n - inst.k)) > 0.5) {
    throw InvalidInput("InitialState: cached pages must be distinct");
  }
  const double bary = double(inst.n - inst.k) / inst.n;
  const double lambda = inst.delta / bary;
  Vec x = (1.0 - lambda) * xhat + Vec::Constant(inst.n, lambda * bary);
  for (int p : cached) x(p) = inst.delta;
  return x;
}

std::vector<int> InitialCache(const Instance& inst,
                              const std::vector<int>& requests) {
  std::vector<int> cache;
  std::vector<char> in(inst.n, 0);
  for (int r : requests) {
    if (static_cast<int>(cache.size()) == inst.k) break;
    if (!in[r]) {
      in[r] = 1;
      cache.push_back(r);
    }
  }
  for (int p = 0; static_cast<int>(cache.size()) < inst.k; ++p) {
    if (!in[p]) {
      in[p] = 1;
      cache.push_back(p);
    }
  }
  return cache;
}

Vec CacheContent(const Instance& inst, const Vec& x) {
  Vec c(x.size());
  for (int i = 0; i < x.size(); ++i) {
    c(i) = Sigma((1.0 - x(i)) / (1.0 - inst.delta), inst.eps());
  }
  return c;
}

Vec ServePageRequest(const Instance& inst, const Vec& x0, int r, ServeLog* log,
                     const ServeOptions& options) {
  if (x0.size() != inst.n || r < 0 || r >= inst.n) {
    throw InvalidInput("ServePageRequest: bad state or page");
  }
  Vec x = x0;
  if (x(r) <= inst.delta) return x;
  const double target_mass = x.sum();
  ServeLog local;
  ServeLog& lg = log != nullptr ? *log : local;
  lg = ServeLog();
  const Vec& w = inst.weights;

  double t = 0.0;
  if (options.record_samples) lg.samples.push_back({t, x});
  while (true) {
    std::vector<char> free(inst.n, 0);
    Phase phase;
    phase.t_start = t;
    double min_w = INFINITY;
    int n_free = 0;
    for (int i = 0; i < inst.n; ++i) {
      if (i == r || x(i) < 1.0 - kSatTol) {
        free[i] = 1;
        ++n_free;
        min_w = std::min(min_w, w(i));
      } else {
        x(i) = 1.0;
        phase.saturated.push_back(i);
      }
    }
    if (n_free < 2) throw Error("ServePageRequest: no free page besides r");
    const PhaseRhs rhs{w, free, r};
    phase.mu_start = MuValue(x, w, r);
    const double phase_mass = x.sum();
    const double h = options.step_fraction * min_w;

    auto event = [&](const Vec& y) {
      if (y(r) <= inst.delta) return true;
      for (int i = 0; i < inst.n; ++i) {
        if (free[i] && i != r && y(i) >= 1.0) return true;
      }
      return false;
    };

    bool finished = false;
    while (true) {
      Vec y = Rk4(rhs, x, h);
      double step = h;
      const bool hit = event(y);
      if (hit) {
        double lo = 0.0, hi = h;
        while (hi - lo > options.time_tol) {
          const double mid = 0.5 * (lo + hi);
          if (mid <= lo || mid >= hi) break;
          if (event(Rk4(rhs, x, mid))) {
            hi = mid;
          } else {
            lo = mid;
          }
        }
        step = hi;
        y = Rk4(rhs, x, hi);
      }
      lg.cost_into += w(r) * std::abs(x(r) - y(r));
      x = y;
      t += step;
      phase.mass_drift = std::max(phase.mass_drift, std::abs(x.sum() - phase_mass));
      if (!hit) {
        if (options.record_samples) lg.samples.push_back({t, x});
        continue;
      }
      // Snap whatever reached its face; return the rounding residue to the
      // free page with the most room so the total stays exact.
      if (x(r) <= inst.delta + kSatTol) {
        x(r) = inst.delta;
        finished = true;
      }
      for (int i = 0; i < inst.n; ++i) {
        if (free[i] && i != r && x(i) >= 1.0 - kSatTol) x(i) = 1.0;
      }
      const double residue = target_mass - x.sum();
      int room = -1;
      for (int i = 0; i < inst.n; ++i) {
        if (i != r && x(i) < 1.0 && (room < 0 || x(i) < x(room))) room = i;
      }
      if (room >= 0 && std::abs(residue) < 1e-9) x(room) += residue;
      if (options.record_samples) lg.samples.push_back({t, x});
      break;
    }
    phase.t_end = t;
    phase.mu_end = MuValue(x, w, r);
    lg.phases.push_back(std::move(phase));
    if (finished) break;
  }
  lg.duration = t;
  return x;
}

std::vector<ElementaryMove> DecomposeMoves(const Vec& dx, double tol) {
  std::vector<ElementaryMove> moves;
  std::vector<std::pair<int, double>> neg, pos;
  for (int i = 0; i < dx.size(); ++i) {
    if (dx(i) < -tol) neg.push_back({i, -dx(i)});
    if (dx(i) > tol) pos.push_back({i, dx(i)});
  }
  size_t a = 0, b = 0;
  while (a < neg.size() && b < pos.size()) {
    const double m = std::min(neg[a].second, pos[b].second);
    moves.push_back({neg[a].first, pos[b].first, m});
    neg[a].second -= m;
    pos[b].second -= m;
    if (neg[a].second <= tol) ++a;
    if (pos[b].second <= tol) ++b;
  }
  return moves;
}

RoundingStep RoundStep(const Instance& inst, const Vec& x_a, const Vec& x_b) {
  const Vec dx = x_b - x_a;
  if (std::abs(dx.sum()) > 1e-9) {
    throw InvalidInput("RoundStep: change is not balanced");
  }
  RoundingStep s;
  const Vec ca = CacheContent(inst, x_a);
  const Vec cb = CacheContent(inst, x_b);
  for (int i = 0; i < inst.n; ++i) {
    const double d = cb(i) - ca(i);
    if (d > 0) s.cost_in += inst.weights(i) * d;
    if (d < 0) s.cost_out -= inst.weights(i) * d;
  }
  const double lip = 1.0 / ((1.0 - inst.delta) * (1.0 - inst.eps()));
  for (const ElementaryMove& m : DecomposeMoves(dx)) {
    s.bound += (inst.weights(m.from) + inst.weights(m.to)) * m.mass * lip;
  }
  s.center_mass = inst.k - cb.sum();
  return s;
}

double GradientNorm(const Vec& x) {
  return (1.0 + x.array().log()).abs().maxCoeff();
}

VerifyReport VerifyServe(const Instance& inst, int r, const ServeLog& log,
                         double movement_tol) {
  VerifyReport rep;
  const Vec& w = inst.weights;
  for (const Phase& p : log.phases) rep.mass_drift = std::max(rep.mass_drift, p.mass_drift);
  const auto& s = log.samples;
  for (const ServeSample& sm : s) {
    rep.total_mass_error =
        std::max(rep.total_mass_error, std::abs(sm.x.sum() - (inst.n - inst.k)));
  }
  std::vector<double> g(inst.n);
  for (size_t a = 0; a + 1 < s.size(); ++a) {
    const Vec& xa = s[a].x;
    const Vec& xb = s[a + 1].x;
    const double dt = s[a + 1].t - s[a].t;
    if (dt <= 0) continue;
    ++rep.samples;
    const Vec ga = Gradient(inst, xa);
    const Vec gb = Gradient(inst, xb);
    // D(xh; x) = -Phi(x) + <grad, x> - <grad, xh>; worst xh takes the n - k
    // largest coefficients of -(gb - ga) outside r.
    double slope = (-Potential(inst, xb) + gb.dot(xb) + Potential(inst, xa) -
                    ga.dot(xa)) / dt;
    g.clear();
    for (int i = 0; i < inst.n; ++i) {
      if (i != r) g.push_back(-(gb(i) - ga(i)) / dt);
    }
    std::nth_element(g.begin(), g.begin() + (inst.n - inst.k), g.end(),
                     std::greater<double>());
    for (int i = 0; i < inst.n - inst.k; ++i) slope += g[i];
    const double rhs = -0.5 * (xa(r) + xb(r));
    rep.descent_excess = std::max(rep.descent_excess, slope - rhs);
    if (xa(r) < 1.0) {
      const double rate = w(r) * std::abs(xb(r) - xa(r)) / dt;
      rep.movement_excess =
          std::max(rep.movement_excess, rate - xa(r) * (1.0 + movement_tol));
    }
    for (int i = 0; i < inst.n; ++i) {
      if (i != r) rep.monotone_violation = std::max(rep.monotone_violation, xa(i) - xb(i));
    }
  }
  return rep;
}

namespace {

void MergeWorst(const VerifyReport& a, VerifyReport* into) {
  into->descent_excess = std::max(into->descent_excess, a.descent_excess);
  into->mass_drift = std::max(into->mass_drift, a.mass_drift);
  into->total_mass_error = std::max(into->total_mass_error, a.total_mass_error);
  into->movement_excess = std::max(into->movement_excess, a.movement_excess);
  into->monotone_violation = std::max(into->monotone_violation, a.monotone_violation);
  into->samples += a.samples;
}

RunResult Run(const Instance& inst, int count, const RequestSource& source,
              const std::vector<int>& cache, const RunOptions& options) {
  RunResult res;
  Vec x = InitialState(inst, cache);
  ServeOptions so = options.serve;
  so.record_samples = options.verify;
  for (int t = 0; t < count; ++t) {
    const int r = source(t, x);
    if (r < 0 || r >= inst.n) throw InvalidInput("request out of range");
    res.requests.push_back(r);
    ServeLog lg;
    const Vec before = x;
    x = ServePageRequest(inst, x, r, &lg, so);
    const RoundingStep st = RoundStep(inst, before, x);
    res.alg_cost += st.cost_in;
    res.alg_cost_out += st.cost_out;
    res.fractional_cost += lg.cost_into;
    res.log.push_back({r, before(r), st.cost_in, st.cost_out,
                       static_cast<int>(lg.phases.size())});
    if (options.verify) MergeWorst(VerifyServe(inst, r, lg, options.movement_tol), &res.worst);
  }
  res.opt_cost = opt::WeightedPagingOpt(inst.weights, inst.k, res.requests, cache);
  res.ratio = res.opt_cost > 0 ? res.alg_cost / res.opt_cost
                               : (res.alg_cost > 0 ? INFINITY : 1.0);
  return res;
}

}  // namespace

RunResult RunPaging(const Instance& inst, const std::vector<int>& requests,
                    const RunOptions& options) {
  const std::vector<int> cache = InitialCache(inst, requests);
  return Run(inst, static_cast<int>(requests.size()),
             [&](int t, const Vec&) { return requests[t]; }, cache, options);
}

RunResult RunPagingOnline(const Instance& inst, int count,
                          const RequestSource& source,
                          const RunOptions& options) {
  std::vector<int> cache(inst.k);
  std::iota(cache.begin(), cache.end(), 0);
  return Run(inst, count, source, cache, options);
}

}  // namespace kslab::paging
