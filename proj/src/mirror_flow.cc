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

#include "kslab/mirror_flow.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "kslab/qp.h"

namespace kslab::flow {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool Fires(double g_old, double g_new, double zero_tol) {
  if (std::abs(g_old) <= zero_tol) return false;
  return std::abs(g_new) <= zero_tol || std::signbit(g_old) != std::signbit(g_new);
}

uint64_t ProblemHash(const geometry::Polyhedron& k, const Vec& x0, double t0,
                     double horizon) {
  uint64_t h = HashBytes(k.a().data(), sizeof(double) * k.a().size());
  h = HashVec(k.b(), h);
  h = HashVec(x0, h);
  h = HashBytes(&t0, sizeof(t0), h);
  return HashBytes(&horizon, sizeof(horizon), h);
}

void FillSample(const geometry::LeastAction& la, Sample* s) {
  s->v = la.velocity;
  s->keys.clear();
  s->multipliers.clear();
  for (int j = 0; j < la.cone.size(); ++j) {
    if (la.multipliers(j) > 0.0) {
      s->keys.push_back(la.cone.source_key[j]);
      s->multipliers.push_back(la.multipliers(j));
    }
  }
}

}  // namespace

MirrorMap MirrorMap::Euclidean(int n) {
  MirrorMap m;
  m.potential = [](const Vec& x) { return 0.5 * x.squaredNorm(); };
  m.gradient = [](const Vec& x) { return x; };
  m.inverse_hessian = [n](const Vec&) { return Vec::Ones(n); };
  m.in_domain = [](const Vec& x) { return x.allFinite(); };
  return m;
}

MirrorMap MirrorMap::WeightedEntropy(Vec weights, Vec shift) {
  if (weights.size() != shift.size() || (weights.array() <= 0).any()) {
    throw InvalidInput("WeightedEntropy: weights must be positive");
  }
  MirrorMap m;
  m.potential = [weights, shift](const Vec& x) {
    const Eigen::ArrayXd y = (x + shift).array();
    return (weights.array() * y * y.log()).sum();
  };
  m.gradient = [weights, shift](const Vec& x) {
    return Vec(weights.array() * (1.0 + (x + shift).array().log()));
  };
  m.inverse_hessian = [weights, shift](const Vec& x) {
    return Vec((x + shift).array() / weights.array());
  };
  m.scale = [shift](const Vec& x) { return Vec(x + shift); };
  m.in_domain = [shift](const Vec& x) {
    return x.allFinite() && ((x + shift).array() > 0).all();
  };
  return m;
}

double MirrorMap::BregmanFunctional(const Vec& y, const Vec& x) const {
  return -potential(x) - gradient(x).dot(y - x);
}

Drive ConstantDrive(Vec f) {
  return [f = std::move(f)](double, const Vec&) { return f; };
}

Vec RepairProjection(const geometry::Polyhedron& k, const MirrorMap& phi,
                     const Vec& y) {
  Mat ia, ea;
  Vec ib, eb;
  k.Split(&ia, &ib, &ea, &eb);
  const Vec metric = phi.inverse_hessian(y).cwiseInverse();
  const qp::Result r = qp::ProjectDiag(y, metric, ia, ib, ea, eb);
  if (!r.feasible) throw SolverError("RepairProjection: infeasible QP", 0.0);
  return r.x;
}

Trajectory Integrate(const geometry::Polyhedron& k, const MirrorMap& phi,
                     const Drive& f, const Vec& x0, double t0, double horizon,
                     const std::vector<Event>& events,
                     const StepPolicy& policy) {
  if (x0.size() != k.dim()) throw InvalidInput("Integrate: x0 dimension");
  if (!phi.in_domain(x0)) {
    throw Infeasible("Integrate: x0 outside the potential's domain", -1, kInf);
  }
  k.CheckMember(x0, std::max(policy.drift_tol, 10 * policy.active_tol));

  Trajectory traj;
  traj.problem_hash = ProblemHash(k, x0, t0, horizon);
  const double t_end = t0 + horizon;

  double t = t0;
  Vec x = x0;
  std::vector<int> warm;
  auto velocity_at = [&](double tt, const Vec& xx, Sample* s) {
    const geometry::LocalMetric h(phi.inverse_hessian(xx));
    const geometry::LeastAction la = geometry::LeastActionVelocity(
        k, xx, h, f(tt, xx), policy.active_tol, &warm);
    warm = la.passive_keys;
    FillSample(la, s);
  };

  Sample s0;
  s0.t = t;
  s0.x = x;
  s0.residual = k.MaxViolation(x);
  velocity_at(t, x, &s0);
  traj.samples.push_back(s0);

  std::vector<double> g_old(events.size());
  for (size_t e = 0; e < events.size(); ++e) g_old[e] = events[e].g(t, x);

  long steps = 0;
  int tiny_landings = 0;
  while (true) {
    if (t >= t_end - policy.time_tol) {
      traj.stop_reason = "horizon";
      break;
    }
    if (++steps > policy.max_steps) {
      traj.stop_reason = "max-steps";
      traj.aborted = true;
      break;
    }
    const Vec& v = traj.samples.back().v;
    double h = std::min(policy.h_max, t_end - t);
    if (policy.max_relative_change > 0 && phi.scale) {
      const Vec sc = phi.scale(x);
      for (int i = 0; i < v.size(); ++i) {
        if (v(i) != 0.0) {
          h = std::min(h, policy.max_relative_change * sc(i) / std::abs(v(i)));
        }
      }
    }
    bool landing = false;
    if (policy.land_on_faces) {
      const Vec slack = k.b() - k.a() * x;
      const Vec rate = k.a() * v;
      for (int i = 0; i < k.rows(); ++i) {
        if (k.is_equality(i) || rate(i) <= 0.0) continue;
        const double scale = std::max(1.0, k.a().row(i).lpNorm<Eigen::Infinity>());
        if (slack(i) <= policy.active_tol * scale) continue;
        const double hit = slack(i) / rate(i);
        if (hit < h) {
          h = hit;
          landing = true;
        }
      }
    }
    if (h < policy.h_min) {
      if (!landing || ++tiny_landings > 1000) {
        traj.stop_reason = "step-underflow";
        traj.aborted = true;
        break;
      }
    } else {
      tiny_landings = 0;
    }

    Vec x_new = x + h * v;
    while (!phi.in_domain(x_new)) {
      h *= 0.5;
      if (h < policy.h_min) {
        traj.stop_reason = "step-underflow";
        traj.aborted = true;
        return traj;
      }
      x_new = x + h * v;
    }

    // Earliest event inside the step, refined by bisection.
    int fired = -1;
    double h_event = h;
    for (size_t e = 0; e < events.size(); ++e) {
      const double gn = events[e].g(t + h, x_new);
      if (!Fires(g_old[e], gn, policy.event_zero_tol)) continue;
      double lo = 0.0, hi = h;
      while (hi - lo > policy.time_tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (Fires(g_old[e], events[e].g(t + mid, x + mid * v),
                  policy.event_zero_tol)) {
          hi = mid;
        } else {
          lo = mid;
        }
      }
      if (hi < h_event || fired < 0) {
        h_event = hi;
        fired = static_cast<int>(e);
      }
    }
    if (fired >= 0) {
      h = h_event;
      x_new = x + h * v;
    }

    Sample s;
    s.step = h;
    s.residual = k.MaxViolation(x_new);
    if (s.residual > policy.drift_tol) {
      x_new = RepairProjection(k, phi, x_new);
      s.residual = k.MaxViolation(x_new);
      ++traj.repairs;
    }
    t += h;
    x = x_new;
    s.t = t;
    s.x = x;
    velocity_at(t, x, &s);
    traj.samples.push_back(std::move(s));
    for (size_t e = 0; e < events.size(); ++e) g_old[e] = events[e].g(t, x);

    if (fired >= 0) {
      traj.event_index = fired;
      traj.stop_reason = "event:" + events[fired].label;
      break;
    }
  }
  return traj;
}

CheckReport CheckDescent(const Trajectory& traj, const geometry::Polyhedron& k,
                         const MirrorMap& phi, const Drive& f, const Vec& y,
                         double tol) {
  k.CheckMember(y, 1e-9);
  CheckReport rep;
  rep.worst = -kInf;
  const auto& s = traj.samples;
  for (size_t i = 0; i + 1 < s.size(); ++i) {
    const double dt = s[i + 1].t - s[i].t;
    if (dt <= 0.0) continue;
    const double slope = (phi.BregmanFunctional(y, s[i + 1].x) -
                          phi.BregmanFunctional(y, s[i].x)) / dt;
    const double rhs = 0.5 * (f(s[i].t, s[i].x).dot(s[i].x - y) +
                              f(s[i + 1].t, s[i + 1].x).dot(s[i + 1].x - y));
    const double excess = slope - rhs;
    ++rep.checked;
    if (excess > rep.worst) {
      rep.worst = excess;
      rep.worst_sample = static_cast<int>(i);
    }
    if (excess > tol) ++rep.violations;
  }
  return rep;
}

CheckReport CheckOrthogonality(const Trajectory& traj,
                               const geometry::Polyhedron& k, double tol) {
  CheckReport rep;
  rep.worst = -kInf;
  for (size_t i = 0; i < traj.samples.size(); ++i) {
    const Sample& s = traj.samples[i];
    const double vn = s.v.norm();
    for (int key : s.keys) {
      Vec g = k.a().row(key / 2).transpose();
      if (key % 2) g = -g;
      const double excess = std::abs(g.dot(s.v)) - tol * g.norm() * vn;
      ++rep.checked;
      if (excess > rep.worst) {
        rep.worst = excess;
        rep.worst_sample = static_cast<int>(i);
      }
      if (excess > 0.0) ++rep.violations;
    }
  }
  return rep;
}

CheckReport CheckVelocityBound(const Trajectory& traj, const MirrorMap& phi,
                               const Drive& f, double tol) {
  CheckReport rep;
  rep.worst = -kInf;
  for (size_t i = 0; i < traj.samples.size(); ++i) {
    const Sample& s = traj.samples[i];
    const geometry::LocalMetric h(phi.inverse_hessian(s.x));
    const double excess = h.DualNorm(s.v) - h.Norm(f(s.t, s.x));
    ++rep.checked;
    if (excess > rep.worst) {
      rep.worst = excess;
      rep.worst_sample = static_cast<int>(i);
    }
    if (excess > tol) ++rep.violations;
  }
  return rep;
}

void WriteTrajectoryCsv(const Trajectory& traj, std::ostream& out) {
  const int n = traj.samples.empty() ? 0 : static_cast<int>(traj.samples[0].x.size());
  out << "# problem_hash=" << HexHash(traj.problem_hash)
      << " stop=" << traj.stop_reason << "\n";
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x_" << i;
  for (int i = 1; i <= n; ++i) out << ",v_" << i;
  out << ",residual,step\n";
  out.precision(17);
  for (const Sample& s : traj.samples) {
    out << s.t;
    for (int i = 0; i < n; ++i) out << "," << s.x(i);
    for (int i = 0; i < n; ++i) out << "," << s.v(i);
    out << "," << s.residual << "," << s.step << "\n";
  }
}

}  // namespace kslab::flow
