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

#include "kslab/offline_opt.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <string>

namespace kslab::opt {
namespace {

constexpr int64_t kInf64 = std::numeric_limits<int64_t>::max() / 4;

void CheckRequests(int n, const std::vector<int>& requests) {
  for (int r : requests) {
    if (r < 0 || r >= n) {
      throw InvalidInput("request " + std::to_string(r) + " out of range");
    }
  }
}

void CheckInitial(int n, int k, const std::vector<int>& initial) {
  if (static_cast<int>(initial.size()) != k) {
    throw InvalidInput("initial configuration must have k entries");
  }
  CheckRequests(n, initial);
}

}  // namespace

MinCostFlow::MinCostFlow(int nodes) : head_(nodes) {}

int MinCostFlow::AddArc(int from, int to, int64_t capacity, int64_t cost) {
  const int id = static_cast<int>(arcs_.size()) / 2;
  head_[from].push_back(static_cast<int>(arcs_.size()));
  arcs_.push_back({to, capacity, cost});
  head_[to].push_back(static_cast<int>(arcs_.size()));
  arcs_.push_back({from, 0, -cost});
  initial_cap_.push_back(capacity);
  return id;
}

int64_t MinCostFlow::Flow(int arc) const {
  return initial_cap_[arc] - arcs_[2 * arc].cap;
}

int64_t MinCostFlow::Solve(int s, int t, int64_t amount) {
  const int n = nodes();
  // Bellman-Ford for the initial potentials (negative arcs allowed).
  std::vector<int64_t> pot(n, kInf64);
  pot[s] = 0;
  for (int round = 0; round < n; ++round) {
    bool changed = false;
    for (int u = 0; u < n; ++u) {
      if (pot[u] == kInf64) continue;
      for (int e : head_[u]) {
        const Arc& a = arcs_[e];
        if (a.cap > 0 && pot[u] + a.cost < pot[a.to]) {
          pot[a.to] = pot[u] + a.cost;
          changed = true;
        }
      }
    }
    if (!changed) break;
    if (round == n - 1) throw InvalidInput("MinCostFlow: negative cycle");
  }
  for (auto& p : pot) {
    if (p == kInf64) p = 0;
  }

  int64_t pushed = 0;
  std::vector<int64_t> dist(n);
  std::vector<int> prev_arc(n);
  while (pushed < amount) {
    std::fill(dist.begin(), dist.end(), kInf64);
    std::fill(prev_arc.begin(), prev_arc.end(), -1);
    using Item = std::pair<int64_t, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    dist[s] = 0;
    pq.push({0, s});
    while (!pq.empty()) {
      auto [du, u] = pq.top();
      pq.pop();
      if (du != dist[u]) continue;
      for (int e : head_[u]) {
        const Arc& a = arcs_[e];
        if (a.cap <= 0) continue;
        const int64_t nd = du + a.cost + pot[u] - pot[a.to];
        if (nd < dist[a.to]) {
          dist[a.to] = nd;
          prev_arc[a.to] = e;
          pq.push({nd, a.to});
        }
      }
    }
    if (dist[t] == kInf64) break;
    for (int v = 0; v < n; ++v) {
      if (dist[v] < kInf64) pot[v] += dist[v];
    }
    int64_t bottleneck = amount - pushed;
    for (int v = t; v != s; v = arcs_[prev_arc[v] ^ 1].to) {
      bottleneck = std::min(bottleneck, arcs_[prev_arc[v]].cap);
    }
    for (int v = t; v != s; v = arcs_[prev_arc[v] ^ 1].to) {
      arcs_[prev_arc[v]].cap -= bottleneck;
      arcs_[prev_arc[v] ^ 1].cap += bottleneck;
      total_cost_ += bottleneck * arcs_[prev_arc[v]].cost;
    }
    pushed += bottleneck;
  }
  return pushed;
}

void ValidateMetric(const Mat& d, double tol) {
  const int n = static_cast<int>(d.rows());
  if (d.cols() != n || n == 0) throw InvalidInput("metric must be square");
  if (!d.allFinite()) throw InvalidInput("metric has non-finite entries");
  const double scale = std::max(1.0, d.maxCoeff());
  for (int i = 0; i < n; ++i) {
    if (d(i, i) != 0.0) throw InvalidInput("metric diagonal must be zero");
    for (int j = 0; j < n; ++j) {
      if (d(i, j) < 0.0) throw InvalidInput("metric has negative entries");
      if (std::abs(d(i, j) - d(j, i)) > tol * scale) {
        throw InvalidInput("metric is not symmetric");
      }
      for (int m = 0; m < n; ++m) {
        if (d(i, j) > d(i, m) + d(m, j) + tol * scale) {
          throw InvalidInput("metric violates the triangle inequality at (" +
                             std::to_string(i) + "," + std::to_string(j) + "," +
                             std::to_string(m) + ")");
        }
      }
    }
  }
}

double ReplayCost(const Mat& d, const std::vector<int>& initial,
                  const KServerSchedule& s) {
  double cost = 0.0;
  std::vector<int> cur = initial;
  for (const auto& conf : s.configurations) {
    for (size_t i = 0; i < cur.size(); ++i) cost += d(cur[i], conf[i]);
    cur = conf;
  }
  return cost;
}

KServerSchedule KServerOpt(const Mat& d, int k, const std::vector<int>& requests,
                           const std::vector<int>& initial, double scale) {
  ValidateMetric(d);
  const int n = static_cast<int>(d.rows());
  if (k < 1) throw InvalidInput("k must be positive");
  CheckInitial(n, k, initial);
  CheckRequests(n, requests);
  const int t_len = static_cast<int>(requests.size());
  KServerSchedule out;
  if (t_len == 0) return out;

  auto c = [&](int a, int b) { return static_cast<int64_t>(std::llround(d(a, b) * scale)); };
  int64_t dmax = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) dmax = std::max(dmax, c(i, j));
  }
  const int64_t big = 2 * dmax + 1;

  // Nodes: source, sink, servers, then (in_t, out_t) per request.
  const int src = 0, snk = 1;
  auto server = [](int s) { return 2 + s; };
  auto in = [k](int t) { return 2 + k + 2 * t; };
  auto outn = [k](int t) { return 3 + k + 2 * t; };
  MinCostFlow mcf(2 + k + 2 * t_len);
  std::vector<int> serve_arc(t_len);
  // next[node] arcs for path recovery.
  std::vector<std::vector<std::pair<int, int>>> succ(mcf.nodes());
  auto add = [&](int u, int v, int64_t cap, int64_t cost) {
    const int id = mcf.AddArc(u, v, cap, cost);
    succ[u].push_back({id, v});
    return id;
  };
  for (int s = 0; s < k; ++s) {
    add(src, server(s), 1, 0);
    add(server(s), snk, 1, 0);
    for (int t = 0; t < t_len; ++t) {
      add(server(s), in(t), 1, c(initial[s], requests[t]));
    }
  }
  for (int t = 0; t < t_len; ++t) {
    serve_arc[t] = add(in(t), outn(t), 1, -big);
    add(outn(t), snk, 1, 0);
    for (int u = t + 1; u < t_len; ++u) {
      add(outn(t), in(u), 1, c(requests[t], requests[u]));
    }
  }
  if (mcf.Solve(src, snk, k) != k) throw SolverError("KServerOpt: flow short", 0);
  for (int t = 0; t < t_len; ++t) {
    if (mcf.Flow(serve_arc[t]) != 1) {
      throw SolverError("KServerOpt: request left unserved", 0);
    }
  }
  // Follow each server's unit of flow to recover who serves what.
  std::vector<int> server_of(t_len, -1);
  for (int s = 0; s < k; ++s) {
    int v = server(s);
    while (v != snk) {
      int next = -1;
      for (auto [arc, to] : succ[v]) {
        if (mcf.Flow(arc) > 0) {
          next = to;
          break;
        }
      }
      if (next < 0) throw SolverError("KServerOpt: broken flow path", 0);
      if (next != snk && (next - 2 - k) % 2 == 0) {
        server_of[(next - 2 - k) / 2] = s;
      }
      v = next;
    }
  }
  std::vector<int> cur = initial;
  for (int t = 0; t < t_len; ++t) {
    cur[server_of[t]] = requests[t];
    out.configurations.push_back(cur);
  }
  out.cost = ReplayCost(d, initial, out);
  return out;
}

double KServerBruteForce(const Mat& d, int k, const std::vector<int>& requests,
                         const std::vector<int>& initial) {
  ValidateMetric(d);
  const int n = static_cast<int>(d.rows());
  CheckInitial(n, k, initial);
  CheckRequests(n, requests);
  if (n > 7 || k > 3 || requests.size() > 8) {
    throw CapacityError("KServerBruteForce: instance above size gate");
  }
  // All multisets of size k.
  std::vector<std::vector<int>> confs;
  std::vector<int> cur;
  std::function<void(int)> gen = [&](int from) {
    if (static_cast<int>(cur.size()) == k) {
      confs.push_back(cur);
      return;
    }
    for (int p = from; p < n; ++p) {
      cur.push_back(p);
      gen(p);
      cur.pop_back();
    }
  };
  gen(0);
  auto matching = [&](const std::vector<int>& a, std::vector<int> b) {
    double best = std::numeric_limits<double>::infinity();
    std::sort(b.begin(), b.end());
    do {
      double c = 0;
      for (int i = 0; i < k; ++i) c += d(a[i], b[i]);
      best = std::min(best, c);
    } while (std::next_permutation(b.begin(), b.end()));
    return best;
  };
  std::map<std::vector<int>, double> layer;
  std::vector<int> start = initial;
  std::sort(start.begin(), start.end());
  layer[start] = 0.0;
  for (int r : requests) {
    std::map<std::vector<int>, double> next;
    for (const auto& c2 : confs) {
      if (std::find(c2.begin(), c2.end(), r) == c2.end()) continue;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [c1, v] : layer) best = std::min(best, v + matching(c1, c2));
      next[c2] = best;
    }
    layer = std::move(next);
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [c, v] : layer) best = std::min(best, v);
  return best;
}

double WeightedPagingOpt(const Vec& weights, int k,
                         const std::vector<int>& requests,
                         const std::vector<int>& initial) {
  const int n = static_cast<int>(weights.size());
  if (k < 1 || k > n) throw InvalidInput("WeightedPagingOpt: need 1 <= k <= n");
  if (static_cast<int>(initial.size()) > k) {
    throw InvalidInput("WeightedPagingOpt: initial cache larger than k");
  }
  if ((weights.array() <= 0).any()) throw InvalidInput("weights must be positive");
  CheckRequests(n, requests);
  CheckRequests(n, initial);
  const int t_len = static_cast<int>(requests.size());
  const double scale = 1e9 / std::max(1.0, weights.maxCoeff());
  auto wi = [&](int p) { return static_cast<int64_t>(std::llround(weights(p) * scale)); };

  double base = 0.0;
  for (int r : requests) base += weights(r);
  // Time points 1..T; node v_j sits before point j, v_{T+1} after the last.
  MinCostFlow mcf(t_len + 2);
  for (int j = 1; j <= t_len; ++j) mcf.AddArc(j, j + 1, k - 1, 0);
  struct Interval {
    int arc;
    int page;
  };
  std::vector<Interval> intervals;
  double free_savings = 0.0;
  std::vector<int> last(n, -1);  // -1: never seen, 0: cached at time 0
  for (int p : initial) last[p] = 0;
  for (int t = 1; t <= t_len; ++t) {
    const int p = requests[t - 1];
    if (last[p] >= 0) {
      // Keeping p covers points last+1 .. t-1.
      const int a = last[p] + 1, b = t - 1;
      if (a > b) {
        free_savings += weights(p);
      } else if (k > 1) {
        intervals.push_back({mcf.AddArc(a, b + 1, 1, -wi(p)), p});
      }
    }
    last[p] = t;
  }
  double savings = free_savings;
  if (k > 1 && t_len > 0) {
    mcf.Solve(1, t_len + 1, k - 1);
    for (const Interval& iv : intervals) {
      if (mcf.Flow(iv.arc) > 0) savings += weights(iv.page);
    }
  }
  return base - savings;
}

int BeladyFaults(int n, int k, const std::vector<int>& requests,
                 const std::vector<int>& initial) {
  CheckRequests(n, requests);
  std::set<int> cache(initial.begin(), initial.end());
  int faults = 0;
  const int t_len = static_cast<int>(requests.size());
  for (int t = 0; t < t_len; ++t) {
    const int p = requests[t];
    if (cache.count(p)) continue;
    ++faults;
    if (static_cast<int>(cache.size()) == k) {
      int victim = -1, far = -1;
      for (int q : cache) {
        int next = t_len;
        for (int u = t + 1; u < t_len; ++u) {
          if (requests[u] == q) {
            next = u;
            break;
          }
        }
        if (next > far) {
          far = next;
          victim = q;
        }
      }
      cache.erase(victim);
    }
    cache.insert(p);
  }
  return faults;
}

double TransportCost(const Mat& cost, const Vec& supply, const Vec& demand) {
  const int m = static_cast<int>(cost.rows());
  const int n = static_cast<int>(cost.cols());
  if (supply.size() != m || demand.size() != n) {
    throw InvalidInput("TransportCost: shape mismatch");
  }
  if ((supply.array() < 0).any() || (demand.array() < 0).any() ||
      (cost.array() < 0).any()) {
    throw InvalidInput("TransportCost: negative entries");
  }
  const double total = supply.sum();
  if (std::abs(total - demand.sum()) > 1e-9 * std::max(1.0, total)) {
    throw InvalidInput("TransportCost: unequal masses");
  }
  // Nodes: source 0, supplies 1..m, demands m+1..m+n, sink m+n+1.
  struct Arc {
    int from, to;
    double cap, cost;
  };
  std::vector<Arc> arcs;
  auto add = [&](int a, int b, double cap, double c) {
    arcs.push_back({a, b, cap, c});
    arcs.push_back({b, a, 0.0, -c});
  };
  const int src = 0, sink = m + n + 1, nodes = m + n + 2;
  for (int i = 0; i < m; ++i) add(src, 1 + i, supply(i), 0.0);
  for (int j = 0; j < n; ++j) add(1 + m + j, sink, demand(j), 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) add(1 + i, 1 + m + j, total, cost(i, j));
  }
  const double cap_tol = 1e-15 * std::max(1.0, total);
  double sent = 0.0, value = 0.0;
  for (int iter = 0; sent < total - cap_tol; ++iter) {
    if (iter > 100000) throw SolverError("TransportCost: no convergence", total - sent);
    std::vector<double> dist(nodes, std::numeric_limits<double>::infinity());
    std::vector<int> via(nodes, -1);
    dist[src] = 0.0;
    for (int round = 0; round < nodes; ++round) {
      bool changed = false;
      for (size_t a = 0; a < arcs.size(); ++a) {
        const Arc& e = arcs[a];
        if (e.cap <= cap_tol || dist[e.from] == std::numeric_limits<double>::infinity()) continue;
        if (dist[e.from] + e.cost < dist[e.to] - 1e-15) {
          dist[e.to] = dist[e.from] + e.cost;
          via[e.to] = static_cast<int>(a);
          changed = true;
        }
      }
      if (!changed) break;
    }
    if (via[sink] < 0) throw SolverError("TransportCost: disconnected", total - sent);
    double push = total - sent;
    for (int v = sink; v != src; v = arcs[via[v]].from) push = std::min(push, arcs[via[v]].cap);
    for (int v = sink; v != src; v = arcs[via[v]].from) {
      arcs[via[v]].cap -= push;
      arcs[via[v] ^ 1].cap += push;
    }
    sent += push;
    value += push * dist[sink];
  }
  return value;
}

}  // namespace kslab::opt
