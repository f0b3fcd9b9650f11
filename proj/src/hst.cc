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

#include "kslab/hst.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "kslab/offline_opt.h"
#include "kslab/paging.h"

namespace kslab::hst {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool IsIntegerPower(double w, double tau) {
  const double j = std::log(w) / std::log(tau);
  return std::abs(j - std::round(j)) <= 1e-9;
}

// (a + r a) log(1 + r) - r a with a > 0, accurate for small r.
double BregmanTerm(double a, double r) {
  if (std::abs(r) < 1e-4) {
    const double r2 = r * r;
    return a * (0.5 * r2 - r2 * r / 6.0 + r2 * r2 / 12.0);
  }
  return a * ((1.0 + r) * std::log1p(r) - r);
}

// sigma(z + dz) - sigma(z), exact on a single linear piece.
double SigmaIncrement(double z, double dz, double eps) {
  auto piece = [eps](double v) {
    const double f = std::floor(v);
    return 2.0 * f + (v - f > eps ? 1.0 : 0.0);
  };
  if (piece(z) == piece(z + dz)) {
    const double f = std::floor(z);
    return z - f > eps ? dz / (1.0 - eps) : 0.0;
  }
  return paging::Sigma(z + dz, eps) - paging::Sigma(z, eps);
}

}  // namespace

// ---------------------------------------------------------------------------
// HstTree

HstTree HstTree::FromEdges(const std::string& root,
                           const std::vector<Edge>& edges, double tau,
                           bool validate) {
  if (!(tau >= 2.0) || !std::isfinite(tau)) {
    throw InvalidInput("HstTree: tau must be >= 2");
  }
  std::map<std::string, std::vector<std::pair<std::string, double>>> kids;
  std::set<std::string> has_parent;
  for (const Edge& e : edges) {
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
      throw InvalidInput("HstTree: edge " + e.parent + "-" + e.child +
                         " needs a positive finite weight");
    }
    if (e.child == root || !has_parent.insert(e.child).second) {
      throw InvalidInput("HstTree: vertex " + e.child + " has two parents");
    }
    kids[e.parent].push_back({e.child, e.weight});
  }
  HstTree t;
  t.tau_ = tau;
  t.parent_.push_back(-1);
  t.weight_.push_back(0.0);
  t.name_.push_back(root);
  t.children_.emplace_back();
  t.by_name_[root] = 0;
  // Breadth-first ids; children keep input order.
  for (size_t head = 0; head < t.name_.size(); ++head) {
    auto it = kids.find(t.name_[head]);
    if (it == kids.end()) continue;
    for (const auto& [child, w] : it->second) {
      const int id = static_cast<int>(t.name_.size());
      t.parent_.push_back(static_cast<int>(head));
      t.weight_.push_back(w);
      t.name_.push_back(child);
      t.children_.emplace_back();
      t.children_[head].push_back(id);
      t.by_name_[child] = id;
    }
  }
  if (t.name_.size() != edges.size() + 1) {
    throw InvalidInput("HstTree: edges do not form a tree rooted at " + root);
  }
  t.Finish(validate);
  return t;
}

void HstTree::Finish(bool validate) {
  const int n = size();
  depth_.assign(n, 0);
  leaf_count_.assign(n, 0);
  leaf_index_.assign(n, -1);
  preorder_.clear();
  leaves_.clear();
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    preorder_.push_back(v);
    if (v != 0) depth_[v] = depth_[parent_[v]] + 1;
    if (children_[v].empty()) {
      leaf_index_[v] = static_cast<int>(leaves_.size());
      leaves_.push_back(v);
    }
    for (auto it = children_[v].rbegin(); it != children_[v].rend(); ++it) {
      stack.push_back(*it);
    }
  }
  for (auto it = preorder_.rbegin(); it != preorder_.rend(); ++it) {
    const int v = *it;
    if (children_[v].empty()) leaf_count_[v] = 1;
    if (v != 0) leaf_count_[parent_[v]] += leaf_count_[v];
  }
  height_ = 0;
  for (int l : leaves_) height_ = std::max(height_, depth_[l]);
  if (!validate) return;
  if (n < 2) throw InvalidInput("HstTree: need at least one edge");
  for (int v = 1; v < n; ++v) {
    if (!IsIntegerPower(weight_[v], tau_)) {
      throw InvalidInput("HstTree: weight of " + name_[v] +
                         " is not an integer power of tau");
    }
    const int p = parent_[v];
    if (p != 0 && std::abs(weight_[v] * tau_ - weight_[p]) >
                      1e-9 * weight_[p]) {
      throw InvalidInput("HstTree: weight of " + name_[v] +
                         " is not its parent's weight over tau");
    }
  }
  for (int l : leaves_) {
    if (depth_[l] != height_) {
      throw InvalidInput("HstTree: leaf " + name_[l] +
                         " is not at the common depth");
    }
  }
}

HstTree HstTree::Uniform(int branching, int height, double tau) {
  if (branching < 1 || height < 1) {
    throw InvalidInput("HstTree::Uniform: branching and height must be >= 1");
  }
  std::vector<Edge> edges;
  std::vector<std::string> level = {"r"};
  for (int d = 1; d <= height; ++d) {
    std::vector<std::string> next;
    const double w = std::pow(tau, height - d);
    for (const std::string& p : level) {
      for (int c = 0; c < branching; ++c) {
        next.push_back(p + "." + std::to_string(c));
        edges.push_back({p, next.back(), w});
      }
    }
    level = std::move(next);
  }
  return FromEdges("r", edges, tau);
}

HstTree HstTree::Parse(std::istream& in, bool normalize) {
  std::string root;
  double tau = 0.0;
  std::vector<Edge> edges;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    bool ok = true;
    if (key == "root") {
      ok = static_cast<bool>(ls >> root);
    } else if (key == "tau") {
      ok = static_cast<bool>(ls >> tau);
    } else if (key == "edge") {
      Edge e;
      ok = static_cast<bool>(ls >> e.parent >> e.child >> e.weight);
      edges.push_back(e);
    } else {
      ok = false;
    }
    std::string extra;
    if (!ok || (ls >> extra)) {
      throw InvalidInput("tree file line " + std::to_string(lineno) +
                         ": cannot parse '" + line + "'");
    }
  }
  if (root.empty()) throw InvalidInput("tree file: missing root line");
  if (tau == 0.0) throw InvalidInput("tree file: missing tau line");
  if (!normalize) return FromEdges(root, edges, tau);
  return FromEdges(root, edges, tau, false).Normalized();
}

HstTree HstTree::Normalized() const {
  std::vector<Edge> edges;
  for (int v = 1; v < size(); ++v) {
    const std::string& p = name_[parent_[v]];
    const int pad = is_leaf(v) ? height_ - depth_[v] : 0;
    if (pad == 0) {
      edges.push_back({p, name_[v], weight_[v]});
      continue;
    }
    // The original name moves to the bottom of the chain.
    std::string prev = p;
    double w = weight_[v];
    for (int j = 0; j < pad; ++j) {
      const std::string cur = name_[v] + "~" + std::to_string(j);
      edges.push_back({prev, cur, w});
      prev = cur;
      w /= tau_;
    }
    edges.push_back({prev, name_[v], w});
  }
  return FromEdges(name_[0], edges, tau_);
}

int HstTree::Find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

Vec HstTree::Lift(const Vec& leaf_measure) const {
  if (leaf_measure.size() != num_leaves()) {
    throw InvalidInput("Lift: measure size differs from the leaf count");
  }
  Vec out = Vec::Zero(size());
  for (int i = 0; i < num_leaves(); ++i) out(leaves_[i]) = leaf_measure(i);
  for (auto it = preorder_.rbegin(); it != preorder_.rend(); ++it) {
    if (*it != 0) out(parent_[*it]) += out(*it);
  }
  return out;
}

double HstTree::Distance(int a, int b) const {
  double d = 0.0;
  while (a != b) {
    if (depth_[a] >= depth_[b]) {
      d += weight_[a];
      a = parent_[a];
    } else {
      d += weight_[b];
      b = parent_[b];
    }
  }
  return d;
}

Mat HstTree::LeafMetric() const {
  const int n = num_leaves();
  Mat d = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = Distance(leaves_[i], leaves_[j]);
    }
  }
  return d;
}

double HstTree::W1(const Vec& y, const Vec& z) const {
  const Vec ly = Lift(y);
  const Vec lz = Lift(z);
  if (std::abs(ly(0) - lz(0)) > 1e-9 * std::max(1.0, std::abs(ly(0)))) {
    throw InvalidInput("W1: measures have different mass");
  }
  double s = 0.0;
  for (int v = 1; v < size(); ++v) s += weight_[v] * std::abs(ly(v) - lz(v));
  return s;
}

// ---------------------------------------------------------------------------
// AssignmentLayout

AssignmentLayout::AssignmentLayout(const HstTree& tree, int k, long max_rows)
    : tree_(&tree), k_(k) {
  if (k < 1 || k > tree.num_leaves()) {
    throw InvalidInput("AssignmentLayout: need 1 <= k <= number of leaves");
  }
  offset_.assign(tree.size(), -1);
  for (int v : tree.preorder()) {
    if (v == tree.root()) continue;
    offset_[v] = dim_;
    dim_ += tree.leaf_count(v);
  }
  coord_weight_.resize(dim_);
  coord_vertex_.resize(dim_);
  for (int v = 1; v < tree.size(); ++v) {
    for (int i = 0; i < tree.leaf_count(v); ++i) {
      coord_weight_(index(v, i)) = tree.weight(v);
      coord_vertex_[index(v, i)] = v;
    }
  }

  long rows = 0;
  for (int u = 0; u < tree.size(); ++u) {
    if (tree.is_leaf(u)) continue;
    long prod = 1;
    for (int c : tree.children(u)) {
      prod *= tree.leaf_count(c) + 1;
      if (prod > max_rows) throw CapacityError("AssignmentLayout: row cap exceeded");
    }
    rows += prod - 1;
    if (u != 0) rows += tree.leaf_count(u) - 1;
    if (rows > max_rows) throw CapacityError("AssignmentLayout: row cap exceeded");
  }

  Mat a = Mat::Zero(rows, dim_);
  Vec b = Vec::Zero(rows);
  long r = 0;
  for (int u : tree.preorder()) {
    if (tree.is_leaf(u)) continue;
    const std::vector<int>& ch = tree.children(u);
    std::vector<int> comp(ch.size(), 0);
    while (true) {
      size_t p = 0;
      while (p < ch.size() && comp[p] == tree.leaf_count(ch[p])) comp[p++] = 0;
      if (p == ch.size()) break;
      ++comp[p];
      int m = 0;
      for (size_t c = 0; c < ch.size(); ++c) {
        m += comp[c];
        for (int j = 0; j < comp[c]; ++j) a(r, index(ch[c], j)) = -1.0;
      }
      if (u == 0) {
        b(r) = -std::max(0, m - k);
      } else {
        for (int i = 0; i < m; ++i) a(r, index(u, i)) = 1.0;
      }
      row_info_.push_back({u, comp});
      ++r;
    }
  }
  for (int u : tree.preorder()) {
    if (u == 0) continue;
    for (int i = 0; i + 1 < tree.leaf_count(u); ++i) {
      a(r, index(u, i)) = 1.0;
      a(r, index(u, i + 1)) = -1.0;
      row_info_.push_back({u, {}});
      ++r;
    }
  }
  polytope_ = std::make_unique<geometry::Polyhedron>(
      std::move(a), std::move(b), std::vector<bool>(rows, false));
}

Vec AssignmentLayout::IntegralPointFromCounts(const std::vector<int>& counts) const {
  const HstTree& t = *tree_;
  if (static_cast<int>(counts.size()) != t.size() || counts[0] != k_) {
    throw InvalidInput("IntegralPoint: counts must cover every vertex with k at the root");
  }
  Vec x(dim_);
  for (int v = 0; v < t.size(); ++v) {
    if (counts[v] < 0 || counts[v] > t.leaf_count(v)) {
      throw InvalidInput("IntegralPoint: count out of range at " + t.name(v));
    }
    if (!t.is_leaf(v)) {
      int s = 0;
      for (int c : t.children(v)) s += counts[c];
      if (s != counts[v]) {
        throw InvalidInput("IntegralPoint: counts not additive at " + t.name(v));
      }
    }
    if (v == 0) continue;
    for (int i = 0; i < t.leaf_count(v); ++i) {
      x(index(v, i)) = i >= counts[v] ? 1.0 : 0.0;
    }
  }
  return x;
}

Vec AssignmentLayout::IntegralPoint(const std::vector<int>& leaves) const {
  const HstTree& t = *tree_;
  if (static_cast<int>(leaves.size()) != k_) {
    throw InvalidInput("IntegralPoint: need exactly k leaves");
  }
  Vec m = Vec::Zero(t.num_leaves());
  for (int l : leaves) {
    if (l < 0 || l >= t.size() || t.leaf_index(l) < 0) {
      throw InvalidInput("IntegralPoint: not a leaf");
    }
    if (m(t.leaf_index(l)) != 0.0) {
      throw InvalidInput("IntegralPoint: repeated leaf " + t.name(l));
    }
    m(t.leaf_index(l)) = 1.0;
  }
  const Vec lifted = t.Lift(m);
  std::vector<int> counts(t.size());
  for (int v = 0; v < t.size(); ++v) counts[v] = static_cast<int>(std::lround(lifted(v)));
  return IntegralPointFromCounts(counts);
}

Vec AssignmentLayout::ServerMeasure(const Vec& x, double delta) const {
  const HstTree& t = *tree_;
  Vec z(t.size());
  z(0) = k_ / (1.0 - delta);
  for (int v = 1; v < t.size(); ++v) {
    double s = 0.0;
    for (int i = 0; i < t.leaf_count(v); ++i) s += 1.0 - x(index(v, i));
    z(v) = s / (1.0 - delta);
  }
  return z;
}

flow::MirrorMap MultiscaleEntropy(const AssignmentLayout& layout, double delta) {
  return flow::MirrorMap::WeightedEntropy(
      layout.coordinate_weights(), Vec::Constant(layout.dim(), delta));
}

// ---------------------------------------------------------------------------
// Serving

ServeResult ServeLeafRequest(const AssignmentLayout& layout, const Vec& x,
                             int leaf, double delta,
                             const flow::StepPolicy& policy, double horizon) {
  const HstTree& t = layout.tree();
  if (leaf < 0 || leaf >= t.size() || !t.is_leaf(leaf)) {
    throw InvalidInput("ServeLeafRequest: request is not a leaf");
  }
  const int j = layout.index(leaf, 0);
  ServeResult out;
  if (x(j) - delta <= policy.event_zero_tol) {
    out.x = x;
    flow::Sample s;
    s.x = x;
    s.v = Vec::Zero(x.size());
    out.trajectory.samples.push_back(std::move(s));
    out.trajectory.stop_reason = "identity";
    return out;
  }
  Vec f = Vec::Zero(layout.dim());
  f(j) = -1.0;
  const std::vector<flow::Event> events = {
      {"floor", [j, delta](double, const Vec& y) { return y(j) - delta; }}};
  out.trajectory = flow::Integrate(layout.polytope(), MultiscaleEntropy(layout, delta),
                                   flow::ConstantDrive(f), x, 0.0, horizon,
                                   events, policy);
  if (out.trajectory.aborted) {
    throw Error("ServeLeafRequest: integrator stopped with " +
                out.trajectory.stop_reason);
  }
  if (out.trajectory.event_index != 0) {
    throw Error("ServeLeafRequest: floor not reached by the horizon at leaf " +
                t.name(leaf));
  }
  out.x = out.trajectory.back().x;
  return out;
}

double EntropyGradientBound(const AssignmentLayout& layout, double delta,
                            int samples, Rng& rng) {
  const HstTree& t = layout.tree();
  auto random_point = [&]() {
    std::vector<int> ids(t.num_leaves());
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<int> leaves;
    for (int i = 0; i < layout.k(); ++i) leaves.push_back(t.leaves()[ids[i]]);
    return layout.IntegralPoint(leaves);
  };
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const int parts = 1 + UniformInt(rng, 4);
    Vec x = Vec::Zero(layout.dim());
    double total = 0.0;
    for (int p = 0; p < parts; ++p) {
      const double lambda = parts == 1 ? 1.0 : Uniform01(rng) + 1e-12;
      x += lambda * random_point();
      total += lambda;
    }
    x /= total;
    for (int i = 0; i < x.size(); ++i) {
      worst = std::max(worst, std::abs(1.0 + std::log(x(i) + delta)));
    }
  }
  return worst;
}

void DynamicsReport::Merge(const DynamicsReport& o) {
  sortedness_slack = std::max(sortedness_slack, o.sortedness_slack);
  level_mass_drift = std::max(level_mass_drift, o.level_mass_drift);
  sign_violation = std::max(sign_violation, o.sign_violation);
  leaf_decrease = std::max(leaf_decrease, o.leaf_decrease);
  upper_excess = std::max(upper_excess, o.upper_excess);
  floor_violation = std::max(floor_violation, o.floor_violation);
  union_checks += o.union_checks;
  union_failures += o.union_failures;
  samples += o.samples;
}

DynamicsReport VerifyDynamics(const AssignmentLayout& layout,
                              const flow::Trajectory& traj, int leaf,
                              double delta, double tol) {
  const HstTree& t = layout.tree();
  const auto& s = traj.samples;
  DynamicsReport rep;
  rep.samples = static_cast<int>(s.size());
  if (s.empty()) return rep;

  std::vector<bool> on_path(t.size(), false);
  for (int v = leaf; v != -1; v = t.parent(v)) on_path[v] = true;

  auto level_sums = [&](const Vec& z) {
    std::vector<double> sums(t.height() + 1, 0.0);
    for (int v = 0; v < t.size(); ++v) sums[t.depth(v)] += z(v);
    return sums;
  };
  std::vector<Vec> z(s.size());
  for (size_t a = 0; a < s.size(); ++a) z[a] = layout.ServerMeasure(s[a].x, delta);
  const std::vector<double> base = level_sums(z[0]);

  std::map<std::pair<int, std::vector<int>>, int> row_of;
  const auto& info = layout.row_info();
  for (size_t r = 0; r < info.size(); ++r) {
    if (!info[r].composition.empty()) {
      row_of[{info[r].vertex, info[r].composition}] = static_cast<int>(r);
    }
  }
  const geometry::Polyhedron& poly = layout.polytope();
  const size_t stride = std::max<size_t>(1, s.size() / 25);

  for (size_t a = 0; a < s.size(); ++a) {
    const Vec& x = s[a].x;
    for (int v = 1; v < t.size(); ++v) {
      for (int i = 0; i + 1 < t.leaf_count(v); ++i) {
        rep.sortedness_slack = std::max(
            rep.sortedness_slack, x(layout.index(v, i)) - x(layout.index(v, i + 1)));
      }
    }
    rep.upper_excess = std::max(rep.upper_excess, x.maxCoeff() - 1.0);
    const std::vector<double> sums = level_sums(z[a]);
    for (size_t h = 0; h < sums.size(); ++h) {
      rep.level_mass_drift = std::max(rep.level_mass_drift, std::abs(sums[h] - base[h]));
    }
    if (a + 1 < s.size()) {
      const double dt = s[a + 1].t - s[a].t;
      if (dt > 0.0) {
        for (int v = 1; v < t.size(); ++v) {
          const double rate = (z[a + 1](v) - z[a](v)) / dt;
          rep.sign_violation = std::max(rep.sign_violation, on_path[v] ? -rate : rate);
        }
        for (int l : t.leaves()) {
          if (l == leaf) continue;
          const int j = layout.index(l, 0);
          rep.leaf_decrease = std::max(rep.leaf_decrease, -(s[a + 1].x(j) - x(j)) / dt);
        }
      }
    }
    if (a % stride != 0 && a + 1 != s.size()) continue;
    const Vec slack = poly.b() - poly.a() * x;
    std::map<int, std::vector<int>> tight;
    for (size_t r = 0; r < info.size(); ++r) {
      if (!info[r].composition.empty() && slack(r) <= tol) {
        tight[info[r].vertex].push_back(static_cast<int>(r));
      }
    }
    for (const auto& [u, rows] : tight) {
      int pairs = 0;
      for (size_t p = 0; p < rows.size() && pairs < 200; ++p) {
        for (size_t q = p + 1; q < rows.size() && pairs < 200; ++q, ++pairs) {
          std::vector<int> uni = info[rows[p]].composition;
          const std::vector<int>& other = info[rows[q]].composition;
          for (size_t c = 0; c < uni.size(); ++c) uni[c] = std::max(uni[c], other[c]);
          const int r = row_of.at({u, uni});
          ++rep.union_checks;
          if (slack(r) > 10.0 * tol) ++rep.union_failures;
        }
      }
    }
  }
  for (int l : t.leaves()) {
    const int j = layout.index(l, 0);
    if (l != leaf && s[0].x(j) >= delta) {
      rep.floor_violation = std::max(rep.floor_violation, delta - s.back().x(j));
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Rounding and leaf conversion

Vec SigmaRound(const HstTree& tree, const Vec& z, double eps, int k, double tol) {
  Vec y(tree.size());
  for (int v = 0; v < tree.size(); ++v) y(v) = paging::Sigma(z(v), eps);
  if (std::abs(y(0) - k) > 1e-9) {
    throw Error("SigmaRound: root value " + std::to_string(y(0)) + " is not k");
  }
  y(0) = k;
  for (int u = 0; u < tree.size(); ++u) {
    if (tree.is_leaf(u)) continue;
    double s = 0.0;
    for (int c : tree.children(u)) s += y(c);
    if (s > y(u) + tol) {
      throw Error("SigmaRound: not a supermeasure at " + tree.name(u));
    }
  }
  return y;
}

LeafConverter::LeafConverter(const HstTree& tree, const Vec& y0)
    : tree_(&tree), y_(y0), pools_(tree.size()) {
  for (int u = 0; u < tree.size(); ++u) {
    double park = y0(u);
    for (int c : tree.children(u)) park -= y0(c);
    if (park < -1e-9) {
      throw Error("LeafConverter: not a supermeasure at " + tree.name(u));
    }
    int anchor = u;
    while (!tree.is_leaf(anchor)) anchor = tree.children(anchor).front();
    if (park > 0.0) pools_[u][anchor] = park;
  }
}

void LeafConverter::Transfer(int from, int to, double amount, double edge_weight) {
  Pool& src = pools_[from];
  double total = 0.0;
  for (const auto& [anchor, m] : src) total += m;
  if (total < amount - 1e-9) {
    throw Error("LeafConverter: not a supermeasure at " + tree_->name(from));
  }
  const double frac = total > 0.0 ? std::min(1.0, amount / total) : 0.0;
  const bool to_leaf = tree_->is_leaf(to);
  Pool& dst = pools_[to];
  for (auto it = src.begin(); it != src.end();) {
    const double moved = it->second * frac;
    int anchor = it->first;
    if (to_leaf && anchor != to) {
      leaf_cost_ += moved * tree_->Distance(anchor, to);
      if (observer_ && moved > 0.0) observer_(anchor, to, moved);
      anchor = to;
    }
    dst[anchor] += moved;
    it->second -= moved;
    if (it->second <= 1e-15) {
      it = src.erase(it);
    } else {
      ++it;
    }
  }
  routed_cost_ += edge_weight * amount;
}

void LeafConverter::Advance(const Vec& y, double tol) {
  const HstTree& t = *tree_;
  if (std::abs(y(0) - y_(0)) > tol) {
    throw Error("LeafConverter: total mass changed");
  }
  for (int u = 0; u < t.size(); ++u) {
    double park = y(u);
    for (int c : t.children(u)) park -= y(c);
    if (park < -tol) throw Error("LeafConverter: not a supermeasure at " + t.name(u));
  }
  const std::vector<int>& pre = t.preorder();
  for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
    const int v = *it;
    if (v != 0 && y(v) < y_(v)) Transfer(v, t.parent(v), y_(v) - y(v), t.weight(v));
  }
  for (int v : pre) {
    if (v != 0 && y(v) > y_(v)) Transfer(t.parent(v), v, y(v) - y_(v), t.weight(v));
  }
  y_ = y;
}

void LeafConverter::Remap(const HstTree& tree, const std::vector<int>& old_to_new) {
  std::vector<Pool> pools(tree.size());
  Vec y = Vec::Zero(tree.size());
  for (int v = 0; v < tree_->size(); ++v) {
    const int nv = old_to_new[v];
    y(nv) = y_(v);
    for (const auto& [anchor, mass] : pools_[v]) pools[nv][old_to_new[anchor]] += mass;
  }
  tree_ = &tree;
  pools_ = std::move(pools);
  y_ = std::move(y);
}

Vec LeafConverter::LeafMeasure() const {
  Vec m = Vec::Zero(tree_->num_leaves());
  for (const Pool& p : pools_) {
    for (const auto& [anchor, mass] : p) m(tree_->leaf_index(anchor)) += mass;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Potentials

Variant ParseVariant(const std::string& s) {
  if (s == "combinatorial") return Variant::kCombinatorial;
  if (s == "cardinality") return Variant::kCardinality;
  if (s == "weighted") return Variant::kWeighted;
  throw InvalidInput("unknown variant '" + s + "'");
}

std::string VariantName(Variant v) {
  switch (v) {
    case Variant::kCombinatorial:
      return "combinatorial";
    case Variant::kCardinality:
      return "cardinality";
    case Variant::kWeighted:
      return "weighted";
  }
  return "?";
}

namespace {

// Depth values only; Psi is computed by the callers that need it.
Vec DepthValues(const AssignmentLayout& layout, const PotentialSpec& spec,
                const Vec& z) {
  const HstTree& t = layout.tree();
  Vec d(t.size());
  const double n = t.num_leaves();
  const double eps = spec.resolved_eps();
  for (int v = 0; v < t.size(); ++v) {
    switch (spec.variant) {
      case Variant::kCombinatorial:
        d(v) = t.depth(v);
        break;
      case Variant::kCardinality:
        d(v) = std::log(n / t.leaf_count(v));
        break;
      case Variant::kWeighted:
        // z_root + eps in place of k + 2 eps keeps the root at exactly 0.
        d(v) = std::log((z(0) + eps) / (z(v) + eps)) / (1.0 - spec.delta);
        break;
    }
  }
  return d;
}

double WeightedPsi(const HstTree& t, const Vec& z, double eps) {
  double psi = 0.0;
  const double inv_tau = 1.0 / t.tau();
  for (int u = 1; u < t.size(); ++u) {
    const double c = 1.0 + (t.is_leaf(u) ? 0.0 : inv_tau);
    psi += t.weight(u) * ((z(u) + c * eps) * std::log(z(u) + eps) +
                          z(u) * std::log(z(t.parent(u)) + eps));
  }
  return psi;
}

// Psi(x + dx) - Psi(x), free of cancellation for small dx.
double PsiIncrement(const AssignmentLayout& layout, const PotentialSpec& spec,
                    const Vec& x, const Vec& dx) {
  const HstTree& t = layout.tree();
  const double delta = spec.delta;
  if (spec.variant != Variant::kWeighted) {
    const Vec d = DepthValues(layout, spec, Vec());  // z unused here
    double s = 0.0;
    for (int u = 1; u < t.size(); ++u) {
      double sum = 0.0;
      for (int i = 0; i < t.leaf_count(u); ++i) sum += dx(layout.index(u, i));
      s += t.weight(u) * (d(u) + d(t.parent(u))) * sum;
    }
    return s;
  }
  const double eps = spec.resolved_eps();
  const Vec z = layout.ServerMeasure(x, delta);
  Vec dz = Vec::Zero(t.size());
  for (int u = 1; u < t.size(); ++u) {
    for (int i = 0; i < t.leaf_count(u); ++i) dz(u) -= dx(layout.index(u, i));
    dz(u) /= 1.0 - delta;
  }
  const double inv_tau = 1.0 / t.tau();
  double s = 0.0;
  for (int u = 1; u < t.size(); ++u) {
    const int p = t.parent(u);
    const double c = 1.0 + (t.is_leaf(u) ? 0.0 : inv_tau);
    const double zb = z(u) + dz(u);
    const double term1 = dz(u) * std::log(zb + eps) +
                         (z(u) + c * eps) * std::log1p(dz(u) / (z(u) + eps));
    const double term2 = dz(u) * std::log(z(p) + dz(p) + eps) +
                         z(u) * std::log1p(dz(p) / (z(p) + eps));
    s += t.weight(u) * (term1 + term2);
  }
  return s;
}

}  // namespace

PotentialValues EvaluatePotential(const AssignmentLayout& layout,
                                  const PotentialSpec& spec, const Vec& x) {
  const HstTree& t = layout.tree();
  const Vec z = layout.ServerMeasure(x, spec.delta);
  PotentialValues out;
  out.depth = DepthValues(layout, spec, z);
  out.q = Vec::Zero(t.size());
  for (int u = 1; u < t.size(); ++u) out.q(u) = out.depth(u) - out.depth(t.parent(u));
  if (spec.variant == Variant::kWeighted) {
    out.psi = WeightedPsi(t, z, spec.resolved_eps());
  } else {
    for (int u = 1; u < t.size(); ++u) {
      double sum = 0.0;
      for (int i = 0; i < t.leaf_count(u); ++i) sum += x(layout.index(u, i));
      out.psi += t.weight(u) * (out.depth(u) + out.depth(t.parent(u))) * sum;
    }
  }
  return out;
}

double PsiRateClosedForm(const AssignmentLayout& layout,
                         const PotentialSpec& spec, const Vec& x, const Vec& v) {
  const HstTree& t = layout.tree();
  const Vec d = DepthValues(layout, spec, layout.ServerMeasure(x, spec.delta));
  double s = 0.0;
  for (int u = 1; u < t.size(); ++u) {
    double sum = 0.0;
    for (int i = 0; i < t.leaf_count(u); ++i) sum += v(layout.index(u, i));
    s += t.weight(u) * (d(u) + d(t.parent(u))) * sum;
  }
  return s;
}

double PsiRateChainRule(const AssignmentLayout& layout,
                        const PotentialSpec& spec, const Vec& x, const Vec& v) {
  if (spec.variant != Variant::kWeighted) {
    return PsiRateClosedForm(layout, spec, x, v);
  }
  const HstTree& t = layout.tree();
  const double eps = spec.resolved_eps();
  const Vec z = layout.ServerMeasure(x, spec.delta);
  Vec dz = Vec::Zero(t.size());
  for (int u = 1; u < t.size(); ++u) {
    for (int i = 0; i < t.leaf_count(u); ++i) dz(u) -= v(layout.index(u, i));
    dz(u) /= 1.0 - spec.delta;
  }
  const double inv_tau = 1.0 / t.tau();
  double s = 0.0;
  for (int u = 1; u < t.size(); ++u) {
    const int p = t.parent(u);
    const double c = 1.0 + (t.is_leaf(u) ? 0.0 : inv_tau);
    s += t.weight(u) *
         (dz(u) * (std::log(z(u) + eps) + (z(u) + c * eps) / (z(u) + eps)) +
          dz(u) * std::log(z(p) + eps) + z(u) * dz(p) / (z(p) + eps));
  }
  return s;
}

double PairMin(const HstTree& tree, const Vec& f, int u) {
  const std::vector<int>& ch = tree.children(u);
  if (ch.size() < 2) return 0.0;
  double a = std::numeric_limits<double>::infinity(), b = a;
  for (int c : ch) {
    if (f(c) < a) {
      b = a;
      a = f(c);
    } else if (f(c) < b) {
      b = f(c);
    }
  }
  return a + b;
}

double MaxLinearOverConfigurations(const AssignmentLayout& layout, const Vec& c,
                                   int leaf) {
  const HstTree& t = layout.tree();
  const int k = layout.k();
  std::vector<std::vector<double>> best(t.size());
  const std::vector<int>& pre = t.preorder();
  for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
    const int u = *it;
    const int cap = std::min(k, t.leaf_count(u));
    std::vector<double>& f = best[u];
    if (t.is_leaf(u)) {
      f = {c(layout.index(u, 0)), 0.0};
      if (u == leaf) f[0] = kNegInf;
      continue;
    }
    f.assign(1, 0.0);
    for (int ch : t.children(u)) {
      const std::vector<double>& g = best[ch];
      std::vector<double> merged(std::min<size_t>(cap + 1, f.size() + g.size() - 1),
                                 kNegInf);
      for (size_t a = 0; a < f.size(); ++a) {
        if (f[a] == kNegInf) continue;
        for (size_t b = 0; b < g.size() && a + b < merged.size(); ++b) {
          if (g[b] == kNegInf) continue;
          merged[a + b] = std::max(merged[a + b], f[a] + g[b]);
        }
      }
      f = std::move(merged);
    }
    if (u == 0) continue;
    // Own coordinates: sum_{i >= s} c_{u,i}.
    double tail = 0.0;
    for (int i = 0; i < t.leaf_count(u); ++i) tail += c(layout.index(u, i));
    for (size_t s = 0; s < f.size(); ++s) {
      if (f[s] != kNegInf) f[s] += tail;
      if (s < static_cast<size_t>(t.leaf_count(u))) tail -= c(layout.index(u, s));
    }
  }
  if (static_cast<int>(best[0].size()) <= k || best[0][k] == kNegInf) {
    throw Error("MaxLinearOverConfigurations: no configuration");
  }
  return best[0][k];
}

void InequalityStats::Add(double lhs, double rhs, double scale, double tol) {
  ++checked;
  const double rel = (lhs - rhs) / std::max(scale, 1e-300);
  worst_relative = std::max(worst_relative, rel);
  if (lhs - rhs > tol * scale) ++violations;
}

void InequalityStats::Merge(const InequalityStats& o) {
  checked += o.checked;
  violations += o.violations;
  worst_relative = std::max(worst_relative, o.worst_relative);
}

void DepthReport::Merge(const DepthReport& o) {
  depth.Merge(o.depth);
  corollary.Merge(o.corollary);
  depth2.Merge(o.depth2);
  log2k.Merge(o.log2k);
  corollary_charged.Merge(o.corollary_charged);
  depth2_charged.Merge(o.depth2_charged);
  log2k_charged.Merge(o.log2k_charged);
  bregman_excess = std::max(bregman_excess, o.bregman_excess);
  bregman_violations += o.bregman_violations;
  closed_form_gap = std::max(closed_form_gap, o.closed_form_gap);
  fd_gap = std::max(fd_gap, o.fd_gap);
  min_qhat = std::min(min_qhat, o.min_qhat);
}

DepthReport VerifyDepthInequalities(const AssignmentLayout& layout,
                                    const flow::Trajectory& traj, int leaf,
                                    const PotentialSpec& spec, double tol) {
  const HstTree& t = layout.tree();
  const auto& s = traj.samples;
  const double delta = spec.delta;
  const double eps = spec.resolved_eps();
  const Vec& w = layout.coordinate_weights();
  const int jl = layout.index(leaf, 0);
  DepthReport rep;

  double c_floor = 0.0;
  if (spec.variant == Variant::kCombinatorial) c_floor = 1.0;
  if (spec.variant == Variant::kCardinality) c_floor = std::log(2.0);

  std::vector<PotentialValues> pv(s.size());
  for (size_t a = 0; a < s.size(); ++a) {
    pv[a] = EvaluatePotential(layout, spec, s[a].x);
    for (int u = 0; u < t.size(); ++u) {
      if (t.children(u).size() >= 2) rep.min_qhat = std::min(rep.min_qhat, PairMin(t, pv[a].q, u));
    }
  }

  for (size_t a = 0; a + 1 < s.size(); ++a) {
    const double dt = s[a + 1].t - s[a].t;
    if (!(dt > 0.0)) continue;
    const Vec& xa = s[a].x;
    const Vec& v = s[a].v;
    // Exact Euler increment unless a repair moved the point.
    Vec dx = dt * v;
    if ((s[a + 1].x - xa - dx).lpNorm<Eigen::Infinity>() > 1e-12) dx = s[a + 1].x - xa;
    const Vec rate = dx / dt;

    const double dpsi = PsiIncrement(layout, spec, xa, dx) / dt;
    const double closed = PsiRateClosedForm(layout, spec, xa, rate);
    const double chain = PsiRateChainRule(layout, spec, xa, rate);
    double psi_scale = 0.0;
    for (int u = 1; u < t.size(); ++u) {
      double sum = 0.0;
      for (int i = 0; i < t.leaf_count(u); ++i) sum += std::abs(rate(layout.index(u, i)));
      psi_scale += t.weight(u) * (pv[a].depth(u) + pv[a].depth(t.parent(u))) * sum;
    }
    psi_scale = std::max(psi_scale, 1e-300);
    rep.closed_form_gap = std::max(rep.closed_form_gap, std::abs(closed - chain) / psi_scale);
    const double closed_b = PsiRateClosedForm(layout, spec, xa + dx, rate);
    rep.fd_gap = std::max(rep.fd_gap, std::abs(dpsi - 0.5 * (closed + closed_b)) / psi_scale);

    // Slope of D(y; x) along the segment is k0 + <cy, y>.
    Vec cy(layout.dim());
    double k0 = 0.0;
    for (int i = 0; i < layout.dim(); ++i) {
      const double base = xa(i) + delta;
      const double r = dx(i) / base;
      const double lg = w(i) * std::log1p(r);
      k0 -= w(i) * BregmanTerm(base, r);
      k0 += lg * (xa(i) + dx(i));
      cy(i) = -lg;
    }
    k0 /= dt;
    cy /= dt;
    const double smax = k0 + MaxLinearOverConfigurations(layout, cy, leaf);
    const double smin = k0 - MaxLinearOverConfigurations(layout, -cy, leaf);
    const double xl = xa(jl) + 0.5 * dx(jl);
    const double excess = smax + xl;
    rep.bregman_excess = std::max(rep.bregman_excess, excess);
    if (excess > 1e-3) ++rep.bregman_violations;

    const PotentialValues& pa = pv[a];
    const PotentialValues& pb = pv[a + 1];
    const double dl = 0.5 * (pa.depth(leaf) + pb.depth(leaf));
    double norm_qx = 0.0, norm_qz = 0.0, norm_wz = 0.0;
    for (int u = 1; u < t.size(); ++u) {
      const double q = 0.5 * (pa.q(u) + pb.q(u));
      double sum = 0.0, abs_sum = 0.0;
      for (int i = 0; i < t.leaf_count(u); ++i) {
        sum += rate(layout.index(u, i));
        abs_sum += std::abs(rate(layout.index(u, i)));
      }
      norm_qx += q * t.weight(u) * abs_sum;
      norm_qz += q * t.weight(u) * std::abs(sum) / (1.0 - delta);
      norm_wz += t.weight(u) * std::abs(sum) / (1.0 - delta);
    }

    {
      const double b3 = 3.0 * dl * (xl + delta);
      rep.depth.Add(norm_qx, b3 + dpsi, norm_qx + std::abs(b3) + std::abs(dpsi), tol);
    }
    auto corollary_pair = [&](double lhs, double psi_term, double coeff,
                              InequalityStats* stated, InequalityStats* charged) {
      stated->Add(lhs, psi_term + coeff * smin,
                  std::abs(lhs) + std::abs(psi_term) + std::abs(coeff * smin), tol);
      charged->Add(lhs, psi_term - coeff * smax,
                   std::abs(lhs) + std::abs(psi_term) + std::abs(coeff * smax), tol);
    };
    corollary_pair((1.0 - delta) * norm_qz, dpsi, 6.0 * dl, &rep.corollary,
                   &rep.corollary_charged);
    if (c_floor > 0.0) {
      bool applies = true;
      for (int u = 0; u < t.size() && applies; ++u) {
        if (t.is_leaf(u)) continue;
        applies = PairMin(t, pa.q, u) >= c_floor - 1e-12 &&
                  PairMin(t, pb.q, u) >= c_floor - 1e-12;
      }
      if (applies) {
        corollary_pair(c_floor * (1.0 - delta) / 4.0 * norm_wz, dpsi, 6.0 * dl,
                       &rep.depth2, &rep.depth2_charged);
      }
    }
    if (spec.variant == Variant::kWeighted) {
      const Vec za = layout.ServerMeasure(xa, delta);
      double sigma_norm = 0.0;
      for (int u = 1; u < t.size(); ++u) {
        double dz = 0.0;
        for (int i = 0; i < t.leaf_count(u); ++i) dz -= dx(layout.index(u, i));
        dz /= 1.0 - delta;
        sigma_norm += t.weight(u) * std::abs(SigmaIncrement(za(u), dz, eps)) / dt;
      }
      const double lhs = (1.0 - eps) / 4.0 * std::log(4.0 / 3.0) * sigma_norm;
      corollary_pair(lhs, (1.0 - delta) * dpsi, 6.0 * std::log(2.0 + layout.k() / eps),
                     &rep.log2k, &rep.log2k_charged);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// End-to-end run

VerifyLevel ParseVerifyLevel(const std::string& s) {
  if (s == "none") return VerifyLevel::kNone;
  if (s == "fast") return VerifyLevel::kFast;
  if (s == "full") return VerifyLevel::kFull;
  throw InvalidInput("unknown verify level '" + s + "'");
}

FractionalServer::FractionalServer(HstTree tree, int k, const KServerOptions& options)
    : tree_(std::make_unique<HstTree>(std::move(tree))),
      options_(options),
      spec_(options.potential),
      k_(k) {
  layout_ = std::make_unique<AssignmentLayout>(*tree_, k);
  spec_.k = k;
  if (spec_.delta <= 0.0) spec_.delta = k == 1 ? 0.25 : 1.0 / (2.0 * k);
  const double eps = spec_.resolved_eps();
  if (eps >= 1.0 || eps < spec_.delta * k / (1.0 - spec_.delta) - 1e-12) {
    throw InvalidInput("FractionalServer: need delta k / (1 - delta) <= eps < 1");
  }
  run_.delta = spec_.delta;
  run_.eps = eps;
  std::vector<int> initial = options.initial_leaves;
  if (initial.empty()) {
    initial.assign(tree_->leaves().begin(), tree_->leaves().begin() + k);
  }
  x_ = layout_->IntegralPoint(initial);
  z_ = layout_->ServerMeasure(x_, spec_.delta);
  conv_ = std::make_unique<LeafConverter>(*tree_, SigmaRound(*tree_, z_, eps, k));
}

RequestLog FractionalServer::Serve(int r) {
  const HstTree& tree = *tree_;
  if (r < 0 || r >= tree.size() || !tree.is_leaf(r)) {
    throw InvalidInput("FractionalServer: request is not a leaf");
  }
  const double eps = spec_.resolved_eps();
  ServeResult res = ServeLeafRequest(*layout_, x_, r, spec_.delta, options_.policy);
  const auto& samples = res.trajectory.samples;
  RequestLog entry{r, static_cast<int>(samples.size()) - 1,
                   samples.back().t - samples.front().t, 0.0, 0.0};
  const double before = conv_->leaf_cost();
  for (size_t a = 1; a < samples.size(); ++a) {
    const Vec zn = layout_->ServerMeasure(samples[a].x, spec_.delta);
    for (int v = 1; v < tree.size(); ++v) {
      entry.frac_cost += tree.weight(v) * std::abs(zn(v) - z_(v));
    }
    z_ = zn;
    const Vec y = SigmaRound(tree, z_, eps, k_);
    conv_->Advance(y);
    if (options_.verify != VerifyLevel::kNone) {
      const Vec lm = conv_->LeafMeasure();
      for (int l : tree.leaves()) {
        run_.demand_shortfall =
            std::max(run_.demand_shortfall, y(l) - lm(tree.leaf_index(l)));
      }
    }
  }
  entry.leaf_cost = conv_->leaf_cost() - before;
  run_.frac_cost += entry.frac_cost;
  run_.alg_cost = conv_->leaf_cost();
  run_.routed_cost = conv_->routed_cost();
  run_.service_gap = std::max(run_.service_gap,
                              1.0 - conv_->LeafMeasure()(tree.leaf_index(r)));
  if (options_.verify != VerifyLevel::kNone) {
    run_.dynamics.Merge(VerifyDynamics(*layout_, res.trajectory, r, spec_.delta));
  }
  if (options_.verify == VerifyLevel::kFull) {
    run_.depth.Merge(VerifyDepthInequalities(*layout_, res.trajectory, r, spec_));
  }
  x_ = res.x;
  run_.log.push_back(entry);
  return entry;
}

void FractionalServer::Grow(HstTree bigger, long max_rows) {
  auto next = std::make_unique<HstTree>(std::move(bigger));
  std::vector<int> old_to_new(tree_->size());
  for (int v = 0; v < tree_->size(); ++v) {
    const int nv = next->Find(tree_->name(v));
    if (nv < 0 || (v != 0 && (next->Find(tree_->name(tree_->parent(v))) != next->parent(nv) ||
                              next->weight(nv) != tree_->weight(v)))) {
      throw InvalidInput("FractionalServer::Grow: not a supertree at " + tree_->name(v));
    }
    if (tree_->is_leaf(v) != next->is_leaf(nv)) {
      throw InvalidInput("FractionalServer::Grow: leaf " + tree_->name(v) + " became internal");
    }
    old_to_new[v] = nv;
  }
  auto layout = std::make_unique<AssignmentLayout>(*next, k_, max_rows);
  Vec x = Vec::Ones(layout->dim());
  for (int v = 1; v < tree_->size(); ++v) {
    for (int i = 0; i < tree_->leaf_count(v); ++i) {
      x(layout->index(old_to_new[v], i)) = x_(layout_->index(v, i));
    }
  }
  Vec z = Vec::Zero(next->size());
  for (int v = 0; v < tree_->size(); ++v) z(old_to_new[v]) = z_(v);
  conv_->Remap(*next, old_to_new);
  tree_ = std::move(next);
  layout_ = std::move(layout);
  x_ = std::move(x);
  z_ = std::move(z);
}

KServerRun RunKServer(const HstTree& tree, int k, const std::vector<int>& requests,
                      const KServerOptions& options) {
  for (int r : requests) {
    if (r < 0 || r >= tree.size() || !tree.is_leaf(r)) {
      throw InvalidInput("RunKServer: request is not a leaf");
    }
  }
  FractionalServer server(tree, k, options);
  for (int r : requests) server.Serve(r);
  KServerRun run = server.summary();
  if (options.compute_opt) {
    std::vector<int> initial = options.initial_leaves;
    if (initial.empty()) initial.assign(tree.leaves().begin(), tree.leaves().begin() + k);
    std::vector<int> req_idx, init_idx;
    for (int r : requests) req_idx.push_back(tree.leaf_index(r));
    for (int l : initial) init_idx.push_back(tree.leaf_index(l));
    run.opt_cost = opt::KServerOpt(tree.LeafMetric(), k, req_idx, init_idx).cost;
    run.ratio = run.opt_cost > 0.0 ? run.alg_cost / run.opt_cost
                                   : (run.alg_cost > 1e-9 ? INFINITY : 1.0);
  }
  return run;
}

}  // namespace kslab::hst
