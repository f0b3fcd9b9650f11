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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kslab/offline_opt.h"
#include "kslab/paging.h"

namespace kslab::hst {
namespace {

// Random tau-adic tree with all leaves at depth `height`; every internal
// vertex gets 1..3 children.
HstTree RandomTree(Rng& rng, int height, int max_leaves, double tau = 2.0) {
  while (true) {
    std::vector<HstTree::Edge> edges;
    std::vector<std::string> level = {"r"};
    int next = 0;
    for (int d = 1; d <= height; ++d) {
      std::vector<std::string> below;
      for (const std::string& p : level) {
        const int kids = 1 + UniformInt(rng, 3);
        for (int c = 0; c < kids; ++c) {
          below.push_back("n" + std::to_string(next++));
          edges.push_back({p, below.back(), std::pow(tau, height - d)});
        }
      }
      level = std::move(below);
    }
    if (static_cast<int>(level.size()) <= max_leaves && level.size() >= 2) {
      return HstTree::FromEdges("r", edges, tau);
    }
  }
}

Vec RandomMeasure(Rng& rng, int n, double mass) {
  Vec m(n);
  for (int i = 0; i < n; ++i) m(i) = Uniform01(rng) < 0.3 ? 0.0 : Uniform01(rng);
  if (m.sum() == 0.0) m(0) = 1.0;
  return m * (mass / m.sum());
}

TEST(HstTreeTest, UniformShape) {
  const HstTree t = HstTree::Uniform(2, 4, 2.0);
  EXPECT_EQ(t.size(), 31);
  EXPECT_EQ(t.num_leaves(), 16);
  EXPECT_EQ(t.height(), 4);
  EXPECT_EQ(t.leaf_count(t.root()), 16);
  EXPECT_DOUBLE_EQ(t.weight(t.children(0)[0]), 8.0);
  EXPECT_DOUBLE_EQ(t.weight(t.leaves()[0]), 1.0);
  // Depth-first leaf order: consecutive leaves are siblings.
  EXPECT_EQ(t.parent(t.leaves()[0]), t.parent(t.leaves()[1]));
}

TEST(HstTreeTest, ValidatorRejectsNonAdicWeights) {
  std::vector<HstTree::Edge> e = {{"r", "a", 4}, {"r", "b", 4}, {"a", "a1", 3},
                                  {"b", "b1", 2}};
  EXPECT_THROW(HstTree::FromEdges("r", e, 2.0), InvalidInput);
  e[2].weight = 2;
  EXPECT_NO_THROW(HstTree::FromEdges("r", e, 2.0));
  e[2].weight = 1;  // power of tau but not parent / tau
  EXPECT_THROW(HstTree::FromEdges("r", e, 2.0), InvalidInput);
}

TEST(HstTreeTest, ValidatorRejectsUnequalDepthAndNormalizerPads) {
  std::vector<HstTree::Edge> e = {{"r", "a", 4}, {"r", "b", 4}, {"a", "a1", 2},
                                  {"a", "a2", 2}};
  EXPECT_THROW(HstTree::FromEdges("r", e, 2.0), InvalidInput);
  const HstTree t = HstTree::FromEdges("r", e, 2.0, false).Normalized();
  EXPECT_EQ(t.num_leaves(), 3);
  const int b = t.Find("b");
  ASSERT_GE(b, 0);
  EXPECT_TRUE(t.is_leaf(b));
  EXPECT_EQ(t.depth(b), 2);
  EXPECT_DOUBLE_EQ(t.weight(b), 2.0);
  EXPECT_DOUBLE_EQ(t.weight(t.parent(b)), 4.0);
}

TEST(HstTreeTest, ParseFormat) {
  std::istringstream in(
      "# two-level star\nroot R\ntau 2\nedge R x 2\nedge R y 2\n"
      "edge x x0 1\nedge x x1 1\nedge y y0 1\n");
  const HstTree t = HstTree::Parse(in);
  EXPECT_EQ(t.num_leaves(), 3);
  EXPECT_DOUBLE_EQ(t.Distance(t.Find("x0"), t.Find("y0")), 6.0);
  std::istringstream bad("root R\ntau 2\nedge R x\n");
  EXPECT_THROW(HstTree::Parse(bad), InvalidInput);
  std::istringstream cycle("root R\ntau 2\nedge R x 1\nedge x R 1\n");
  EXPECT_THROW(HstTree::Parse(cycle), InvalidInput);
}

TEST(HstTreeTest, LiftMatchesDirectSums) {
  Rng rng = MakeRng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const HstTree t = RandomTree(rng, 3, 12);
    const Vec m = RandomMeasure(rng, t.num_leaves(), 2.5);
    const Vec lifted = t.Lift(m);
    for (int v = 0; v < t.size(); ++v) {
      double direct = 0.0;
      for (int l : t.leaves()) {
        for (int a = l; a != -1; a = t.parent(a)) {
          if (a == v) direct += m(t.leaf_index(l));
        }
      }
      EXPECT_NEAR(lifted(v), direct, 1e-12);
    }
  }
}

TEST(HstTreeTest, LiftExamples) {
  const HstTree t = HstTree::Uniform(2, 3, 2.0);
  Vec point = Vec::Zero(8);
  point(5) = 1.0;
  const Vec lp = t.Lift(point);
  for (int v = 0; v < t.size(); ++v) {
    bool on_path = false;
    for (int a = t.leaves()[5]; a != -1; a = t.parent(a)) on_path |= a == v;
    EXPECT_DOUBLE_EQ(lp(v), on_path ? 1.0 : 0.0);
  }
  const Vec lu = t.Lift(Vec::Constant(8, 3.0 / 8));
  for (int v = 0; v < t.size(); ++v) {
    EXPECT_NEAR(lu(v), 3.0 * t.leaf_count(v) / 8, 1e-15);
  }
}

TEST(W1Test, SiblingMoveCostsTwiceChildWeight) {
  const HstTree t = HstTree::Uniform(3, 2, 4.0);
  Vec a = Vec::Zero(9), b = Vec::Zero(9);
  a(3) = 1.0;
  b(5) = 1.0;  // same parent, child weight 1
  EXPECT_DOUBLE_EQ(t.W1(a, b), 2.0);
  b.setZero();
  b(7) = 1.0;  // lca is the root, child weight 4
  EXPECT_DOUBLE_EQ(t.W1(a, b), 10.0);
  EXPECT_DOUBLE_EQ(t.W1(a, a), 0.0);
  EXPECT_THROW(t.W1(a, 2 * b), InvalidInput);
}

TEST(W1Test, MatchesTransportOptimum) {
  Rng rng = MakeRng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const HstTree t = RandomTree(rng, 1 + UniformInt(rng, 3), 6);
    const int n = t.num_leaves();
    const double mass = UniformIn(rng, 0.5, 3.0);
    const Vec y = RandomMeasure(rng, n, mass);
    const Vec z = RandomMeasure(rng, n, mass);
    const double lp = opt::TransportCost(t.LeafMetric(), y, z);
    EXPECT_NEAR(t.W1(y, z), lp, 1e-8) << "trial " << trial;
  }
}

TEST(W1Test, IsAMetric) {
  Rng rng = MakeRng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const HstTree t = RandomTree(rng, 3, 10);
    const int n = t.num_leaves();
    const Vec a = RandomMeasure(rng, n, 2.0);
    const Vec b = RandomMeasure(rng, n, 2.0);
    const Vec c = RandomMeasure(rng, n, 2.0);
    EXPECT_NEAR(t.W1(a, b), t.W1(b, a), 1e-12);
    EXPECT_LE(t.W1(a, c), t.W1(a, b) + t.W1(b, c) + 1e-12);
    EXPECT_GE(t.W1(a, b), 0.0);
  }
}

TEST(LayoutTest, RowCountsOnSixteenLeaves) {
  const HstTree t = HstTree::Uniform(2, 4, 2.0);
  const AssignmentLayout layout(t, 3);
  EXPECT_EQ(layout.dim(), 64);
  int comp = 0, sorted = 0;
  for (const auto& r : layout.row_info()) (r.composition.empty() ? sorted : comp)++;
  EXPECT_EQ(comp, 184);
  EXPECT_EQ(sorted, 34);
  EXPECT_THROW(AssignmentLayout(t, 3, 100), CapacityError);
  EXPECT_THROW(AssignmentLayout(t, 17), InvalidInput);
}

TEST(LayoutTest, IntegralPointsAreFeasibleWithExactMeasure) {
  Rng rng = MakeRng(14);
  for (int trial = 0; trial < 30; ++trial) {
    const HstTree t = RandomTree(rng, 3, 9);
    const int k = 1 + UniformInt(rng, t.num_leaves());
    const AssignmentLayout layout(t, k);
    std::vector<int> ids(t.num_leaves());
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<int> leaves;
    Vec m = Vec::Zero(t.num_leaves());
    for (int i = 0; i < k; ++i) {
      leaves.push_back(t.leaves()[ids[i]]);
      m(ids[i]) = 1.0;
    }
    const Vec x = layout.IntegralPoint(leaves);
    EXPECT_LE(layout.polytope().MaxViolation(x), 1e-12);
    const double delta = 0.1;
    const Vec z = layout.ServerMeasure(x, delta);
    const Vec lifted = t.Lift(m);
    for (int v = 0; v < t.size(); ++v) {
      EXPECT_NEAR(z(v), lifted(v) / (1 - delta), 1e-12);
    }
  }
}

TEST(LayoutTest, PolytopeRejectsUnsortedAndOverfullPoints) {
  const HstTree t = HstTree::Uniform(2, 2, 2.0);
  const AssignmentLayout layout(t, 2);
  Vec x = layout.IntegralPoint({t.leaves()[0], t.leaves()[2]});
  Vec bad = x;
  const int a = t.children(0)[0];
  std::swap(bad(layout.index(a, 0)), bad(layout.index(a, 1)));
  EXPECT_GT(layout.polytope().MaxViolation(bad), 0.5);
  // Three units of server mass when k = 2.
  bad = x;
  bad(layout.index(t.leaves()[1], 0)) = 0.0;
  EXPECT_GT(layout.polytope().MaxViolation(bad), 0.5);
}

TEST(ServeTest, IdentityAtFloor) {
  const HstTree t = HstTree::Uniform(2, 2, 2.0);
  const AssignmentLayout layout(t, 2);
  const double delta = 0.25;
  Vec x = layout.IntegralPoint({t.leaves()[0], t.leaves()[2]});
  x(layout.index(t.leaves()[0], 0)) = delta;
  const ServeResult r = ServeLeafRequest(layout, x, t.leaves()[0], delta);
  EXPECT_EQ(r.trajectory.samples.size(), 1u);
  EXPECT_EQ(r.x, x);
}

TEST(ServeTest, TwoLeafStarClosedForm) {
  // On the face x_a + x_b = 1 with unit weights, p = x_b + delta obeys
  // d/dt log(p / (1 + 2 delta - p)) = -1.
  const HstTree t = HstTree::FromEdges("r", {{"r", "a", 1}, {"r", "b", 1}}, 2.0);
  const AssignmentLayout layout(t, 1);
  const double delta = 0.25;
  const int a = t.Find("a"), b = t.Find("b");
  const Vec x0 = layout.IntegralPoint({a});
  flow::StepPolicy fine;
  fine.h_max = 1e-4;
  const ServeResult r = ServeLeafRequest(layout, x0, b, delta, fine);
  EXPECT_NEAR(r.x(layout.index(b, 0)), delta, 1e-9);
  EXPECT_NEAR(r.x(layout.index(a, 0)), 1 - delta, 1e-9);
  const Vec z = layout.ServerMeasure(r.x, delta);
  EXPECT_NEAR(z(b), 1.0, 1e-9);
  const double s = 1 + 2 * delta;
  const double expected_t =
      std::log((1 + delta) / (s - 1 - delta)) - std::log(2 * delta / (s - 2 * delta));
  EXPECT_NEAR(r.trajectory.back().t, expected_t, 1e-3);
  // Default steps agree with the fine reference on the terminal state.
  const ServeResult coarse = ServeLeafRequest(layout, x0, b, delta);
  EXPECT_LT((coarse.x - r.x).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(ServeTest, DepthTwoLevelMassConstant) {
  const HstTree t = HstTree::Uniform(2, 2, 2.0);
  const AssignmentLayout layout(t, 2);
  const double delta = 0.25;
  const Vec x0 = layout.IntegralPoint({t.leaves()[0], t.leaves()[1]});
  const ServeResult r = ServeLeafRequest(layout, x0, t.leaves()[3], delta);
  const DynamicsReport rep = VerifyDynamics(layout, r.trajectory, t.leaves()[3], delta);
  EXPECT_LE(rep.level_mass_drift, 1e-9);
  EXPECT_GT(rep.samples, 10);
}

TEST(ServeTest, DynamicsLemmasAlongRandomRequests) {
  Rng rng = MakeRng(15);
  for (int trial = 0; trial < 6; ++trial) {
    const HstTree t = RandomTree(rng, 2 + UniformInt(rng, 2), 9);
    const int k = 1 + UniformInt(rng, std::min(3, t.num_leaves() - 1));
    const AssignmentLayout layout(t, k);
    const double delta = k == 1 ? 0.25 : 0.5 / k;
    std::vector<int> init(t.leaves().begin(), t.leaves().begin() + k);
    Vec x = layout.IntegralPoint(init);
    for (int req = 0; req < 8; ++req) {
      const int l = t.leaves()[UniformInt(rng, t.num_leaves())];
      const ServeResult r = ServeLeafRequest(layout, x, l, delta);
      const DynamicsReport rep = VerifyDynamics(layout, r.trajectory, l, delta);
      EXPECT_LE(rep.sortedness_slack, 1e-7);
      EXPECT_LE(rep.level_mass_drift, 1e-6);
      EXPECT_LE(rep.sign_violation, 1e-6);
      EXPECT_LE(rep.leaf_decrease, 1e-6);
      EXPECT_LE(rep.upper_excess, 1e-9);
      EXPECT_LE(rep.floor_violation, 1e-9);
      EXPECT_EQ(rep.union_failures, 0);
      EXPECT_LE(r.x(layout.index(l, 0)), delta + 1e-9);
      EXPECT_LE(layout.polytope().MaxViolation(r.x), 1e-7);
      x = r.x;
    }
  }
}

TEST(EntropyTest, GradientBound) {
  const HstTree t = HstTree::Uniform(2, 3, 2.0);
  Rng rng = MakeRng(16);
  for (auto [k, delta] : {std::pair{1, 0.5}, std::pair{4, 1.0 / 8}}) {
    const AssignmentLayout layout(t, k);
    const double bound = EntropyGradientBound(layout, delta, 200, rng);
    EXPECT_LE(bound, 1 + std::log(1 / delta) + std::log(2.0));
  }
  // Single coordinate: gradient is w (1 + log(x + delta)).
  const HstTree star = HstTree::FromEdges("r", {{"r", "a", 2}, {"r", "b", 2}}, 2.0);
  const AssignmentLayout layout(star, 1);
  const flow::MirrorMap phi = MultiscaleEntropy(layout, 0.25);
  const Vec x = Vec::Constant(2, 0.4);
  EXPECT_NEAR(phi.gradient(x)(0), 2 * (1 + std::log(0.65)), 1e-14);
}

TEST(EntropyTest, OptMoveBound) {
  Rng rng = MakeRng(17);
  const HstTree t = HstTree::Uniform(2, 3, 2.0);
  const int k = 3;
  const double delta = 1.0 / 6;
  const AssignmentLayout layout(t, k);
  const flow::MirrorMap phi = MultiscaleEntropy(layout, delta);
  const double c = 1 + std::log(1 / delta) + std::log(2.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> ids(8);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<int> ya, xs;
    for (int i = 0; i < k; ++i) ya.push_back(t.leaves()[ids[i]]);
    for (int i = 0; i < k; ++i) xs.push_back(t.leaves()[ids[7 - i]]);
    std::vector<int> yb = ya;
    yb[0] = t.leaves()[ids[k]];
    const Vec x = 0.5 * (layout.IntegralPoint(xs) + layout.IntegralPoint(ya));
    const Vec pa = layout.IntegralPoint(ya), pb = layout.IntegralPoint(yb);
    const double change =
        std::abs(phi.BregmanFunctional(pb, x) - phi.BregmanFunctional(pa, x));
    double move = 0.0;
    for (int j = 0; j < layout.dim(); ++j) {
      move += layout.coordinate_weights()(j) * std::abs(pb(j) - pa(j));
    }
    EXPECT_NEAR(move, t.Distance(ya[0], yb[0]), 1e-12);
    EXPECT_LE(change, c * move + 1e-12);
  }
}

TEST(SigmaRoundTest, Examples) {
  const HstTree t = HstTree::Uniform(2, 2, 2.0);
  const AssignmentLayout layout(t, 2);
  const double delta = 0.25, eps = delta * 2 / (1 - delta);
  const Vec x = layout.IntegralPoint({t.leaves()[0], t.leaves()[3]});
  const Vec z = layout.ServerMeasure(x, delta);
  const Vec y = SigmaRound(t, z, eps, 2);
  const Vec lifted = t.Lift(Vec((Eigen::VectorXd(4) << 1, 0, 0, 1).finished()));
  EXPECT_LT((y - lifted).lpNorm<Eigen::Infinity>(), 1e-12);
  // Below eps everywhere in a subtree gives zeros there.
  Vec small = lifted;
  small(t.children(0)[1]) = 0.5 * eps + 1;
  small(t.leaves()[2]) = 0.5 * eps;
  small(t.leaves()[3]) = 1;
  small(0) = 2 + 0.5 * eps;
  const Vec ys = SigmaRound(t, small, eps, 2);
  EXPECT_EQ(ys(t.leaves()[2]), 0.0);
}

TEST(SigmaRoundTest, SupermeasureOnRandomMeasures) {
  Rng rng = MakeRng(18);
  for (int trial = 0; trial < 200; ++trial) {
    const HstTree t = RandomTree(rng, 3, 10);
    const int k = 1 + UniformInt(rng, 4);
    const double eps = UniformIn(rng, 0.05, 0.9);
    const Vec m = RandomMeasure(rng, t.num_leaves(), k + UniformIn(rng, 0.0, eps));
    const Vec y = SigmaRound(t, t.Lift(m), eps, k);
    EXPECT_EQ(y(0), k);
    for (int u = 0; u < t.size(); ++u) {
      double s = 0.0;
      for (int c : t.children(u)) s += y(c);
      if (!t.is_leaf(u)) EXPECT_LE(s, y(u) + 1e-12);
    }
  }
}

TEST(LeafConverterTest, LiftedLeafMeasureIsIdentity) {
  Rng rng = MakeRng(19);
  const HstTree t = HstTree::Uniform(3, 2, 2.0);
  Vec m = RandomMeasure(rng, 9, 2.0);
  LeafConverter conv(t, t.Lift(m));
  EXPECT_LT((conv.LeafMeasure() - m).lpNorm<Eigen::Infinity>(), 1e-12);
  const Vec m2 = RandomMeasure(rng, 9, 2.0);
  conv.Advance(t.Lift(m2));
  EXPECT_LT((conv.LeafMeasure() - m2).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_NEAR(conv.routed_cost(), t.W1(m, m2), 1e-12);
  EXPECT_LE(conv.leaf_cost(), conv.routed_cost() + 1e-12);
}

TEST(LeafConverterTest, RootParkedMassRoutesDownOnePath) {
  const HstTree t = HstTree::Uniform(2, 3, 2.0);
  Vec y0 = Vec::Zero(t.size());
  y0(0) = 1.0;
  LeafConverter conv(t, y0);
  const int l = t.leaves()[5];
  Vec y1 = Vec::Zero(t.size());
  for (int a = l; a != -1; a = t.parent(a)) y1(a) = 1.0;
  conv.Advance(y1);
  EXPECT_DOUBLE_EQ(conv.routed_cost(), 4 + 2 + 1);
  EXPECT_DOUBLE_EQ(conv.LeafMeasure()(5), 1.0);
}

TEST(LeafConverterTest, RejectsNonSupermeasure) {
  const HstTree t = HstTree::Uniform(2, 2, 2.0);
  Vec y = Vec::Zero(t.size());
  y(0) = 1.0;
  y(t.children(0)[0]) = 1.0;
  y(t.leaves()[0]) = 0.7;
  y(t.leaves()[1]) = 0.7;
  try {
    LeafConverter conv(t, y);
    FAIL() << "accepted a non-supermeasure";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(t.name(t.children(0)[0])), std::string::npos);
  }
}

TEST(LeafConverterTest, CostBoundedByRoutedMovementOnRandomPaths) {
  Rng rng = MakeRng(20);
  for (int trial = 0; trial < 50; ++trial) {
    const HstTree t = RandomTree(rng, 3, 10);
    const int k = 1 + UniformInt(rng, 3);
    const double eps = 0.3;
    auto random_super = [&]() {
      return SigmaRound(t, t.Lift(RandomMeasure(rng, t.num_leaves(), k + 0.1)), eps, k);
    };
    Vec y = random_super();
    LeafConverter conv(t, y);
    double routed = 0.0;
    for (int step = 0; step < 20; ++step) {
      const Vec yn = random_super();
      for (int v = 1; v < t.size(); ++v) routed += t.weight(v) * std::abs(yn(v) - y(v));
      conv.Advance(yn);
      y = yn;
      const Vec lm = conv.LeafMeasure();
      for (int l : t.leaves()) EXPECT_GE(lm(t.leaf_index(l)), y(l) - 1e-9);
      EXPECT_NEAR(lm.sum(), k, 1e-9);
    }
    EXPECT_NEAR(conv.routed_cost(), routed, 1e-9);
    EXPECT_LE(conv.leaf_cost(), conv.routed_cost() + 1e-9);
  }
}

TEST(PotentialTest, DepthValuesAreMonotoneWithZeroRoot) {
  const HstTree t = HstTree::Uniform(2, 3, 2.0);
  const AssignmentLayout layout(t, 3);
  const Vec x = layout.IntegralPoint({t.leaves()[0], t.leaves()[1], t.leaves()[6]});
  for (Variant var : {Variant::kCombinatorial, Variant::kCardinality, Variant::kWeighted}) {
    PotentialSpec spec{var, 0.0, 1.0 / 6, 3};
    const PotentialValues pv = EvaluatePotential(layout, spec, x);
    EXPECT_NEAR(pv.depth(0), 0.0, 1e-15);
    for (int v = 1; v < t.size(); ++v) {
      EXPECT_GE(pv.q(v), -1e-12) << VariantName(var);
    }
  }
  // Cardinality: the pair functional is at least log 2 everywhere.
  PotentialSpec card{Variant::kCardinality, 0.0, 1.0 / 6, 3};
  const PotentialValues pv = EvaluatePotential(layout, card, x);
  for (int u = 0; u < t.size(); ++u) {
    if (!t.is_leaf(u)) EXPECT_GE(PairMin(t, pv.q, u), std::log(2.0) - 1e-12);
  }
}

TEST(PotentialTest, MaxLinearMatchesEnumeration) {
  Rng rng = MakeRng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const HstTree t = RandomTree(rng, 2 + UniformInt(rng, 2), 7);
    const int n = t.num_leaves();
    const int k = 1 + UniformInt(rng, std::min(3, n));
    const AssignmentLayout layout(t, k);
    Vec c(layout.dim());
    for (int i = 0; i < c.size(); ++i) c(i) = UniformIn(rng, -1, 1);
    const int leaf = t.leaves()[UniformInt(rng, n)];
    double best = -1e300;
    for (int mask = 0; mask < (1 << n); ++mask) {
      if (__builtin_popcount(mask) != k || !(mask >> t.leaf_index(leaf) & 1)) continue;
      std::vector<int> leaves;
      for (int i = 0; i < n; ++i) {
        if (mask >> i & 1) leaves.push_back(t.leaves()[i]);
      }
      best = std::max(best, c.dot(layout.IntegralPoint(leaves)));
    }
    EXPECT_NEAR(MaxLinearOverConfigurations(layout, c, leaf), best, 1e-12);
  }
}

void PrintTo(Variant v, std::ostream* os) { *os << VariantName(v); }

class DepthInequalityTest : public ::testing::TestWithParam<Variant> {};

TEST_P(DepthInequalityTest, HoldAlongServedRequests) {
  const HstTree t = HstTree::Uniform(2, 3, 2.0);
  const int k = 2;
  const AssignmentLayout layout(t, k);
  PotentialSpec spec{GetParam(), 0.0, 0.25, k};
  Rng rng = MakeRng(22);
  Vec x = layout.IntegralPoint({t.leaves()[0], t.leaves()[5]});
  DepthReport all;
  for (int req = 0; req < 6; ++req) {
    const int l = t.leaves()[UniformInt(rng, 8)];
    const ServeResult r = ServeLeafRequest(layout, x, l, spec.delta);
    all.Merge(VerifyDepthInequalities(layout, r.trajectory, l, spec));
    x = r.x;
  }
  ASSERT_GT(all.depth.checked, 100);
  EXPECT_EQ(all.depth.violations, 0);
  EXPECT_EQ(all.corollary_charged.violations, 0);
  EXPECT_LE(all.bregman_excess, 1e-3);
  EXPECT_LE(all.closed_form_gap, 1e-9);
  EXPECT_LE(all.fd_gap, 1e-4);
  if (GetParam() == Variant::kWeighted) {
    EXPECT_EQ(all.log2k_charged.violations, 0);
    EXPECT_GT(all.log2k_charged.checked, 0);
  } else {
    EXPECT_EQ(all.depth2_charged.violations, 0);
    EXPECT_GT(all.depth2_charged.checked, 0);
  }
}

// With the comparator term added rather than subtracted the bound cannot
// hold: the movement side is positive while dD < 0 for every y.
TEST_P(DepthInequalityTest, DescentTermEntersWithNegativeSign) {
  const HstTree t = HstTree::Uniform(2, 2, 2.0);
  const AssignmentLayout layout(t, 2);
  PotentialSpec spec{GetParam(), 0.0, 0.25, 2};
  const Vec x = layout.IntegralPoint({t.leaves()[0], t.leaves()[1]});
  const ServeResult r = ServeLeafRequest(layout, x, t.leaves()[3], spec.delta);
  const DepthReport rep = VerifyDepthInequalities(layout, r.trajectory, t.leaves()[3], spec);
  EXPECT_GT(rep.corollary.violations, rep.corollary.checked / 2);
}

INSTANTIATE_TEST_SUITE_P(Variants, DepthInequalityTest,
                         ::testing::Values(Variant::kCombinatorial,
                                           Variant::kCardinality,
                                           Variant::kWeighted),
                         [](const auto& info) { return VariantName(info.param); });

TEST(RunKServerTest, SmallRunInvariants) {
  const HstTree t = HstTree::Uniform(2, 3, 2.0);
  Rng rng = MakeRng(23);
  std::vector<int> req;
  for (int i = 0; i < 15; ++i) req.push_back(t.leaves()[UniformInt(rng, 8)]);
  KServerOptions opt;
  opt.verify = VerifyLevel::kFast;
  const KServerRun run = RunKServer(t, 2, req, opt);
  EXPECT_LE(run.opt_cost, run.alg_cost + 1e-9);
  EXPECT_LE(run.alg_cost, run.routed_cost + 1e-9);
  EXPECT_LE(run.service_gap, 1e-9);
  EXPECT_LE(run.demand_shortfall, 1e-9);
  EXPECT_LE(run.dynamics.level_mass_drift, 1e-6);
  EXPECT_EQ(run.log.size(), req.size());
  // A request at a leaf that already holds a server is free.
  const KServerRun idle = RunKServer(t, 2, {t.leaves()[0], t.leaves()[1]}, opt);
  EXPECT_EQ(idle.alg_cost, 0.0);
  EXPECT_EQ(idle.opt_cost, 0.0);
}

TEST(RunKServerTest, RejectsBadParameters) {
  const HstTree t = HstTree::Uniform(2, 2, 2.0);
  KServerOptions opt;
  opt.potential.eps = 0.01;  // below delta k / (1 - delta)
  EXPECT_THROW(RunKServer(t, 2, {t.leaves()[3]}, opt), InvalidInput);
  opt.potential.eps = 0.0;
  EXPECT_THROW(RunKServer(t, 2, {t.children(0)[0]}, opt), InvalidInput);
}

}  // namespace
}  // namespace kslab::hst
