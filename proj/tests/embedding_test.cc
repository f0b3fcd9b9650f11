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

#include "kslab/embedding.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "kslab/offline_opt.h"

namespace kslab::embed {
namespace {

constexpr double kTau = 4.0;

FiniteMetric UniformMetric(int n) {
  Mat d = Mat::Ones(n, n);
  d.diagonal().setZero();
  return FiniteMetric::FromMatrix(d);
}

std::vector<int> RandomRequests(Rng& rng, int n, int len) {
  std::vector<int> r(len);
  for (int& x : r) x = UniformInt(rng, n);
  return r;
}

TEST(FiniteMetricTest, ParsesTriangleFormatAndNormalizes) {
  std::istringstream in("# three points\n3\n2 4\n2\n");
  const FiniteMetric m = FiniteMetric::Parse(in);
  ASSERT_EQ(m.size(), 3);
  EXPECT_DOUBLE_EQ(m.scale(), 4.0);
  EXPECT_DOUBLE_EQ(m(0, 2), 1.0);
  EXPECT_DOUBLE_EQ(m(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(m.aspect_ratio(), 2.0);
  // 4^-1 = 0.25 < 0.5.
  EXPECT_EQ(m.Levels(kTau), 1);
}

TEST(FiniteMetricTest, ParsesCoordinates) {
  std::istringstream l1("l1 3 2\n0 0\n1 0\n1 3\n");
  const FiniteMetric a = FiniteMetric::Parse(l1);
  EXPECT_DOUBLE_EQ(a.scale(), 4.0);
  EXPECT_DOUBLE_EQ(a(0, 1), 0.25);
  std::istringstream l2("l2 2 2\n0 0\n3 4\n");
  EXPECT_DOUBLE_EQ(FiniteMetric::Parse(l2).scale(), 5.0);
}

TEST(FiniteMetricTest, RejectsBadInput) {
  std::istringstream dup("2\n0\n");
  EXPECT_THROW(FiniteMetric::Parse(dup), InvalidInput);
  std::istringstream tri("3\n1 5\n1\n");
  EXPECT_THROW(FiniteMetric::Parse(tri), InvalidInput);
  std::istringstream trunc("3\n1 1\n");
  EXPECT_THROW(FiniteMetric::Parse(trunc), InvalidInput);
}

TEST(FiniteMetricTest, LevelsIsSmallestScaleBelowMinDistance) {
  Rng rng = MakeRng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const FiniteMetric m = FiniteMetric::RandomEuclidean(8, 2, rng);
    const int levels = m.Levels(kTau);
    EXPECT_LT(std::pow(kTau, -levels), m.min_distance());
    EXPECT_GE(std::pow(kTau, 1 - levels), m.min_distance());
  }
}

TEST(RadiusTest, CdfEndpoints) {
  for (int k : {2, 3, 8}) {
    for (int j : {1, 2, 3}) {
      EXPECT_EQ(RadiusCdf(0.0, j, k, kTau), 0.0);
      // Just below the top the closed form is (k/(k-1))(1 - 1/k) = 1.
      const double top = std::pow(kTau, -j);
      EXPECT_NEAR(RadiusCdf(top * (1 - 1e-12), j, k, kTau), 1.0, 1e-9);
      EXPECT_EQ(RadiusCdf(top, j, k, kTau), 1.0);
    }
  }
  EXPECT_THROW(RadiusCdf(0.1, 1, 1, kTau), InvalidInput);
}

TEST(RadiusTest, EmpiricalMeanMatchesQuadrature) {
  for (int k : {2, 5}) {
    const int j = 2;
    const double top = std::pow(kTau, -j);
    const double rate = std::pow(kTau, j) * std::log(k);
    auto density = [&](double r) { return k * rate / (k - 1.0) * std::exp(-rate * r); };
    // Simpson quadrature of r f(r) and r^2 f(r).
    const int cells = 2000;
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i <= cells; ++i) {
      const double r = top * i / cells;
      const double c = (i == 0 || i == cells) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      m1 += c * r * density(r);
      m2 += c * r * r * density(r);
    }
    m1 *= top / (3.0 * cells);
    m2 *= top / (3.0 * cells);
    EXPECT_NEAR(RadiusMean(j, k, kTau), m1, 1e-12);

    Rng rng = MakeRng(11, k);
    const int samples = 100000;
    double sum = 0.0;
    for (int i = 0; i < samples; ++i) {
      const double r = SampleRadius(j, k, kTau, rng);
      ASSERT_GE(r, 0.0);
      ASSERT_LE(r, top);
      sum += r;
    }
    const double se = std::sqrt((m2 - m1 * m1) / samples);
    EXPECT_LE(std::abs(sum / samples - m1), 3.0 * se);
  }
}

Chain MakeChain(std::vector<std::vector<int>> sets) { return Chain{std::move(sets)}; }

TEST(ChainTest, DistanceExamples) {
  const Chain a = MakeChain({{0, 1, 2, 3}, {0, 1}, {0}});
  const Chain b = MakeChain({{0, 1, 2, 3}, {2, 3}, {2}});
  const Chain c = MakeChain({{0, 1, 2, 3}, {0, 1}, {1}});
  const Chain d = MakeChain({{0, 1, 2, 3}, {0, 1, 2}, {1, 2}, {1}});
  const Chain e = MakeChain({{0, 1, 2, 3}, {0, 1, 2}, {1, 2}, {2}});
  EXPECT_EQ(ChainDistance(a, a, kTau), 0.0);
  EXPECT_EQ(ChainDistance(a, b, kTau), 1.0);
  EXPECT_EQ(ChainDistance(a, c, kTau), 0.25);
  EXPECT_EQ(ChainDistance(d, e, kTau), 1.0 / 16);
  EXPECT_EQ(InvertChain(a, 2), 0);
  EXPECT_THROW(InvertChain(d, 2), InvalidInput);
  EXPECT_THROW(InvertChain(MakeChain({{0, 1}, {0, 1}}), 1), InvalidInput);
}

// Intersects partitions as explicit set families.
std::vector<int> ForcedCell(const TauStack& s, int j, int x) {
  std::set<std::set<int>> refined{{}};
  refined.clear();
  std::set<int> all;
  for (int y = 0; y < s.size(); ++y) all.insert(y);
  refined.insert(all);
  for (int level = 1; level <= j; ++level) {
    std::set<std::set<int>> blocks;
    for (int y = 0; y < s.size(); ++y) {
      std::set<int> b;
      for (int z = 0; z < s.size(); ++z) {
        if (s.SameBlock(level, y, z)) b.insert(z);
      }
      blocks.insert(b);
    }
    std::set<std::set<int>> next;
    for (const auto& a : refined) {
      for (const auto& b : blocks) {
        std::set<int> c;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                              std::inserter(c, c.begin()));
        if (!c.empty()) next.insert(c);
      }
    }
    refined = std::move(next);
  }
  for (const auto& c : refined) {
    if (c.count(x)) return {c.begin(), c.end()};
  }
  return {};
}

TEST(TauStackTest, EmbedMatchesExplicitRefinement) {
  // Level 1: {0,1,2} and {3,4}; level 2: {1,2,3}, others uncovered.
  const TauStack s(5, kTau, {{0, 0, 0, 0, 0}, {0, 0, 0, 1, 1}, {-1, 0, 0, 0, -1}});
  for (int x = 0; x < 5; ++x) {
    const Chain c = s.Embed(x);
    ASSERT_EQ(c.length(), 2);
    for (int j = 0; j <= 2; ++j) EXPECT_EQ(c.sets[j], ForcedCell(s, j, x)) << x << " " << j;
  }
  EXPECT_EQ(s.Embed(2).sets[2], (std::vector<int>{1, 2}));
  EXPECT_EQ(s.Embed(3).sets[2], (std::vector<int>{3}));
  EXPECT_THROW(TauStack(2, kTau, {{0, 1}}), InvalidInput);
}

TEST(EmbedderTest, FirstRequestInsertsEverywhereRepeatsNothing) {
  Rng rng = MakeRng(5);
  const FiniteMetric m = FiniteMetric::RandomEuclidean(10, 2, rng);
  DynamicEmbedder e(m, 3, kTau, MakeRng(6));
  e.Process(4);
  ASSERT_EQ(static_cast<int>(e.events().size()), e.levels());
  for (int j = 1; j <= e.levels(); ++j) {
    EXPECT_EQ(e.events()[j - 1].type, EmbedEvent::kInsert);
    EXPECT_EQ(e.events()[j - 1].level, j);
    EXPECT_EQ(e.centers(j), std::vector<int>{4});
  }
  for (int i = 0; i < 5; ++i) e.Process(4);
  EXPECT_EQ(static_cast<int>(e.events().size()), e.levels());
}

TEST(EmbedderTest, TwoKPlusOneSeparatedRequestsResetOnce) {
  for (int k : {2, 3}) {
    const FiniteMetric m = UniformMetric(2 * k + 1);
    ASSERT_EQ(m.Levels(kTau), 1);
    DynamicEmbedder e(m, k, kTau, MakeRng(7));
    for (int p = 0; p <= 2 * k; ++p) e.Process(p);
    EXPECT_EQ(e.resets(1), 1);
    EXPECT_EQ(e.centers(1), std::vector<int>{2 * k});
  }
}

TEST(EmbedderTest, StacksSatisfyLemmasAlongRandomRuns) {
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng = MakeRng(100 + seed);
    const FiniteMetric m = FiniteMetric::RandomEuclidean(12, 2, rng);
    const int k = 2 + seed % 3;
    DynamicEmbedder e(m, k, kTau, MakeRng(200 + seed));
    StackReport rep;
    for (int r : RandomRequests(rng, 12, 150)) {
      e.Process(r);
      rep.Merge(VerifyStack(e.Stack(), m));
      for (int j = 1; j <= e.levels(); ++j) {
        ASSERT_LE(static_cast<int>(e.centers(j).size()), 2 * k);
        for (double rad : e.radii(j)) {
          ASSERT_GE(rad, std::pow(kTau, -j - 1));
          ASSERT_LE(rad, 2 * std::pow(kTau, -j - 1));
        }
      }
    }
    EXPECT_TRUE(rep.ok()) << "seed " << seed << " diam " << rep.diameter_violations
                          << " contract " << rep.contraction_violations << " prestack "
                          << rep.prestack_violations;
    EXPECT_LE(rep.diameter_excess, 0.0);
  }
}

TEST(EmbedderTest, VerifierCatchesBadStacks) {
  const FiniteMetric m = UniformMetric(3);
  // One level-1 block of diameter 1 > 1/4.
  const TauStack bad(3, kTau, {{0, 0, 0}, {0, 0, -1}});
  const StackReport rep = VerifyStack(bad, m);
  EXPECT_EQ(rep.diameter_violations, 1);
  EXPECT_EQ(rep.incomplete_chains, 2);
  EXPECT_FALSE(rep.ok());
}

TEST(EmbedderTest, DeterministicUnderSeed) {
  Rng rng = MakeRng(9);
  const FiniteMetric m = FiniteMetric::RandomEuclidean(10, 3, rng);
  const std::vector<int> req = RandomRequests(rng, 10, 80);
  DynamicEmbedder a(m, 3, kTau, MakeRng(1, 2)), b(m, 3, kTau, MakeRng(1, 2));
  for (int r : req) {
    a.Process(r);
    b.Process(r);
  }
  ASSERT_EQ(a.events().size(), b.events().size());
  for (size_t i = 0; i < a.events().size(); ++i) {
    EXPECT_EQ(a.events()[i].point, b.events()[i].point);
    EXPECT_EQ(a.events()[i].radius, b.events()[i].radius);
  }
}

TEST(EmbedderTest, GreedyFallbackForOneServer) {
  Rng rng = MakeRng(12);
  const FiniteMetric m = FiniteMetric::RandomEuclidean(8, 2, rng);
  DynamicEmbedder e(m, 1, kTau, MakeRng(1));
  EXPECT_TRUE(e.greedy());
  for (int r : RandomRequests(rng, 8, 40)) {
    e.Process(r);
    EXPECT_TRUE(VerifyStack(e.Stack(), m).ok());
  }
  for (const auto& ev : e.events()) {
    if (ev.type == EmbedEvent::kInsert) EXPECT_EQ(ev.radius, std::pow(kTau, -ev.level - 1));
  }
}

TEST(SeparationTest, WithinBoundOnRandomTriples) {
  Rng rng = MakeRng(21);
  int checked = 0;
  while (checked < 3) {
    const FiniteMetric m = FiniteMetric::RandomEuclidean(10, 2, rng);
    const std::vector<int> prefix = RandomRequests(rng, 10, 20);
    const int j = 1 + UniformInt(rng, m.Levels(kTau));
    const int x = UniformInt(rng, 10), y = UniformInt(rng, 10);
    DynamicEmbedder probe(m, 3, kTau, MakeRng(0));
    for (int p : prefix) probe.Process(p);
    if (probe.CenterDistance(j, y) > std::pow(kTau, -j - 1)) {
      EXPECT_THROW(SeparationProbability(m, 3, kTau, prefix, j, x, y, 10, 1), InvalidInput);
      continue;
    }
    const SeparationEstimate est =
        SeparationProbability(m, 3, kTau, prefix, j, x, y, 2000, 77, 2);
    EXPECT_TRUE(est.ok()) << est.estimate << " vs " << est.bound;
    if (x == y) EXPECT_EQ(est.estimate, 0.0);
    ++checked;
  }
}

TEST(SeparationTest, ThreadCountDoesNotChangeEstimate) {
  Rng rng = MakeRng(22);
  const FiniteMetric m = FiniteMetric::RandomEuclidean(8, 2, rng);
  const std::vector<int> prefix{0, 1, 2, 3, 4, 5, 6, 7};
  const SeparationEstimate a = SeparationProbability(m, 2, kTau, prefix, 1, 0, 7, 500, 5, 1);
  const SeparationEstimate b = SeparationProbability(m, 2, kTau, prefix, 1, 0, 7, 500, 5, 3);
  EXPECT_EQ(a.estimate, b.estimate);
}

TEST(StretchTest, NonContractingAndWithinBound) {
  Rng rng = MakeRng(23);
  for (int run = 0; run < 3; ++run) {
    const FiniteMetric m = FiniteMetric::RandomEuclidean(9, 2, rng);
    const std::vector<int> req = RandomRequests(rng, 9, 40);
    const auto est = StretchMc(m, 3, kTau, req, 300, 40 + run, 2);
    ASSERT_EQ(est.size(), 8u);
    for (const StretchEstimate& e : est) {
      EXPECT_NE(e.x, req.back());
      // Every realization is non-contracting, so the mean is too.
      EXPECT_GE(e.mean, e.distance * (1 - 1e-12));
      EXPECT_TRUE(e.ok()) << e.mean << " vs " << e.bound;
    }
  }
}

TEST(StretchTest, MatchesDirectAverage) {
  Rng rng = MakeRng(24);
  const FiniteMetric m = FiniteMetric::RandomEuclidean(7, 2, rng);
  const std::vector<int> req = RandomRequests(rng, 7, 25);
  const int trials = 50;
  const auto est = StretchMc(m, 2, kTau, req, trials, 9, 1);
  const auto threaded = StretchMc(m, 2, kTau, req, trials, 9, 4);
  const int x = est[0].x;
  double total = 0.0;
  for (int i = 0; i < trials; ++i) {
    DynamicEmbedder e(m, 2, kTau, MakeRng(9, i));
    for (int p : req) e.Process(p);
    const TauStack stack = e.Stack();
    total += ChainDistance(stack.Embed(x), stack.Embed(req.back()), kTau);
  }
  EXPECT_NEAR(est[0].mean, total / trials, 1e-12);
  EXPECT_NEAR(threaded[0].mean, est[0].mean, 1e-12);
  EXPECT_THROW(StretchMc(m, 1, kTau, req, trials, 9), InvalidInput);
}

TEST(OptScheduleTest, FlowScheduleIsConservative) {
  Rng rng = MakeRng(30);
  const FiniteMetric m = FiniteMetric::RandomEuclidean(9, 2, rng);
  const std::vector<int> req = RandomRequests(rng, 9, 60);
  const std::vector<int> init = InitialServers(9, 3, req);
  const auto s = opt::KServerOpt(m.matrix(), 3, req, init);
  std::vector<int> prev = init;
  for (size_t t = 0; t < req.size(); ++t) {
    int changed = 0;
    for (int i = 0; i < 3; ++i) {
      if (s.configurations[t][i] != prev[i]) {
        ++changed;
        EXPECT_EQ(s.configurations[t][i], req[t]);
      }
    }
    EXPECT_LE(changed, 1);
    EXPECT_NE(std::find(s.configurations[t].begin(), s.configurations[t].end(), req[t]),
              s.configurations[t].end());
    prev = s.configurations[t];
  }
}

TEST(InitialServersTest, FirstDistinctThenPadding) {
  EXPECT_EQ(InitialServers(5, 3, {4, 4, 2}), (std::vector<int>{4, 2, 0}));
  EXPECT_EQ(InitialServers(5, 2, {3, 1, 0}), (std::vector<int>{3, 1}));
  EXPECT_THROW(InitialServers(2, 3, {}), InvalidInput);
}

TEST(MirrorTest, AccountingOnRandomRuns) {
  for (int seed = 0; seed < 5; ++seed) {
    Rng rng = MakeRng(40 + seed);
    const FiniteMetric m = FiniteMetric::RandomEuclidean(12, 2, rng);
    const int k = 3;
    const std::vector<int> req = RandomRequests(rng, 12, 120);
    MirrorOptions opts;
    opts.checkpoints = {30, 60, 90};
    const MirrorReport rep = MirroredOptCost(m, k, req, MakeRng(50 + seed), opts);
    EXPECT_EQ(rep.reset_violations, 0);
    EXPECT_NEAR(rep.embedded_cost, rep.stack_move_cost + rep.mirror_cost, 1e-12);
    // Attributing per operation can only overcount by the triangle inequality.
    EXPECT_GE(rep.reset_cost + rep.insertion_cost, rep.stack_move_cost - 1e-12);
    // Each level-j reset keeps the (j-1)-prefix, moving each image by <= tau^(1-j).
    double reset_cap = 0.0;
    for (int j = 1; j <= rep.levels; ++j) reset_cap += rep.resets[j] * k * std::pow(kTau, 1 - j);
    EXPECT_LE(rep.reset_cost, reset_cap + 1e-12);
    // d_tau does not contract, so mirrored moves cost at least the optimum.
    EXPECT_GE(rep.mirror_cost, rep.opt_cost - 1e-9);
    ASSERT_EQ(rep.checkpoint_t, (std::vector<int>{30, 60, 90, 120}));
    for (size_t i = 0; i < rep.checkpoint_t.size(); ++i) {
      const std::vector<int> pre(req.begin(), req.begin() + rep.checkpoint_t[i]);
      EXPECT_NEAR(rep.checkpoint_opt[i],
                  opt::KServerOpt(m.matrix(), k, pre, InitialServers(12, k, req)).cost, 1e-9);
      if (i) EXPECT_GE(rep.checkpoint_cost[i], rep.checkpoint_cost[i - 1]);
    }
    EXPECT_NEAR(rep.checkpoint_cost.back(), rep.embedded_cost, 1e-12);
  }
}

TEST(MirrorTest, NoCostOnRequestsAtServers) {
  const FiniteMetric m = UniformMetric(4);
  const MirrorReport rep = MirroredOptCost(m, 2, {0, 1, 0, 1, 1, 0}, MakeRng(1));
  EXPECT_EQ(rep.opt_cost, 0.0);
  EXPECT_EQ(rep.mirror_cost, 0.0);
}

TEST(PipelineTest, ServesEveryRequest) {
  Rng rng = MakeRng(60);
  const FiniteMetric m = FiniteMetric::RandomEuclidean(8, 2, rng);
  const std::vector<int> req = RandomRequests(rng, 8, 25);
  PipelineOptions opts;
  opts.kserver.verify = hst::VerifyLevel::kFast;
  const PipelineReport rep = RunPipeline(m, 2, req, MakeRng(61), opts);
  EXPECT_FALSE(rep.partial) << rep.reason;
  EXPECT_EQ(rep.served, 25);
  EXPECT_EQ(rep.inverse_failures, 0);
  EXPECT_LE(rep.service_gap, 1e-6);
  EXPECT_LE(rep.hst.dynamics.level_mass_drift, 1e-6);
  EXPECT_GT(rep.opt_cost, 0.0);
  // Leaves with lca at depth L lie in one cell of diameter <= tau^-L, and
  // their tree distance is at least 2 tau^-L-1.
  EXPECT_LE(rep.alg_cost, rep.tree_cost * kTau / 2 + 1e-9);
}

TEST(PipelineTest, LeafCapYieldsPartialReport) {
  Rng rng = MakeRng(62);
  const FiniteMetric m = FiniteMetric::RandomEuclidean(8, 2, rng);
  const std::vector<int> req = RandomRequests(rng, 8, 40);
  PipelineOptions opts;
  opts.max_leaves = 3;
  const PipelineReport rep = RunPipeline(m, 2, req, MakeRng(63), opts);
  EXPECT_TRUE(rep.partial);
  EXPECT_LT(rep.served, 40);
  EXPECT_LE(rep.leaves, 3);
}

}  // namespace
}  // namespace kslab::embed
