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

// Fractional k-server on tau-adic HSTs. The state is a point of the
// assignment polytope A over coordinates x_{u,i}, u a non-root vertex and
// i < N_u (leaves below u); 1 - x_{u,i} is the i-th unit of server mass in
// the subtree of u, sorted so that x_{u,.} is nondecreasing. A request at
// leaf l runs the entropic mirror flow with drive -e_{l,0} until x_{l,0}
// reaches the floor delta.

#ifndef KSLAB_HST_H_
#define KSLAB_HST_H_

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "kslab/common.h"
#include "kslab/geometry.h"
#include "kslab/mirror_flow.h"

namespace kslab::hst {

class HstTree {
 public:
  struct Edge {
    std::string parent;
    std::string child;
    double weight;
  };

  // Vertex 0 is the root; children keep their input order, and leaves are
  // numbered in depth-first order. Throws InvalidInput on structural errors
  // and, when validate is set, on non-tau-adic weights or unequal leaf depth.
  static HstTree FromEdges(const std::string& root, const std::vector<Edge>& edges,
                           double tau, bool validate = true);
  // Complete tree; vertices at depth d weigh tau^(height - d).
  static HstTree Uniform(int branching, int height, double tau);
  // Lines "root <id>", "tau <value>", "edge <parent> <child> <weight>";
  // '#' starts a comment. normalize pads short leaves (see Normalized()).
  static HstTree Parse(std::istream& in, bool normalize = false);

  // Leaves above the maximum depth get unary chains with weights dropping by
  // tau per level, so every leaf ends at the same depth.
  HstTree Normalized() const;

  int size() const { return static_cast<int>(parent_.size()); }
  int root() const { return 0; }
  int parent(int v) const { return parent_[v]; }
  const std::vector<int>& children(int v) const { return children_[v]; }
  double weight(int v) const { return weight_[v]; }
  int depth(int v) const { return depth_[v]; }
  int leaf_count(int v) const { return leaf_count_[v]; }
  bool is_leaf(int v) const { return children_[v].empty(); }
  const std::vector<int>& leaves() const { return leaves_; }
  int num_leaves() const { return static_cast<int>(leaves_.size()); }
  int leaf_index(int v) const { return leaf_index_[v]; }
  int height() const { return height_; }
  double tau() const { return tau_; }
  const std::string& name(int v) const { return name_[v]; }
  int Find(const std::string& name) const;  // -1 if absent
  // Vertices in depth-first preorder (parents before children).
  const std::vector<int>& preorder() const { return preorder_; }

  // Sum of subtree leaf masses; lifted[root] is the total mass.
  Vec Lift(const Vec& leaf_measure) const;
  // Path weight between two vertices.
  double Distance(int a, int b) const;
  Mat LeafMetric() const;
  // |lift(y) - lift(z)|_{l1(w)}; throws InvalidInput on unequal mass.
  double W1(const Vec& y, const Vec& z) const;

 private:
  void Finish(bool validate);

  std::vector<int> parent_;
  std::vector<std::vector<int>> children_;
  std::vector<double> weight_;
  std::vector<int> depth_;
  std::vector<int> leaf_count_;
  std::vector<int> leaves_;
  std::vector<int> leaf_index_;
  std::vector<int> preorder_;
  std::vector<std::string> name_;
  std::map<std::string, int> by_name_;
  double tau_ = 2.0;
  int height_ = 0;
};

// Coordinate layout and constraint rows of A for a fixed tree and k.
//
// Rows: for each internal vertex u and each per-child prefix composition
// (a_c <= N_c, m = sum a_c >= 1),
//   sum_{i<m} x_{u,i} - sum_c sum_{j<a_c} x_{c,j} <= 0,
// with the root's fixed coordinates 1{i >= k} moved to the right-hand side;
// plus x_{u,i} - x_{u,i+1} <= 0. Under sortedness the compositions dominate
// every subset constraint.
class AssignmentLayout {
 public:
  struct RowInfo {
    int vertex;                    // u
    std::vector<int> composition;  // a_c per child; empty for sortedness rows
  };

  // Throws CapacityError past max_rows.
  AssignmentLayout(const HstTree& tree, int k, long max_rows = 100000);

  const HstTree& tree() const { return *tree_; }
  int k() const { return k_; }
  int dim() const { return dim_; }
  int offset(int v) const { return offset_[v]; }  // -1 for the root
  int index(int v, int i) const { return offset_[v] + i; }
  double RootCoordinate(int i) const { return i >= k_ ? 1.0 : 0.0; }
  const geometry::Polyhedron& polytope() const { return *polytope_; }
  const std::vector<RowInfo>& row_info() const { return row_info_; }
  // Per-coordinate vertex weights (the entropy weights).
  const Vec& coordinate_weights() const { return coord_weight_; }
  int coordinate_vertex(int j) const { return coord_vertex_[j]; }

  // x_{u,i} = 1{i >= servers below u}; leaves holds k distinct leaf ids
  // (vertex ids). Throws InvalidInput otherwise.
  Vec IntegralPoint(const std::vector<int>& leaves) const;
  // Same from per-vertex server counts.
  Vec IntegralPointFromCounts(const std::vector<int>& counts) const;
  // z_u = sum_i (1 - x_{u,i}) / (1 - delta), root z = k / (1 - delta).
  Vec ServerMeasure(const Vec& x, double delta) const;

 private:
  const HstTree* tree_;
  int k_;
  int dim_ = 0;
  std::vector<int> offset_;
  Vec coord_weight_;
  std::vector<int> coord_vertex_;
  std::vector<RowInfo> row_info_;
  std::unique_ptr<geometry::Polyhedron> polytope_;
};

// sum_u w_u sum_i (x_{u,i} + delta) log(x_{u,i} + delta).
flow::MirrorMap MultiscaleEntropy(const AssignmentLayout& layout, double delta);

struct ServeResult {
  Vec x;
  flow::Trajectory trajectory;
};

// Identity (single-sample trajectory) when x_{l,0} <= delta. Throws Error
// if the integrator aborts or the floor is not reached by the horizon.
ServeResult ServeLeafRequest(const AssignmentLayout& layout, const Vec& x,
                             int leaf, double delta,
                             const flow::StepPolicy& policy = {},
                             double horizon = 1e6);

// Samples x in A as random convex combinations of integral points and
// returns max |1 + log(x + delta)|.
double EntropyGradientBound(const AssignmentLayout& layout, double delta,
                            int samples, Rng& rng);

struct DynamicsReport {
  double sortedness_slack = 0.0;   // max x_{u,i} - x_{u,i+1}
  double level_mass_drift = 0.0;   // max over levels and samples
  double sign_violation = 0.0;     // dz against the flow-to-l pattern
  double leaf_decrease = 0.0;      // max -dx_{l',i}/dt over l' != l
  double upper_excess = 0.0;       // max x - 1
  double floor_violation = 0.0;    // max delta - x_{l',0} at the end
  int union_checks = 0;
  int union_failures = 0;
  int samples = 0;

  void Merge(const DynamicsReport& o);
};

// `tol` is the tightness threshold of the union-closure spot check.
DynamicsReport VerifyDynamics(const AssignmentLayout& layout,
                              const flow::Trajectory& traj, int leaf,
                              double delta, double tol = 1e-9);

// Internal supermeasure sigma(z); root snapped to k after checking it is
// within 1e-9. Throws Error if the result is not a supermeasure within tol.
Vec SigmaRound(const HstTree& tree, const Vec& z, double eps, int k,
               double tol = 1e-9);

// Converts a path of internal supermeasures into leaf measures. Mass
// y_u - sum_c y_c is parked at u but physically stays at the leaf it last
// occupied; it only moves when the virtual flow carries it into a leaf.
class LeafConverter {
 public:
  // y0 must be a supermeasure; parked mass starts at the first leaf below
  // its vertex.
  LeafConverter(const HstTree& tree, const Vec& y0);

  // Follows the tree-optimal flow from the previous y to y. Throws Error
  // naming the vertex if y is not a supermeasure within tol.
  void Advance(const Vec& y, double tol = 1e-9);

  Vec LeafMeasure() const;  // indexed by leaf index
  double leaf_cost() const { return leaf_cost_; }
  double routed_cost() const { return routed_cost_; }

  // Called for every physical move (leaf vertex ids, mass).
  using MoveObserver = std::function<void(int from, int to, double mass)>;
  void set_move_observer(MoveObserver f) { observer_ = std::move(f); }

  // Switches to a supertree; old_to_new maps every old vertex id.
  // New vertices start with no mass.
  void Remap(const HstTree& tree, const std::vector<int>& old_to_new);

 private:
  using Pool = std::map<int, double>;  // anchor leaf vertex -> mass
  void Transfer(int from, int to, double amount, double edge_weight);

  const HstTree* tree_;
  Vec y_;
  std::vector<Pool> pools_;
  double leaf_cost_ = 0.0;
  double routed_cost_ = 0.0;
  MoveObserver observer_;
};

enum class Variant { kCombinatorial, kCardinality, kWeighted };
Variant ParseVariant(const std::string& s);
std::string VariantName(Variant v);

struct PotentialSpec {
  Variant variant = Variant::kWeighted;
  double eps = 0.0;  // <= 0 selects delta k / (1 - delta)
  double delta = 0.0;
  int k = 1;
  double resolved_eps() const {
    return eps > 0 ? eps : delta * k / (1.0 - delta);
  }
};

struct PotentialValues {
  Vec depth;  // Delta_u
  Vec q;      // Delta_u - Delta_p(u); 0 at the root
  double psi = 0.0;
};

PotentialValues EvaluatePotential(const AssignmentLayout& layout,
                                  const PotentialSpec& spec, const Vec& x);

// d Psi / dt along velocity v: eq. form sum_u w_u (Delta_u + Delta_p) sum_i
// v_{u,i} (closed form) and the raw chain rule through z.
double PsiRateClosedForm(const AssignmentLayout& layout,
                         const PotentialSpec& spec, const Vec& x, const Vec& v);
double PsiRateChainRule(const AssignmentLayout& layout,
                        const PotentialSpec& spec, const Vec& x, const Vec& v);

// min over pairs of distinct children of f(v) + f(v'); 0 with one child.
double PairMin(const HstTree& tree, const Vec& f, int u);

// max over integral y in A with a server at `leaf` of
// <c, y>, c indexed like x. Tree knapsack over server counts.
double MaxLinearOverConfigurations(const AssignmentLayout& layout, const Vec& c,
                                   int leaf);

struct InequalityStats {
  int checked = 0;
  int violations = 0;         // slack > tol * scale
  double worst_relative = -1e300;  // max slack / scale
  void Add(double lhs, double rhs, double scale, double tol);
  void Merge(const InequalityStats& o);
  double pass_fraction() const {
    return checked ? 1.0 - static_cast<double>(violations) / checked : 1.0;
  }
};

// The corollary-type forms are checked twice. "stated" adds 6 D_l dD with
// the comparator y minimizing dD; "charged" subtracts it with y maximizing
// dD, which is what the depth inequality and the Bregman descent bound
// dD <= -x_l combine to.
struct DepthReport {
  InequalityStats depth;      // |dx|_{qw} <= 3 D_l (x_l + delta) + dPsi
  InequalityStats corollary;  // (1-delta)|dz|_{qw} <= dPsi + 6 D_l dD
  InequalityStats depth2;     // c(1-delta)/4 |dz|_w <= dPsi + 6 D_l dD
  InequalityStats log2k;      // weighted variant, sigma-rounded movement
  InequalityStats corollary_charged;
  InequalityStats depth2_charged;
  InequalityStats log2k_charged;
  double bregman_excess = -1e300;  // max FD slope of D + x_l (worst y)
  int bregman_violations = 0;      // excess > 1e-3
  double closed_form_gap = 0.0;    // |closed form - chain rule| / scale
  double fd_gap = 0.0;             // |FD of Psi - closed form| / scale
  double min_qhat = 1e300;         // over internal vertices and samples

  void Merge(const DepthReport& o);
};

// Finite-difference check of the depth-potential inequalities along a
// served request, with the worst-case comparator y (server at `leaf`).
DepthReport VerifyDepthInequalities(const AssignmentLayout& layout,
                                    const flow::Trajectory& traj, int leaf,
                                    const PotentialSpec& spec,
                                    double tol = 1e-2);

enum class VerifyLevel { kNone, kFast, kFull };
VerifyLevel ParseVerifyLevel(const std::string& s);

struct KServerOptions {
  PotentialSpec potential;  // variant and eps; delta <= 0 selects 1/(2k)
  VerifyLevel verify = VerifyLevel::kNone;
  flow::StepPolicy policy;
  std::vector<int> initial_leaves;  // vertex ids; default first k leaves
  bool compute_opt = true;
};

struct RequestLog {
  int leaf;
  int steps;
  double duration;
  double frac_cost;  // |dz|_{l1(w)} over the request
  double leaf_cost;  // converter cost increment
};

struct KServerRun {
  double alg_cost = 0.0;     // sigma-rounded, leaf-converted
  double routed_cost = 0.0;  // integral of |d sigma(z)|_{l1(w)}
  double frac_cost = 0.0;    // integral of |dz|_{l1(w)}
  double opt_cost = 0.0;
  double ratio = 0.0;
  double delta = 0.0;
  double eps = 0.0;
  DynamicsReport dynamics;   // worst over requests
  DepthReport depth;         // merged over requests
  double demand_shortfall = 0.0;  // max y_l - L_l over samples
  double service_gap = 0.0;       // max 1 - L_l at request completion
  std::vector<RequestLog> log;
};

// One fractional k-server run on a (possibly growing) tree: mirror flow,
// sigma rounding and leaf conversion, with optional verification.
class FractionalServer {
 public:
  // initial_leaves: k distinct leaf vertex ids; empty selects the first k.
  FractionalServer(HstTree tree, int k, const KServerOptions& options);

  RequestLog Serve(int leaf);

  // Replaces the tree by a supertree in which every old vertex keeps its
  // name, parent and weight. New coordinates are 1 (no server mass).
  // Throws CapacityError if the new polytope exceeds the row cap.
  void Grow(HstTree bigger, long max_rows = 100000);

  const HstTree& tree() const { return *tree_; }
  const AssignmentLayout& layout() const { return *layout_; }
  const Vec& x() const { return x_; }
  LeafConverter& converter() { return *conv_; }
  double delta() const { return spec_.delta; }
  double eps() const { return spec_.resolved_eps(); }

  // Costs and verification results so far.
  const KServerRun& summary() const { return run_; }

 private:
  std::unique_ptr<HstTree> tree_;
  std::unique_ptr<AssignmentLayout> layout_;
  std::unique_ptr<LeafConverter> conv_;
  KServerOptions options_;
  PotentialSpec spec_;
  int k_;
  Vec x_;
  Vec z_;
  KServerRun run_;
};

// requests are leaf vertex ids.
KServerRun RunKServer(const HstTree& tree, int k, const std::vector<int>& requests,
                      const KServerOptions& options);

}  // namespace kslab::hst

#endif  // KSLAB_HST_H_
