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

#ifndef KSLAB_COMMON_H_
#define KSLAB_COMMON_H_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace kslab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: wrong dimensions, non-finite data, bad file contents.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A point or configuration lies outside the set it must belong to.
class Infeasible : public Error {
 public:
  Infeasible(const std::string& what, int worst_row, double violation)
      : Error(what), worst_row_(worst_row), violation_(violation) {}
  int worst_row() const { return worst_row_; }
  double violation() const { return violation_; }

 private:
  int worst_row_;
  double violation_;
};

// An iterative solver did not reach its residual target.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Instance exceeds a hard size cap (row counts, brute-force gates, ...).
class CapacityError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

// Independent stream for (seed, stream); identical arguments give identical
// draws on every platform.
Rng MakeRng(uint64_t seed, uint64_t stream = 0);

// Uniform in [0, 1) built from the top 53 bits, so results do not depend on
// the standard library's distribution implementations.
inline double Uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}
inline double UniformIn(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * Uniform01(rng);
}
// Uniform integer in [0, n).
int UniformInt(Rng& rng, int n);

// FNV-1a over raw bytes; used to tag outputs with the problem they came from.
uint64_t HashBytes(const void* data, size_t size, uint64_t h = 1469598103934665603ull);
uint64_t HashVec(const Vec& v, uint64_t h = 1469598103934665603ull);
std::string HexHash(uint64_t h);

}  // namespace kslab

#endif  // KSLAB_COMMON_H_
