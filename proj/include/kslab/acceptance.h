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

// The end-to-end property suite, one numbered criterion per check.

#ifndef KSLAB_ACCEPTANCE_H_
#define KSLAB_ACCEPTANCE_H_

#include <string>
#include <vector>

namespace kslab::acceptance {

struct Options {
  int workers = 1;
};

struct Result {
  int id = 0;
  std::string title;
  bool pass = false;
  std::string summary;             // one line of measured numbers
  std::vector<std::string> notes;  // extra informational lines
  double seconds = 0.0;
};

std::vector<int> AllCriteria();
// Throws InvalidInput for an unknown id. Errors inside a criterion become a
// failed result.
Result RunCriterion(int id, const Options& options);

}  // namespace kslab::acceptance

#endif  // KSLAB_ACCEPTANCE_H_
