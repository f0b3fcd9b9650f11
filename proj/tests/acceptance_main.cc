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

// Prints one PASS/FAIL line per acceptance criterion. Usage:
//   kslab_acceptance [--workers N] [criterion ids...]

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "kslab/acceptance.h"

int main(int argc, char** argv) {
  kslab::acceptance::Options options;
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--workers" && i + 1 < argc) {
      options.workers = std::atoi(argv[++i]);
    } else {
      ids.push_back(std::atoi(arg.c_str()));
    }
  }
  if (ids.empty()) ids = kslab::acceptance::AllCriteria();
  int failed = 0;
  for (int id : ids) {
    const kslab::acceptance::Result r = kslab::acceptance::RunCriterion(id, options);
    std::printf("criterion %d %s %s: %s [%.1f s]\n", r.id, r.pass ? "PASS" : "FAIL",
                r.title.c_str(), r.summary.c_str(), r.seconds);
    for (const std::string& note : r.notes) std::printf("    %s\n", note.c_str());
    std::fflush(stdout);
    if (!r.pass) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(ids.size()) - failed, ids.size());
  return failed == 0 ? 0 : 1;
}
