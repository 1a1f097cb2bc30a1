// Copyright 2026 The OrchardSeg Authors.
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

#include "orchard/parallel.hpp"

#include <cstdlib>
#include <mutex>

namespace orchard {

namespace {

int resolve_threads() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
  if (const char* env = std::getenv("ORCHARD_SEG_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0 && cap < n) n = cap;
  }
  omp_set_num_threads(n);
  return n;
#else
  return 1;
#endif
}

std::once_flag g_once;
int g_threads = 1;

}  // namespace

void init_threads() {
  std::call_once(g_once, [] { g_threads = resolve_threads(); });
}

int max_threads() {
  init_threads();
  return g_threads;
}

}  // namespace orchard
