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

#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace orchard {

// Thread budget for the OpenMP regions. ORCHARD_SEG_THREADS caps it;
// 0 or unset means "whatever the runtime offers".
int max_threads();

// Applies the ORCHARD_SEG_THREADS cap to the OpenMP runtime. Called lazily
// by max_threads(); safe to call repeatedly.
void init_threads();

inline int current_thread() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

}  // namespace orchard
