#pragma once

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

namespace sstlf {

/// Runs body(y) for y in [begin, end). Iterations must be independent; the
/// result never depends on scheduling.
template <typename Body>
void parallel_rows(int begin, int end, Body&& body) {
  tbb::parallel_for(tbb::blocked_range<int>(begin, end), [&](const tbb::blocked_range<int>& r) {
    for (int y = r.begin(); y != r.end(); ++y) body(y);
  });
}

}  // namespace sstlf
