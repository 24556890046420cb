#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace gravglue {

// Worker cap shared by all parallel loops. Settable from the CLI (--threads /
// GRAVGLUE_THREADS); defaults to hardware concurrency.
int max_threads();
void set_max_threads(int n);

// Runs f(i) for i in [0, n). Work is handed out in fixed-size blocks; callers
// must only write to disjoint outputs per index.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& f);

// Block variant: f(begin, end) over disjoint ranges, cheaper for tight loops.
void parallel_for_blocks(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& f);

// Deterministic sum of term(i) for i in [0, n): fixed 4096-element chunks are
// summed left-to-right, then the chunk partials are combined pairwise in index
// order. The result is bitwise independent of the thread count.
double parallel_sum(std::int64_t n, const std::function<double(std::int64_t)>& term);

// Deterministic pairwise reduction of a prepared vector (serial).
double pairwise_sum(const std::vector<double>& v);

}  // namespace gravglue
