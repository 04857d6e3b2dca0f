#pragma once

#include <cstddef>
#include <functional>

namespace convfeat {

// Worker count used by parallel_for. 0 picks hardware concurrency.
// Results never depend on this value: callers either write disjoint slots
// keyed by index, or reduce fixed-size chunks in index order.
void set_jobs(int jobs);
int jobs();

// Runs fn(i) for i in [0, n). Exceptions from fn are rethrown on the
// calling thread (first one wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace convfeat
