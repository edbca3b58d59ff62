#pragma once

#include <vector>

namespace t2g {

// Nearest-rank empirical quantile: sort ascending and return the element at
// 1-based index ceil(q * K) (index 1 when q = 0). Always a member of the input.
double quantile(std::vector<double> values, double q);

// Population moments (1/n variance).
double mean_of(const std::vector<double>& values);
double population_variance(const std::vector<double>& values);

}  // namespace t2g
