#include "t2g/stats.hpp"

#include <algorithm>
#include <cmath>

#include "t2g/errors.hpp"

namespace t2g {

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("quantile: empty input");
  if (q < 0.0 || q > 1.0) throw ValidationError("quantile: q outside [0, 1]");
  std::sort(values.begin(), values.end());
  const auto k = static_cast<long long>(values.size());
  // The relative backoff keeps ranks like (1 - 3/9) * 9 from creeping one
  // float ulp past the exact integer and landing a bucket too high.
  const double scaled = q * static_cast<double>(k) * (1.0 - 1e-12);
  long long rank = static_cast<long long>(std::ceil(scaled));
  if (rank < 1) rank = 1;
  if (rank > k) rank = k;
  return values[static_cast<std::size_t>(rank - 1)];
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double population_variance(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double m = mean_of(values);
  double s = 0.0;
  for (double v : values) s += (v - m) * (v - m);
  return s / static_cast<double>(values.size());
}

}  // namespace t2g
