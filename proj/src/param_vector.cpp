#include "flc/param_vector.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flc/errors.hpp"

namespace flc {

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double linf_distance(std::span<const double> a, std::span<const double> b) {
  require_same_size(a, b, "linf_distance");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

void require_same_size(std::span<const double> a, std::span<const double> b, std::string_view what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": dimension mismatch (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
}

void require_finite(std::span<const double> v, std::string_view what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError(std::string(what) + ": non-finite value at coordinate " + std::to_string(i));
    }
  }
}

}  // namespace flc
