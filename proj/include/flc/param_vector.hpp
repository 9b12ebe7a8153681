#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace flc {

/// Flat model coordinates. Every vector exchanged between server and clients
/// (global model, local primal, dual, gradient, noise) has this type and the
/// same length m.
using ParamVector = std::vector<double>;

double l2_norm(std::span<const double> v);
double linf_distance(std::span<const double> a, std::span<const double> b);

/// Throws ShapeError naming `what` when sizes differ.
void require_same_size(std::span<const double> a, std::span<const double> b, std::string_view what);

/// Throws NumericError naming `what` when any entry is NaN or infinite.
void require_finite(std::span<const double> v, std::string_view what);

}  // namespace flc
