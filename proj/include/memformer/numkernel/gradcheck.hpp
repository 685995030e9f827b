#pragma once

#include <functional>
#include <span>

#include "memformer/numkernel/tensor.hpp"

namespace memformer {

/// Central-difference gradient of a scalar function with respect to `x`.
///
/// Each coordinate of `x` is perturbed in place by +/-step, `f` is evaluated,
/// and the original value restored, so `f` may read `x` through any handle
/// (for example a model parameter). Throws std::domain_error if any
/// evaluation is non-finite.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, Tensor x, double step);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor); the floor keeps entries that
/// are both near zero from dominating.
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6);

}  // namespace memformer
