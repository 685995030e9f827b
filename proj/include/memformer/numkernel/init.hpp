#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "memformer/numkernel/ops.hpp"

namespace memformer {

/// Trainable tensor with entries uniform in +/- sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

}  // namespace memformer
