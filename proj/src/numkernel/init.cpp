#include "memformer/numkernel/init.hpp"

#include <cmath>

namespace memformer {

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) {
        v = dist(rng);
    }
    return Tensor::from(std::move(shape), std::move(values), true);
}

}  // namespace memformer
