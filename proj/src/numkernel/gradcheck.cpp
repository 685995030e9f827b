#include "memformer/numkernel/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace memformer {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, Tensor x, double step) {
    if (!(step > 0.0)) {
        throw std::invalid_argument("finite_diff_grad: step must be positive");
    }
    std::vector<double> grad(x.size());
    auto values = x.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double original = values[i];
        values[i] = original + step;
        const double up = f(x);
        values[i] = original - step;
        const double down = f(x);
        values[i] = original;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw std::domain_error("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * step);
    }
    return Tensor::from(x.shape(), std::move(grad));
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("max_relative_error: length mismatch");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace memformer
