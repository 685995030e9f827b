#pragma once

#include <cstddef>
#include <vector>

#include "memformer/numkernel/init.hpp"

namespace memformer {

struct AdamConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment estimates, one pair per parameter.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t step = 0;
};

/// Zeroed state matching `params`.
AdamState make_adam_state(const ParameterList& params);

/// One Adam step with bias correction and decoupled weight decay:
///   p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
/// Parameters without a gradient are treated as having a zero gradient.
/// Every gradient is checked first; a non-finite entry rejects the whole step
/// with std::domain_error naming the parameter, leaving params and state
/// untouched.
void adam_step(const ParameterList& params, AdamState& state, const AdamConfig& cfg);

}  // namespace memformer
