#include "memformer/harness/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace memformer {

AdamState make_adam_state(const ParameterList& params) {
    AdamState state;
    for (const auto& p : params) {
        state.m.emplace_back(p.tensor.size(), 0.0);
        state.v.emplace_back(p.tensor.size(), 0.0);
    }
    return state;
}

void adam_step(const ParameterList& params, AdamState& state, const AdamConfig& cfg) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw std::invalid_argument("optimizer state does not match the parameter list");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.m[i].size() != params[i].tensor.size()) {
            throw std::invalid_argument("optimizer state for " + params[i].name + " has the wrong size");
        }
        if (!params[i].tensor.has_grad()) {
            continue;
        }
        for (double g : params[i].tensor.grad()) {
            if (!std::isfinite(g)) {
                throw std::domain_error("non-finite gradient in " + params[i].name + "; optimizer step rejected");
            }
        }
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(cfg.beta1, t);
    const double correct2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i].tensor;
        const bool has_grad = p.has_grad();
        auto grad = has_grad ? p.grad() : std::span<const double>{};
        auto values = p.mutable_data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double g = has_grad ? grad[j] : 0.0;
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[j] / correct1;
            const double v_hat = v[j] / correct2;
            values[j] -= cfg.learning_rate * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * values[j]);
        }
    }
}

}  // namespace memformer
