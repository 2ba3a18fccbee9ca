#include "lbridge/adamw.hpp"

#include <cmath>

#include "lbridge/errors.hpp"

namespace lbridge {

void adamw_step(ParamMap& params, const GradMap& grads, AdamWState& state,
                const AdamWConfig& config) {
    // Validate everything first so a bad gradient leaves params and state
    // untouched.
    for (auto& [name, p] : params) {
        const auto it = grads.find(name);
        if (it == grads.end()) {
            throw ShapeError("adamw_step: missing gradient for parameter '" + name + "'");
        }
        if (it->second.size() != p.data.size()) {
            throw ShapeError("adamw_step: gradient size " + std::to_string(it->second.size()) +
                             " for parameter '" + name + "' of size " +
                             std::to_string(p.data.size()));
        }
        for (const float g : it->second) {
            if (!std::isfinite(g)) {
                throw NumericError("adamw_step: non-finite gradient for parameter '" + name +
                                   "'");
            }
        }
        auto ms = state.m.find(name);
        if (ms != state.m.end() && ms->second.size() != p.data.size()) {
            throw ShapeError("adamw_step: stale moment buffer for parameter '" + name + "'");
        }
    }

    const int64_t t = state.step + 1;
    const double b1 = config.beta1, b2 = config.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
    const double lr = config.lr, eps = config.eps, wd = config.weight_decay;

    for (auto& [name, p] : params) {
        const std::vector<float>& g = grads.at(name);
        std::vector<float>& m = state.m[name];
        std::vector<float>& v = state.v[name];
        if (m.empty()) m.assign(p.data.size(), 0.0f);
        if (v.empty()) v.assign(p.data.size(), 0.0f);
        for (size_t i = 0; i < p.data.size(); ++i) {
            const double gi = g[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            const double w = p.data[i];
            p.data[i] = static_cast<float>(w - lr * (mhat / (std::sqrt(vhat) + eps)) - lr * wd * w);
        }
    }
    state.step = t;
}

}  // namespace lbridge
