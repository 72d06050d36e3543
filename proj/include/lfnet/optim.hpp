#pragma once

#include <cmath>
#include <concepts>
#include <span>
#include <vector>

#include "lfnet/autograd.hpp"
#include "lfnet/model.hpp"

namespace lfnet {

/// First/second moments for every learnable parameter plus the shared step
/// counter. Slot order mirrors for_each_parameter.
template <std::floating_point T>
struct AdamStateT {
    struct Slot {
        ParamId id;
        std::vector<T> m;
        std::vector<T> v;
    };
    std::vector<Slot> slots;
    std::int64_t t = 0;
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T epsilon = T(1e-8);

    template <std::floating_point U>
    static AdamStateT for_model(const NetworkModelT<U>& model) {
        AdamStateT state;
        for_each_parameter(model, [&](ParamId id, std::span<const U> values) {
            Slot slot;
            slot.id = id;
            slot.m.assign(values.size(), T(0));
            slot.v.assign(values.size(), T(0));
            state.slots.push_back(std::move(slot));
        });
        return state;
    }
};

using AdamState = AdamStateT<float>;

/// One Adam update over a flat parameter group with bias correction:
/// m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2,
/// p <- p - lr * m_hat / (sqrt(v_hat) + eps).
template <std::floating_point T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m,
                 std::span<T> v, std::int64_t t, T lr, T beta1, T beta2, T epsilon) {
    const T corr1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1), static_cast<double>(t)));
    const T corr2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2), static_cast<double>(t)));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const T g = grads[i];
        m[i] = beta1 * m[i] + (T(1) - beta1) * g;
        v[i] = beta2 * v[i] + (T(1) - beta2) * g * g;
        const T m_hat = m[i] / corr1;
        const T v_hat = v[i] / corr2;
        params[i] -= lr * m_hat / (static_cast<T>(std::sqrt(static_cast<double>(v_hat))) + epsilon);
    }
}

/// Applies one Adam step to every parameter of the model. Moments advance
/// even at lr = 0 (the step counter and statistics progress, parameters stay
/// frozen up to the lr factor).
template <std::floating_point T>
void adam_step(NetworkModelT<T>& model, const GradientSetT<T>& grads, AdamStateT<T>& state,
               T lr) {
    ++state.t;
    std::size_t slot_index = 0;
    for_each_parameter(model, [&](ParamId id, std::span<T> values) {
        if (slot_index >= state.slots.size()) {
            throw GraphError("adam: state has fewer slots than the model has parameters");
        }
        auto& slot = state.slots[slot_index++];
        if (!(slot.id == id) || slot.m.size() != values.size()) {
            throw GraphError("adam: state slot " + slot.id.str() + " does not match " + id.str());
        }
        adam_update<T>(values, grads.lookup(id), slot.m, slot.v, state.t, lr, state.beta1,
                       state.beta2, state.epsilon);
    });
    if (slot_index != state.slots.size()) {
        throw GraphError("adam: state has more slots than the model has parameters");
    }
}

/// Geometric interpolation from lr_start to lr_end across the epoch range,
/// with exact endpoints. A single-epoch schedule returns lr_start.
inline double lr_at_epoch(double lr_start, double lr_end, int epochs, int epoch) {
    if (epoch < 0 || epoch >= epochs) {
        throw ConfigError("lr_at_epoch: epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(epochs) + ")");
    }
    if (epochs == 1 || epoch == 0) return lr_start;
    if (epoch == epochs - 1) return lr_end;
    const double exponent = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return lr_start * std::pow(lr_end / lr_start, exponent);
}

} // namespace lfnet
