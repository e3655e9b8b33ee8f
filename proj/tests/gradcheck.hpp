#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tttlab/nn.hpp"

namespace tttlab::testing {

// Central finite differences against reverse-mode gradients, sweeping every
// coordinate of every parameter. The loss builder must be a pure function of
// the ParamSet. Returns (relative l2 error, worst per-coordinate relative
// error with an absolute guard).
template <typename T>
struct GradCheckResult {
    double rel_l2 = 0.0;
    double worst_coord = 0.0;
    int64_t coords = 0;
};

template <typename T>
GradCheckResult<T> gradcheck(
    ParamSet<T>& params, const std::function<int(Tape<T>&, Leased<T>&)>& build_loss, T h) {
    // analytic pass
    GradMap<T> analytic;
    {
        Tape<T> tape;
        Leased<T> lease{&tape, &params, {}};
        const int loss = build_loss(tape, lease);
        tape.backward(loss);
        accumulate_grads(analytic, lease, tape);
    }
    auto eval = [&]() -> T {
        Tape<T> tape;
        Leased<T> lease{&tape, &params, {}};
        return tape.value(build_loss(tape, lease)).data[0];
    };

    double num = 0.0, den = 0.0, worst = 0.0;
    int64_t coords = 0;
    for (auto& [name, entry] : params) {
        const Tensor<T>* ga = nullptr;
        auto it = analytic.find(name);
        Tensor<T> zeros(entry.value.shape);
        ga = it == analytic.end() ? &zeros : &it->second;
        for (size_t i = 0; i < entry.value.data.size(); ++i) {
            const T saved = entry.value.data[i];
            entry.value.data[i] = saved + h;
            const double up = eval();
            entry.value.data[i] = saved - h;
            const double down = eval();
            entry.value.data[i] = saved;
            const double fd = (up - down) / (2.0 * double(h));
            const double an = double(ga->data.data()[i]);
            num += (an - fd) * (an - fd);
            den += fd * fd;
            worst = std::max(worst, std::abs(an - fd));
            ++coords;
        }
    }
    GradCheckResult<T> r;
    r.rel_l2 = std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
    // per-coordinate error relative to the gradient scale
    r.worst_coord = worst / std::max(std::sqrt(den / double(coords)), 1e-300);
    r.coords = coords;
    return r;
}

template <typename T>
Tensor<T> random_tensor(std::vector<int> shape, Xoshiro256ss& rng, double scale = 1.0) {
    Tensor<T> t(std::move(shape));
    for (T& v : t.data) v = static_cast<T>(scale * rng.normal());
    return t;
}

}  // namespace tttlab::testing
