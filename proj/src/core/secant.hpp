#pragma once

#include <cmath>
#include <cstddef>

#include "core/tensor.hpp"

namespace hsrnn {

// One scalar tracked at two parameter points t+h*e and t-h*e, stored as
// (midpoint, difference). The difference rules below are cancellation-free
// identities, so dif keeps ~1e-16 relative accuracy even when it sits ten
// orders of magnitude below mid. Dividing the propagated loss difference
// by 2h therefore yields the central difference of the forward function
// without the subtraction noise of two independent evaluations.
struct Secant {
    double mid = 0.0;
    double dif = 0.0;
};

inline Secant s_const(double v) { return {v, 0.0}; }

inline Secant s_add(Secant a, Secant b) { return {a.mid + b.mid, a.dif + b.dif}; }

inline Secant s_sub(Secant a, Secant b) { return {a.mid - b.mid, a.dif - b.dif}; }

inline Secant s_scale(Secant a, double c) { return {c * a.mid, c * a.dif}; }

// (x+ y+) - (x- y-) = xm*yd + ym*xd exactly; midpoint gains xd*yd/4.
inline Secant s_mul(Secant a, Secant b) {
    return {a.mid * b.mid + 0.25 * a.dif * b.dif, a.mid * b.dif + b.mid * a.dif};
}

// tanh(u) - tanh(v) = tanh(u-v) * (1 - tanh(u) tanh(v))
inline Secant s_tanh(Secant a) {
    const double tp = std::tanh(a.mid + 0.5 * a.dif);
    const double tm = std::tanh(a.mid - 0.5 * a.dif);
    return {0.5 * (tp + tm), std::tanh(a.dif) * (1.0 - tp * tm)};
}

// sigma(u) = (1 + tanh(u/2)) / 2, so the tanh identity carries over.
inline Secant s_sigmoid(Secant a) {
    const double sp = sigmoid_scalar(a.mid + 0.5 * a.dif);
    const double sm = sigmoid_scalar(a.mid - 0.5 * a.dif);
    const double hp = std::tanh(0.5 * a.mid + 0.25 * a.dif);
    const double hm = std::tanh(0.5 * a.mid - 0.25 * a.dif);
    return {0.5 * (sp + sm), 0.5 * std::tanh(0.5 * a.dif) * (1.0 - hp * hm)};
}

// Off the kink the difference passes through exactly; a straddling pair
// has |mid| <= |dif|/2, so forming the one-sided value stays accurate
// relative to dif.
inline Secant s_relu(Secant a) {
    const double xp = a.mid + 0.5 * a.dif;
    const double xm = a.mid - 0.5 * a.dif;
    const double rp = xp > 0.0 ? xp : 0.0;
    const double rm = xm > 0.0 ? xm : 0.0;
    if (xp > 0.0 && xm > 0.0) return {0.5 * (rp + rm), a.dif};
    return {0.5 * (rp + rm), rp - rm};
}

inline Secant s_activation(Secant a, Activation act) {
    switch (act) {
        case Activation::identity: return a;
        case Activation::sigmoid: return s_sigmoid(a);
        case Activation::tanh: return s_tanh(a);
        case Activation::relu: return s_relu(a);
    }
    return a;
}

// Parallel (mid, dif) buffers over a tensor shape.
struct STensor {
    Tensor mid;
    Tensor dif;

    STensor() = default;
    explicit STensor(std::vector<std::size_t> shape) : mid(shape), dif(std::move(shape)) {}

    std::size_t size() const { return mid.size(); }
    Secant at(std::size_t i) const { return {mid[i], dif[i]}; }
    void set(std::size_t i, Secant s) {
        mid[i] = s.mid;
        dif[i] = s.dif;
    }
};

// Identifies the one perturbed coordinate: tensor `target` at flat index
// `index`, displaced by +-step.
struct SecantContext {
    const Tensor* target = nullptr;
    std::size_t index = 0;
    double step = 0.0;

    // Lifts a tensor into secant form: dif is zero everywhere except the
    // perturbed coordinate, which carries the full 2*step spread.
    STensor lift(const Tensor& t) const {
        STensor s;
        s.mid = t;
        s.dif = Tensor(t.shape());
        if (&t == target) s.dif[index] = 2.0 * step;
        return s;
    }
};

}  // namespace hsrnn
