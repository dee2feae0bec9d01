// Scalar activations and the softmax head.
//
// tanh is delegated to the platform libm, which rounds correctly for the
// double range used here.
#pragma once

#include <cmath>
#include <stdexcept>

#include "tdln/matrix.hpp"

namespace tdln {

// Gate squashing function, stable for |x| up to ~700 in either direction.
inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// d sigmoid / dx expressed through the already-computed output s.
inline double sigmoid_grad_from_output(double s) { return s * (1.0 - s); }

inline constexpr double kSeluLambda = 1.05070098;
inline constexpr double kSeluAlpha = 1.67326324;

inline double selu(double x) {
    return x > 0.0 ? kSeluLambda * x : kSeluLambda * (kSeluAlpha * std::exp(x) - kSeluAlpha);
}

// lambda for x > 0, lambda * alpha * e^x for x <= 0.
inline double selu_grad(double x) {
    return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
}

inline double tanh_grad_from_output(double t) { return 1.0 - t * t; }

// Max-subtracted softmax; entries positive and summing to 1.
inline Vector softmax(const Vector& v) {
    if (v.empty()) throw std::invalid_argument("softmax: empty input");
    double mx = v[0];
    for (double x : v)
        if (x > mx) mx = x;
    Vector out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

}  // namespace tdln
