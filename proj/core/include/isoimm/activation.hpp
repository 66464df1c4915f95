#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace isoimm {

/// Smooth hidden-layer nonlinearities. ReLU is deliberately absent: dead units
/// in the last hidden layer break the rank of the decoder Jacobian.
enum class ActivationKind { Tanh, Softplus, Identity };

/// sigma^(order)(x) for order 0, 1 or 2.
double activate(ActivationKind kind, double x, int order = 0);

/// out[i] = activate(kind, in[i], order) for n elements; in and out may alias.
void activate_n(ActivationKind kind, const double* in, double* out, std::size_t n, int order = 0);

std::string activation_name(ActivationKind kind);
ActivationKind parse_activation(std::string_view name);

}  // namespace isoimm
