#pragma once

// Differentiable primitives. Broadcasting is limited to a one-element tensor
// combined with any tensor, plus the explicit row-bias add.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "nara/tensor.hpp"

namespace nara {

/// Raised by log() on a non-positive input.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

Tensor matmul(const Tensor& a, const Tensor& b);     // [m×k]·[k×n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m×k]·[n×k]ᵀ
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// x[m×n] + bias[n] added to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor silu(const Tensor& x);
Tensor log(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

/// Concatenate along `axis` (0 or 1 for matrices, 0 for vectors).
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
/// Rows of a matrix by index; repeated indices sum their gradients.
Tensor gather_rows(const Tensor& x, std::span<const int> index);
/// out[i] = x[i, index[i]]
Tensor pick(const Tensor& x, std::span<const int> index);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Row-wise layer normalization with learned gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Elementwise x * mask where `mask` is a constant (never differentiated).
Tensor mul_const(const Tensor& x, std::span<const double> mask);

}  // namespace nara
