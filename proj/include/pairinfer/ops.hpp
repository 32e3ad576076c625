#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pairinfer/tensor.hpp"

// Differentiable tensor operations. Every op records itself on the active
// tape when at least one input requires a gradient.
namespace pairinfer::nk {

using Mask = std::vector<std::uint8_t>;

enum class BinaryOp { add, sub, mul };

Tensor elementwise(const Tensor& a, const Tensor& b, BinaryOp op);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryOp::add); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryOp::sub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryOp::mul); }

Tensor scale(const Tensor& x, double factor);
// x (R x C) + bias (C) on every row.
Tensor add_row(const Tensor& x, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);

// Max-shifted softmax along `axis`. With a mask, entries where mask == 0
// receive exactly zero weight; every slice must keep at least one entry.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor softmax(const Tensor& x, std::size_t axis, const Mask& mask);

// Reduces `axis` away; the result keeps the remaining dimensions.
Tensor logsumexp(const Tensor& x, std::size_t axis);
Tensor logsumexp(const Tensor& x, std::size_t axis, const Mask& mask);

// Normalizes over the last axis, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Identity forward; contributes nothing to any ancestor on backward.
Tensor stop_gradient(const Tensor& x);

Tensor concat(std::span<const Tensor> xs, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> xs, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& x, Shape shape);

// Selects slices along the first axis. Gradients scatter-add back.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
inline Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
  return gather_rows(table, ids);
}
// Inverse placement: row i of x lands at row index[i] of a zero matrix.
Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> index, std::size_t total_rows);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::size_t axis);

// Divides each row by its sum. Rows whose sum falls below eps become uniform
// and pass no gradient.
Tensor normalize_rows(const Tensor& x, double eps = 1e-12);

// Row-wise cosine similarity of two R x C matrices, returned as (R).
Tensor cosine_rows(const Tensor& a, const Tensor& b);
double cosine(std::span<const double> a, std::span<const double> b);
Tensor cosine(const Tensor& a, const Tensor& b);

}  // namespace pairinfer::nk
