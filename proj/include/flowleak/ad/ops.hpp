#pragma once

#include <vector>

#include "flowleak/ad/graph.hpp"
#include "flowleak/ad/tensor.hpp"

// Differentiable op suite. Every backward rule is composed of ops from this
// suite (plus constants), so gradients themselves can be differentiated to any
// nesting depth. All ops are pure: inputs are never mutated, outputs are fresh
// tensors, and identical inputs give bit-identical outputs.
namespace flowleak::ad {

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Tensor-scalar forms; c is a plain constant.
Tensor cmul(const Tensor& a, double c);
Tensor cadd(const Tensor& a, double c);
Tensor neg(const Tensor& a);

// One-element tensor s times every element of a (the one permitted broadcast).
Tensor smul(const Tensor& s, const Tensor& a);

// 2-D linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// 2-D convolution, stride 1, zero padding 1, 3x3 kernels only.
// x: (B, C, H, W), k: (O, C, 3, 3) -> (B, O, H, W).
Tensor conv2d(const Tensor& x, const Tensor& k);
// Adjoint of conv2d with respect to its kernel: x: (B, C, H, W),
// g: (B, O, H, W) -> (O, C, 3, 3), summed over the batch.
Tensor conv2d_kernel_grad(const Tensor& x, const Tensor& g);
// (O, C, 3, 3) -> (C, O, 3, 3) with both spatial axes flipped; involution.
Tensor conv_kernel_flip(const Tensor& k);
// x: (B, C, H, W) plus per-channel bias b: (C).
Tensor add_channel_bias(const Tensor& x, const Tensor& b);
// Sum of x over batch and spatial axes -> (C).
Tensor channel_sum(const Tensor& x);

// Smooth elementwise nonlinearities.
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor sqrt(const Tensor& x);        // elementwise; x must be > 0
Tensor reciprocal(const Tensor& x);  // elementwise; x must be nonzero
// Elementwise |x|; the second derivative is treated as zero everywhere.
Tensor abs(const Tensor& x);

// Row-wise log softmax over the last axis of a 2-D tensor.
Tensor log_softmax(const Tensor& x);

// Reductions to a one-element tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sqnorm(const Tensor& x);                  // sum of squares
Tensor dot(const Tensor& a, const Tensor& b);    // same shape, any rank

// Shape plumbing.
Tensor reshape(const Tensor& x, const std::vector<int>& shape);
Tensor slice1d(const Tensor& x, std::size_t start, std::size_t len);
// Places a 1-D tensor into a zero vector of length total at offset start.
Tensor embed1d(const Tensor& x, std::size_t start, std::size_t total);
Tensor concat(const std::vector<Tensor>& parts);  // 1-D parts -> 1-D

// a / b elementwise (composition: mul(a, reciprocal(b))).
Tensor div(const Tensor& a, const Tensor& b);

}  // namespace flowleak::ad
