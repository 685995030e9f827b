#pragma once

#include <cstddef>
#include <random>
#include <span>

#include "memformer/numkernel/tensor.hpp"

namespace memformer {

using Rng = std::mt19937_64;

// Differentiable primitives. Every op validates shapes and throws
// std::invalid_argument on mismatch.

/// Elementwise sum. `b` must have the shape of `a` or of a trailing suffix of
/// it, in which case it is broadcast over the leading axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// [..., n] x [n, m] -> [..., m]
Tensor matmul(const Tensor& x, const Tensor& w);
/// [..., n] x [m, n]^T -> [..., m]. `w` may have rank > 2; trailing axes are
/// flattened to n.
Tensor matmul_nt(const Tensor& x, const Tensor& w);
/// Batched [..., n, k] x [..., k, m] -> [..., n, m]; leading axes must agree.
Tensor bmm(const Tensor& a, const Tensor& b);
/// Batched [..., n, k] x [..., m, k]^T -> [..., n, m].
Tensor bmm_nt(const Tensor& a, const Tensor& b);

/// max(x, 0); the derivative at exactly zero is 0.
Tensor relu(const Tensor& x);

/// Softmax over the last axis with max-subtraction. Rejects non-finite input
/// with std::domain_error.
Tensor softmax_rows(const Tensor& logits);

/// Normalizes over the last axis, then applies gain and bias of that extent.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

/// Inverted dropout: in train mode each entry is zeroed with probability
/// `rate` and survivors are scaled by 1/(1 - rate). Identity otherwise.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool train);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean negative log-likelihood of `targets` under softmax(logits), computed
/// in log-sum-exp form. logits: [B, C].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

Tensor reshape(const Tensor& x, Shape shape);
/// [...] -> [copies, ...] with every slice equal to x.
Tensor tile(const Tensor& x, std::size_t copies);
/// Concatenates along the last axis; leading axes must agree.
Tensor concat_last(const Tensor& a, const Tensor& b);
/// first: [K], seq: [B, N, K] -> [B, N + 1, K] with `first` at position 0.
Tensor prepend_token(const Tensor& first, const Tensor& seq);
/// [B, T, K] -> [B, K]
Tensor select_token(const Tensor& seq, std::size_t index);
/// [B, T, K] -> [B, h, T, K / h]
Tensor split_heads(const Tensor& x, std::size_t heads);
/// [B, h, T, d] -> [B, T, h * d]
Tensor merge_heads(const Tensor& x);

}  // namespace memformer
