#pragma once

// Differentiable primitives. Binary elementwise ops broadcast with numpy
// rules (shapes right-aligned, size-1 axes stretch). Shape errors name both
// operand shapes.

#include "ponita/tensor.hpp"

#include <cstdint>
#include <vector>

namespace ponita::ad {

using Index = std::vector<std::uint32_t>;

template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> div(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& a, T s);
template <class T> Var<T> add_scalar(const Var<T>& a, T s);

/// a [..., K] x b [K, M] -> [..., M]
template <class T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
/// x [..., K] W [K, M] + b [M] in one step.
template <class T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);
/// a [B|1, M, K] x b [B|1, K, N] -> [B, M, N]
template <class T> Var<T> bmm(const Var<T>& a, const Var<T>& b);
/// out[p, a, c] = sum_b k[a, b, c] * f[p, b, c]   (einsum "abc,pbc->pac")
template <class T> Var<T> contract_channelwise(const Var<T>& k, const Var<T>& f);

/// Rows of x (axis 0) selected by idx.
template <class T> Var<T> gather(const Var<T>& x, const Index& idx);
/// out[s] = sum over rows r with seg[r] == s of x[r].
template <class T> Var<T> segment_sum(const Var<T>& x, const Index& seg, std::size_t num_segments);
/// out[receivers[e]] += k[e] * f[senders[e]] elementwise over the trailing
/// axes; k is [E, ...], f is [P, ...] with matching trailing shape.
template <class T>
Var<T> edge_message_sum(const Var<T>& k, const Var<T>& f, const Index& receivers, const Index& senders,
                        std::size_t num_nodes);

template <class T> Var<T> reshape(const Var<T>& x, Shape shape);
template <class T> Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis);
template <class T> Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end);
template <class T> Var<T> broadcast_to(const Var<T>& x, const Shape& shape);
/// Swaps the last two axes.
template <class T> Var<T> transpose_last(const Var<T>& x);

template <class T> Var<T> sum(const Var<T>& x, std::size_t axis, bool keepdim = false);
template <class T> Var<T> mean(const Var<T>& x, std::size_t axis, bool keepdim = false);
template <class T> Var<T> sum_all(const Var<T>& x);
template <class T> Var<T> mean_all(const Var<T>& x);

template <class T> Var<T> relu(const Var<T>& x);
/// Gradient 1 inside [lo, hi], 0 outside.
template <class T> Var<T> clamp(const Var<T>& x, T lo, T hi);
/// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
template <class T> Var<T> gelu(const Var<T>& x);
/// The derivative at 0 is taken as 0.
template <class T> Var<T> sqrt(const Var<T>& x);
template <class T> Var<T> exp(const Var<T>& x);
template <class T> Var<T> log(const Var<T>& x);
template <class T> Var<T> square(const Var<T>& x);
/// arccos of the input clamped to [-1, 1]; zero derivative where clamped.
template <class T> Var<T> acos_clamped(const Var<T>& x);

/// Normalizes over the last axis, then applies gamma [C] and beta [C].
template <class T> Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));

template <class T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <class T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <class T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <class T> Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }
template <class T> Var<T> operator-(const Var<T>& a) { return scale(a, T(-1)); }

}  // namespace ponita::ad
