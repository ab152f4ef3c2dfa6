#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "air/tensor/autograd.hpp"

namespace air {

// Elementwise; operands must have identical shapes (no implicit broadcasting).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var tanh(const Var& a);
/// Tanh-approximated GELU.
Var gelu(const Var& a);
Var silu(const Var& a);

// Explicit broadcasts.
/// x[..., D] + v[D] at every leading index.
Var add_row(const Var& x, const Var& v);
/// v[D] -> [B, S, D].
Var broadcast_rows(const Var& v, std::size_t batch, std::size_t seq);

/// x[..., K] @ w[K, N] -> [..., N].
Var matmul(const Var& x, const Var& w);
/// Batched a[N, M, K] @ b[N, K, P] -> [N, M, P].
Var bmm(const Var& a, const Var& b);
/// Batched a[N, M, K] @ b[N, P, K]^T -> [N, M, P].
Var bmm_nt(const Var& a, const Var& b);

Var softmax_last(const Var& x);
/// Root-mean-square normalisation over the last axis with learned gain, no bias.
Var rms_norm(const Var& x, const Var& gain, double eps = 1e-6);
/// Mean/variance normalisation over the last axis with learned gain, no bias.
Var layer_norm(const Var& x, const Var& gain, double eps = 1e-6);

/// Rows of `table[V, D]` gathered by `ids` (row-major, shape `ids_shape`).
Var embedding(std::span<const int> ids, const Shape& ids_shape, const Var& table);

/// Rotary embedding of x[N, S, d] over interleaved pairs (2i, 2i+1);
/// `positions[s]` is the rotation position of sequence index s.
Var rope(const Var& x, std::span<const double> positions, double base = 10000.0);
/// Two-axis rotary rotation: the first half of the feature pairs is rotated
/// by `rows`, the second half by `cols`, each with its own frequency ladder
/// over d/2 features. Feature size must be a multiple of 4.
Var rope_axial(const Var& x, std::span<const double> rows, std::span<const double> cols, double base = 10000.0);
/// In-place rotation of one d-dimensional vector; the reference kernel of `rope`.
void rope_rotate(std::span<double> v, double position, double base = 10000.0);

// Sequence-axis (axis 1) structure for [B, S, D] tensors.
Var concat_seq(const Var& a, const Var& b);
Var slice_seq(const Var& x, std::size_t start, std::size_t length);

/// [B, S, H*d] -> [B*H, S, d].
Var split_heads(const Var& x, std::size_t heads);
/// [B*H, S, d] -> [B, S, H*d].
Var merge_heads(const Var& x, std::size_t heads);

Var sum(const Var& x);
Var mean(const Var& x);

}  // namespace air
