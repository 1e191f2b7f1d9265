#pragma once

// Scaled dot-product attention with optional explicit top-k sparsification.
//
// Sparse attention keeps, per query row, the scores that are at least the
// row's k-th largest score and drops the rest before softmax. Ties at the
// threshold are all kept, so a row can retain more than k entries. When a
// causal (or other structural) mask is present, the threshold is taken over
// the allowed entries only.

#include <cstddef>
#include <optional>
#include <string>

#include "hydroformer/tensor.hpp"

namespace hydro::attention {

/// Dense, or sparse with a fixed k; sparse without k resolves to ceil(L_k / 4).
struct AttentionMode {
  bool sparse = false;
  std::optional<std::size_t> k;

  static AttentionMode dense() { return {}; }
  static AttentionMode top_k(std::size_t k) { return {true, k}; }
  static AttentionMode top_k_auto() { return {true, std::nullopt}; }

  /// k used for a given number of keys.
  std::size_t resolve_k(std::size_t num_keys) const;
  std::string describe() const;
};

struct AttentionConfig {
  std::size_t d_model = 0;
  std::size_t n_heads = 1;
  AttentionMode mode;
  bool causal = false;

  std::size_t head_dim() const { return d_model / n_heads; }
  void validate() const;
};

/// Learned projections of one multi-head block, each d_model x d_model.
/// Head i uses columns [i*d_k, (i+1)*d_k) of w_q, w_k and w_v.
struct MultiHeadParams {
  Tensor w_q, w_k, w_v, w_o;
};

/// P = Q K^T / sqrt(d_k)
Tensor attention_scores(const Tensor& q, const Tensor& k);

/// Keeps P[i][j] >= t_i, where t_i is the k-th largest score of row i among
/// positions allowed by `allowed` (all positions when omitted).
Mask topk_mask(const Tensor& scores, std::size_t k, const Mask* allowed = nullptr);

/// (i, j) allowed iff j <= i.
Mask causal_mask(std::size_t length);

/// softmax(Q K^T / sqrt(d_k)) V, restricted to `allowed` when given.
Tensor dense_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Mask* allowed = nullptr);

/// softmax(Mask(P, k)) V.
Tensor sparse_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t top_k,
                        const Mask* allowed = nullptr);

/// Dispatches on `mode`.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMode& mode,
              const Mask* allowed = nullptr);

/// Concat(head_1..head_n) W_O with head_i = Attention(Q W_Q^i, K W_K^i, V W_V^i).
Tensor multi_head(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in, const AttentionConfig& cfg,
                  const MultiHeadParams& params);

}  // namespace hydro::attention
