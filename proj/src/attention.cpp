#include "hydroformer/attention.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hydroformer/errors.hpp"

namespace hydro::attention {

std::size_t AttentionMode::resolve_k(std::size_t num_keys) const {
  if (!sparse) return num_keys;
  if (k) return *k;
  return std::max<std::size_t>(1, (num_keys + 3) / 4);
}

std::string AttentionMode::describe() const {
  if (!sparse) return "dense";
  return k ? "sparse(k=" + std::to_string(*k) + ")" : "sparse(k=auto)";
}

void AttentionConfig::validate() const {
  if (d_model == 0 || n_heads == 0) throw ConfigError("attention: d_model and n_heads must be positive");
  if (d_model % n_heads != 0) {
    throw ConfigError("attention: d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (mode.sparse && mode.k && *mode.k < 1) throw ConfigError("attention: k_sparse must be >= 1");
}

Tensor attention_scores(const Tensor& q, const Tensor& k) {
  if (q.ndim() != 2 || k.ndim() != 2 || q.cols() != k.cols()) {
    throw ShapeError("attention_scores: d_k mismatch between Q " + shape_to_string(q.shape()) + " and K " +
                     shape_to_string(k.shape()));
  }
  const real inv_sqrt_dk = real(1) / std::sqrt(static_cast<real>(q.cols()));
  return ops::scale(ops::matmul(q, ops::transpose(k)), inv_sqrt_dk);
}

Mask topk_mask(const Tensor& scores, std::size_t k, const Mask* allowed) {
  if (k < 1) throw ConfigError("topk_mask: k must be >= 1");
  if (scores.ndim() != 2) throw ShapeError("topk_mask: scores must be 2-D");
  const std::size_t m = scores.rows(), n = scores.cols();
  if (allowed && (allowed->rows() != m || allowed->cols() != n)) {
    throw ShapeError("topk_mask: allowed mask does not match scores " + shape_to_string(scores.shape()));
  }
  const auto P = scores.data();
  Mask keep(m, n, false);
  std::vector<real> candidates;
  for (std::size_t i = 0; i < m; ++i) {
    candidates.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (!allowed || (*allowed)(i, j)) candidates.push_back(P[i * n + j]);
    }
    if (candidates.empty()) throw ShapeError("topk_mask: row " + std::to_string(i) + " has no allowed entries");
    real threshold;
    if (k >= candidates.size()) {
      threshold = *std::min_element(candidates.begin(), candidates.end());
    } else {
      std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k - 1),
                       candidates.end(), std::greater<>());
      threshold = candidates[k - 1];
    }
    for (std::size_t j = 0; j < n; ++j) {
      if ((!allowed || (*allowed)(i, j)) && P[i * n + j] >= threshold) keep.set(i, j, true);
    }
  }
  return keep;
}

Mask causal_mask(std::size_t length) {
  Mask mask(length, length, false);
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = 0; j <= i; ++j) mask.set(i, j, true);
  return mask;
}

namespace {
void check_kv(const Tensor& k, const Tensor& v) {
  if (k.ndim() != 2 || v.ndim() != 2 || k.rows() != v.rows()) {
    throw ShapeError("attention: K " + shape_to_string(k.shape()) + " and V " + shape_to_string(v.shape()) +
                     " must have the same number of rows");
  }
}
}  // namespace

Tensor dense_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Mask* allowed) {
  check_kv(k, v);
  Tensor scores = attention_scores(q, k);
  Tensor weights = allowed ? ops::masked_softmax(scores, *allowed) : ops::softmax(scores);
  return ops::matmul(weights, v);
}

Tensor sparse_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t top_k,
                        const Mask* allowed) {
  check_kv(k, v);
  Tensor scores = attention_scores(q, k);
  // Selection is a constant with respect to differentiation.
  const Mask keep = topk_mask(scores, top_k, allowed);
  return ops::matmul(ops::masked_softmax(scores, keep), v);
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMode& mode, const Mask* allowed) {
  if (!mode.sparse) return dense_attention(q, k, v, allowed);
  return sparse_attention(q, k, v, mode.resolve_k(k.rows()), allowed);
}

Tensor multi_head(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in, const AttentionConfig& cfg,
                  const MultiHeadParams& params) {
  cfg.validate();
  for (const Tensor* t : {&q_in, &k_in, &v_in}) {
    if (t->ndim() != 2 || t->cols() != cfg.d_model) {
      throw ShapeError("multi_head: input " + shape_to_string(t->shape()) + " does not have width d_model=" +
                       std::to_string(cfg.d_model));
    }
  }
  if (k_in.rows() != v_in.rows()) throw ShapeError("multi_head: K and V row counts differ");

  Mask causal;
  if (cfg.causal) {
    if (q_in.rows() != k_in.rows()) throw ShapeError("multi_head: causal attention needs L_q == L_k");
    causal = causal_mask(q_in.rows());
  }
  const Mask* allowed = cfg.causal ? &causal : nullptr;

  const Tensor q = ops::matmul(q_in, params.w_q);
  const Tensor k = ops::matmul(k_in, params.w_k);
  const Tensor v = ops::matmul(v_in, params.w_v);
  const std::size_t dk = cfg.head_dim();
  std::vector<Tensor> heads;
  heads.reserve(cfg.n_heads);
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const std::size_t lo = h * dk, hi = lo + dk;
    heads.push_back(attend(ops::slice_cols(q, lo, hi), ops::slice_cols(k, lo, hi), ops::slice_cols(v, lo, hi),
                           cfg.mode, allowed));
  }
  Tensor joined = cfg.n_heads == 1 ? heads.front() : ops::concat_cols(heads);
  return ops::matmul(joined, params.w_o);
}

}  // namespace hydro::attention
