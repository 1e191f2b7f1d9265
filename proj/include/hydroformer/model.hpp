#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "hydroformer/attention.hpp"
#include "hydroformer/tensor.hpp"

namespace hydro {

enum class OutputHeadKind { linear, nonlinear };

struct OutputHeadConfig {
  OutputHeadKind kind = OutputHeadKind::linear;
  ActivationKind activation = ActivationKind::tanh;

  static OutputHeadConfig linear() { return {}; }
  static OutputHeadConfig nonlinear(ActivationKind act = ActivationKind::tanh) {
    return {OutputHeadKind::nonlinear, act};
  }
  std::string describe() const;
};

/// Architecture hyperparameters. Defaults are the full-size settings
/// (8 heads, 1 encoder layer, 2 decoder layers, FFN 2048, d_model 512).
struct ModelConfig {
  std::size_t d_model = 512;
  std::size_t n_heads = 8;
  std::size_t n_encoder_layers = 1;
  std::size_t n_decoder_layers = 2;
  std::size_t d_ffn = 2048;
  attention::AttentionMode attention = attention::AttentionMode::dense();
  OutputHeadConfig output_head = OutputHeadConfig::linear();
  std::size_t n_features = 19;
  std::size_t target_feature = 7;  // column of the forecast target inside the window
  std::size_t lookback = 30;
  std::size_t horizon = 7;
  real layer_norm_eps = real(1e-5);

  /// Small configuration used for CPU runs: d_model 32, 2 heads, FFN 64.
  static ModelConfig desk();

  void validate() const;
  /// "Transformer", "Transformer-SPA", "Transformer-NO" or "Transformer-EN".
  std::string variant_name() const;

  std::map<std::string, std::string> to_kv() const;
  /// Reads `model.*` keys; missing keys keep their defaults.
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv, ModelConfig base);
};

/// Fixed sinusoids: PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same).
class PositionalEncoding {
 public:
  PositionalEncoding(std::size_t max_len, std::size_t d_model);
  std::size_t max_len() const { return max_len_; }
  const Tensor& table() const { return table_; }
  /// First `length` rows.
  Tensor slice(std::size_t length) const;

 private:
  std::size_t max_len_;
  Tensor table_;
};

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // out
  Tensor operator()(const Tensor& x) const { return ops::add_bias(ops::matmul(x, weight), bias); }
};

struct LayerNormParams {
  Tensor gamma, beta;
};

struct FeedForward {
  Linear in, out;
};

struct EncoderLayer {
  attention::MultiHeadParams self_attn;
  LayerNormParams norm1;
  FeedForward ffn;
  LayerNormParams norm2;
};

struct DecoderLayer {
  attention::MultiHeadParams self_attn;
  LayerNormParams norm1;
  attention::MultiHeadParams cross_attn;
  LayerNormParams norm2;
  FeedForward ffn;
  LayerNormParams norm3;
};

struct OutputHead {
  Linear hidden;  // only for the nonlinear head
  Linear out;
};

/// Encoder-decoder forecaster. Parameter tensors are shared handles: the
/// named map and the layer structs refer to the same storage.
class TransformerModel {
 public:
  TransformerModel(ModelConfig config, std::uint64_t seed);
  TransformerModel(const TransformerModel&) = delete;
  TransformerModel& operator=(const TransformerModel&) = delete;
  TransformerModel(TransformerModel&&) = default;
  TransformerModel& operator=(TransformerModel&&) = default;

  const ModelConfig& config() const { return config_; }
  const PositionalEncoding& positional_encoding() const { return pe_; }

  /// Name -> tensor, sorted by name.
  const std::map<std::string, Tensor>& parameters() const { return params_; }
  Tensor& parameter(const std::string& name);
  std::vector<Tensor> parameter_list() const;
  std::size_t parameter_count() const;
  static std::size_t parameter_count(const ModelConfig& config);

  const Linear& encoder_embedding() const { return enc_embed_; }
  const Linear& decoder_embedding() const { return dec_embed_; }
  const std::vector<EncoderLayer>& encoder_layers() const { return encoder_; }
  const std::vector<DecoderLayer>& decoder_layers() const { return decoder_; }
  const OutputHead& head() const { return head_; }

  /// window[L x n_features] -> [L x d_model]
  Tensor embed_encoder(const Tensor& window) const;
  /// decoder_in[H x 1] -> [H x d_model]
  Tensor embed_decoder(const Tensor& decoder_in) const;
  Tensor encoder_forward(const Tensor& x_emb) const;
  Tensor decoder_forward(const Tensor& y_emb, const Tensor& memory) const;
  /// [H x d_model] -> [H x 1]
  Tensor output_head(const Tensor& d) const;
  /// Hidden activations of the nonlinear head (before the last affine map).
  Tensor output_head_hidden(const Tensor& d) const;

  /// Teacher-forced pass: decoder_in row t is the target value preceding step t.
  Tensor forward(const Tensor& window, const Tensor& decoder_in) const;

  /// Greedy rollout. The first decoder input is the last observed target in
  /// the window; each prediction becomes the next decoder input.
  std::vector<real> predict(const Tensor& window, std::size_t steps) const;

  /// Copies values from another model with an identical layout.
  void load_values(const std::map<std::string, std::vector<real>>& values);
  std::map<std::string, std::vector<real>> snapshot() const;

 private:
  attention::AttentionConfig self_attention_config(bool causal) const;
  Linear make_linear(const std::string& name, std::size_t in, std::size_t out);
  LayerNormParams make_norm(const std::string& name);
  attention::MultiHeadParams make_attention(const std::string& name);
  Tensor register_parameter(const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out,
                            bool random);
  Tensor decode_step(const Tensor& decoder_in, const Tensor& memory) const;

  ModelConfig config_;
  PositionalEncoding pe_;
  std::map<std::string, Tensor> params_;
  std::vector<std::string> registration_order_;
  Linear enc_embed_;
  Linear dec_embed_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  OutputHead head_;
  std::mt19937_64 rng_;
};

}  // namespace hydro
