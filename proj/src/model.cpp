#include "hydroformer/model.hpp"

#include <cmath>
#include <sstream>

#include "hydroformer/errors.hpp"

namespace hydro {

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size() || v < 0) throw std::invalid_argument("bad");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  }
}

real parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size() || !std::isfinite(v)) throw std::invalid_argument("bad");
    return static_cast<real>(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

std::string format_real(real v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string OutputHeadConfig::describe() const {
  return kind == OutputHeadKind::linear ? "linear" : "nonlinear(" + to_string(activation) + ")";
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.d_model = 32;
  c.n_heads = 2;
  c.d_ffn = 64;
  return c;
}

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || n_encoder_layers == 0 || n_decoder_layers == 0 || d_ffn == 0 ||
      n_features == 0 || lookback == 0 || horizon == 0) {
    throw ConfigError("model: all dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("model: d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (target_feature >= n_features) throw ConfigError("model: target_feature out of range");
  if (attention.sparse && attention.k && *attention.k < 1) throw ConfigError("model: k_sparse must be >= 1");
  if (!(layer_norm_eps > 0)) throw ConfigError("model: layer_norm_eps must be positive");
}

std::string ModelConfig::variant_name() const {
  const bool nonlinear = output_head.kind == OutputHeadKind::nonlinear;
  if (attention.sparse && nonlinear) return "Transformer-EN";
  if (attention.sparse) return "Transformer-SPA";
  if (nonlinear) return "Transformer-NO";
  return "Transformer";
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
  return {
      {"model.d_model", std::to_string(d_model)},
      {"model.n_heads", std::to_string(n_heads)},
      {"model.n_encoder_layers", std::to_string(n_encoder_layers)},
      {"model.n_decoder_layers", std::to_string(n_decoder_layers)},
      {"model.d_ffn", std::to_string(d_ffn)},
      {"model.attention_mode", attention.sparse ? "sparse" : "dense"},
      {"model.k_sparse", attention.k ? std::to_string(*attention.k) : "auto"},
      {"model.output_head", output_head.kind == OutputHeadKind::linear ? "linear" : "nonlinear"},
      {"model.activation", to_string(output_head.activation)},
      {"model.n_features", std::to_string(n_features)},
      {"model.target_feature", std::to_string(target_feature)},
      {"model.lookback", std::to_string(lookback)},
      {"model.horizon", std::to_string(horizon)},
      {"model.layer_norm_eps", format_real(layer_norm_eps)},
  };
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) { return from_kv(kv, ModelConfig{}); }

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv, ModelConfig c) {
  auto get = [&](const std::string& key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto v = get("model.d_model")) c.d_model = parse_size("model.d_model", *v);
  if (auto v = get("model.n_heads")) c.n_heads = parse_size("model.n_heads", *v);
  if (auto v = get("model.n_encoder_layers")) c.n_encoder_layers = parse_size("model.n_encoder_layers", *v);
  if (auto v = get("model.n_decoder_layers")) c.n_decoder_layers = parse_size("model.n_decoder_layers", *v);
  if (auto v = get("model.d_ffn")) c.d_ffn = parse_size("model.d_ffn", *v);
  if (auto v = get("model.attention_mode")) {
    if (*v == "dense") {
      c.attention.sparse = false;
    } else if (*v == "sparse") {
      c.attention.sparse = true;
    } else {
      throw ConfigError("model.attention_mode: expected dense or sparse, got '" + *v + "'");
    }
  }
  if (auto v = get("model.k_sparse")) {
    if (*v == "auto") {
      c.attention.k.reset();
    } else {
      c.attention.k = parse_size("model.k_sparse", *v);
    }
  }
  if (auto v = get("model.output_head")) {
    if (*v == "linear") {
      c.output_head.kind = OutputHeadKind::linear;
    } else if (*v == "nonlinear") {
      c.output_head.kind = OutputHeadKind::nonlinear;
    } else {
      throw ConfigError("model.output_head: expected linear or nonlinear, got '" + *v + "'");
    }
  }
  if (auto v = get("model.activation")) c.output_head.activation = parse_activation(*v);
  if (auto v = get("model.n_features")) c.n_features = parse_size("model.n_features", *v);
  if (auto v = get("model.target_feature")) c.target_feature = parse_size("model.target_feature", *v);
  if (auto v = get("model.lookback")) c.lookback = parse_size("model.lookback", *v);
  if (auto v = get("model.horizon")) c.horizon = parse_size("model.horizon", *v);
  if (auto v = get("model.layer_norm_eps")) c.layer_norm_eps = parse_real("model.layer_norm_eps", *v);
  if (!c.attention.sparse) c.attention.k.reset();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

PositionalEncoding::PositionalEncoding(std::size_t max_len, std::size_t d_model) : max_len_(max_len) {
  std::vector<real> t(max_len * d_model);
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      t[pos * d_model + i] = static_cast<real>(std::sin(angle));
      if (i + 1 < d_model) t[pos * d_model + i + 1] = static_cast<real>(std::cos(angle));
    }
  }
  table_ = Tensor({max_len, d_model}, std::move(t));
}

Tensor PositionalEncoding::slice(std::size_t length) const {
  if (length == 0 || length > max_len_) {
    throw ShapeError("positional encoding: sequence length " + std::to_string(length) + " exceeds max_len " +
                     std::to_string(max_len_));
  }
  return ops::slice_rows(table_, 0, length);
}

// ---------------------------------------------------------------------------

TransformerModel::TransformerModel(ModelConfig config, std::uint64_t seed)
    : config_((config.validate(), std::move(config))),
      pe_(std::max(config_.lookback, config_.horizon), config_.d_model),
      rng_(seed) {
  const std::size_t d = config_.d_model;
  enc_embed_ = make_linear("embed.encoder", config_.n_features, d);
  dec_embed_ = make_linear("embed.decoder", 1, d);
  for (std::size_t l = 0; l < config_.n_encoder_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l) + ".";
    EncoderLayer layer;
    layer.self_attn = make_attention(p + "self_attn");
    layer.norm1 = make_norm(p + "norm1");
    layer.ffn.in = make_linear(p + "ffn.in", d, config_.d_ffn);
    layer.ffn.out = make_linear(p + "ffn.out", config_.d_ffn, d);
    layer.norm2 = make_norm(p + "norm2");
    encoder_.push_back(std::move(layer));
  }
  for (std::size_t l = 0; l < config_.n_decoder_layers; ++l) {
    const std::string p = "decoder." + std::to_string(l) + ".";
    DecoderLayer layer;
    layer.self_attn = make_attention(p + "self_attn");
    layer.norm1 = make_norm(p + "norm1");
    layer.cross_attn = make_attention(p + "cross_attn");
    layer.norm2 = make_norm(p + "norm2");
    layer.ffn.in = make_linear(p + "ffn.in", d, config_.d_ffn);
    layer.ffn.out = make_linear(p + "ffn.out", config_.d_ffn, d);
    layer.norm3 = make_norm(p + "norm3");
    decoder_.push_back(std::move(layer));
  }
  if (config_.output_head.kind == OutputHeadKind::nonlinear) {
    head_.hidden = make_linear("head.hidden", d, d);
  }
  head_.out = make_linear("head.out", d, 1);
}

Tensor TransformerModel::register_parameter(const std::string& name, Shape shape, std::size_t fan_in,
                                            std::size_t fan_out, bool random) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  std::vector<real> values(n, real{0});
  if (random) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : values) v = static_cast<real>(dist(rng_));
  }
  Tensor t(std::move(shape), std::move(values), true);
  params_.emplace(name, t);
  registration_order_.push_back(name);
  return t;
}

Linear TransformerModel::make_linear(const std::string& name, std::size_t in, std::size_t out) {
  Linear lin;
  lin.weight = register_parameter(name + ".weight", {in, out}, in, out, true);
  lin.bias = register_parameter(name + ".bias", {out}, in, out, false);
  return lin;
}

LayerNormParams TransformerModel::make_norm(const std::string& name) {
  LayerNormParams ln;
  ln.gamma = register_parameter(name + ".gamma", {config_.d_model}, 0, 0, false);
  for (auto& v : ln.gamma.mutable_data()) v = 1;
  ln.beta = register_parameter(name + ".beta", {config_.d_model}, 0, 0, false);
  return ln;
}

attention::MultiHeadParams TransformerModel::make_attention(const std::string& name) {
  const std::size_t d = config_.d_model;
  attention::MultiHeadParams p;
  p.w_q = register_parameter(name + ".w_q", {d, d}, d, d, true);
  p.w_k = register_parameter(name + ".w_k", {d, d}, d, d, true);
  p.w_v = register_parameter(name + ".w_v", {d, d}, d, d, true);
  p.w_o = register_parameter(name + ".w_o", {d, d}, d, d, true);
  return p;
}

Tensor& TransformerModel::parameter(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<Tensor> TransformerModel::parameter_list() const {
  std::vector<Tensor> out;
  out.reserve(registration_order_.size());
  for (const auto& name : registration_order_) out.push_back(params_.at(name));
  return out;
}

std::size_t TransformerModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

std::size_t TransformerModel::parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_model, f = c.d_ffn;
  const std::size_t attn = 4 * d * d;
  const std::size_t norm = 2 * d;
  const std::size_t ffn = d * f + f + f * d + d;
  std::size_t n = (c.n_features * d + d) + (d + d);
  n += c.n_encoder_layers * (attn + ffn + 2 * norm);
  n += c.n_decoder_layers * (2 * attn + ffn + 3 * norm);
  if (c.output_head.kind == OutputHeadKind::nonlinear) n += d * d + d;
  n += d + 1;
  return n;
}

attention::AttentionConfig TransformerModel::self_attention_config(bool causal) const {
  attention::AttentionConfig a;
  a.d_model = config_.d_model;
  a.n_heads = config_.n_heads;
  a.mode = config_.attention;
  a.causal = causal;
  return a;
}

Tensor TransformerModel::embed_encoder(const Tensor& window) const {
  if (window.ndim() != 2 || window.cols() != config_.n_features) {
    throw ShapeError("embed: window " + shape_to_string(window.shape()) + " must have " +
                     std::to_string(config_.n_features) + " feature columns");
  }
  return ops::add(enc_embed_(window), pe_.slice(window.rows()));
}

Tensor TransformerModel::embed_decoder(const Tensor& decoder_in) const {
  if (decoder_in.ndim() != 2 || decoder_in.cols() != 1) {
    throw ShapeError("embed: decoder input " + shape_to_string(decoder_in.shape()) + " must be H x 1");
  }
  return ops::add(dec_embed_(decoder_in), pe_.slice(decoder_in.rows()));
}

namespace {
Tensor norm(const Tensor& x, const LayerNormParams& p, real eps) { return ops::layer_norm(x, p.gamma, p.beta, eps); }

Tensor feed_forward(const Tensor& x, const FeedForward& f) {
  return f.out(ops::activation(f.in(x), ActivationKind::relu));
}
}  // namespace

Tensor TransformerModel::encoder_forward(const Tensor& x_emb) const {
  if (x_emb.ndim() != 2 || x_emb.cols() != config_.d_model) {
    throw ShapeError("encoder: input width must be d_model=" + std::to_string(config_.d_model));
  }
  const auto cfg = self_attention_config(false);
  const real eps = config_.layer_norm_eps;
  Tensor x = x_emb;
  for (const auto& layer : encoder_) {
    Tensor h = norm(ops::add(x, attention::multi_head(x, x, x, cfg, layer.self_attn)), layer.norm1, eps);
    x = norm(ops::add(h, feed_forward(h, layer.ffn)), layer.norm2, eps);
  }
  return x;
}

Tensor TransformerModel::decoder_forward(const Tensor& y_emb, const Tensor& memory) const {
  if (y_emb.ndim() != 2 || y_emb.cols() != config_.d_model || memory.ndim() != 2 ||
      memory.cols() != config_.d_model) {
    throw ShapeError("decoder: inputs must have width d_model=" + std::to_string(config_.d_model));
  }
  const auto self_cfg = self_attention_config(true);
  const auto cross_cfg = self_attention_config(false);
  const real eps = config_.layer_norm_eps;
  Tensor y = y_emb;
  for (const auto& layer : decoder_) {
    Tensor h1 = norm(ops::add(y, attention::multi_head(y, y, y, self_cfg, layer.self_attn)), layer.norm1, eps);
    Tensor h2 = norm(ops::add(h1, attention::multi_head(h1, memory, memory, cross_cfg, layer.cross_attn)),
                     layer.norm2, eps);
    y = norm(ops::add(h2, feed_forward(h2, layer.ffn)), layer.norm3, eps);
  }
  return y;
}

Tensor TransformerModel::output_head_hidden(const Tensor& d) const {
  if (config_.output_head.kind != OutputHeadKind::nonlinear) {
    throw ConfigError("output head: linear head has no hidden layer");
  }
  return ops::activation(head_.hidden(d), config_.output_head.activation);
}

Tensor TransformerModel::output_head(const Tensor& d) const {
  if (config_.output_head.kind == OutputHeadKind::linear) return head_.out(d);
  return head_.out(output_head_hidden(d));
}

Tensor TransformerModel::decode_step(const Tensor& decoder_in, const Tensor& memory) const {
  return output_head(decoder_forward(embed_decoder(decoder_in), memory));
}

Tensor TransformerModel::forward(const Tensor& window, const Tensor& decoder_in) const {
  if (decoder_in.ndim() != 2 || decoder_in.rows() > config_.horizon) {
    throw ShapeError("forward: decoder input " + shape_to_string(decoder_in.shape()) + " longer than horizon " +
                     std::to_string(config_.horizon));
  }
  const Tensor memory = encoder_forward(embed_encoder(window));
  return decode_step(decoder_in, memory);
}

std::vector<real> TransformerModel::predict(const Tensor& window, std::size_t steps) const {
  if (steps < 1) throw ConfigError("predict: horizon must be >= 1");
  if (steps > config_.horizon) {
    throw ConfigError("predict: " + std::to_string(steps) + " steps exceed the trained horizon " +
                      std::to_string(config_.horizon));
  }
  NoGradGuard no_grad;
  const Tensor memory = encoder_forward(embed_encoder(window));
  std::vector<real> inputs{window.at(window.rows() - 1, config_.target_feature)};
  std::vector<real> preds;
  preds.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    const Tensor out = decode_step(Tensor({inputs.size(), 1}, inputs), memory);
    preds.push_back(out.at(s, 0));
    inputs.push_back(preds.back());
  }
  return preds;
}

void TransformerModel::load_values(const std::map<std::string, std::vector<real>>& values) {
  if (values.size() != params_.size()) {
    throw FormatError("parameter set has " + std::to_string(values.size()) + " tensors, model expects " +
                      std::to_string(params_.size()));
  }
  for (auto& [name, t] : params_) {
    auto it = values.find(name);
    if (it == values.end()) throw FormatError("missing parameter '" + name + "'");
    auto dst = t.mutable_data();
    if (it->second.size() != dst.size()) throw FormatError("parameter '" + name + "' has the wrong size");
    std::copy(it->second.begin(), it->second.end(), dst.begin());
  }
}

std::map<std::string, std::vector<real>> TransformerModel::snapshot() const {
  std::map<std::string, std::vector<real>> out;
  for (const auto& [name, t] : params_) out.emplace(name, std::vector<real>(t.data().begin(), t.data().end()));
  return out;
}

}  // namespace hydro
