#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "radnet/checkpoint.hpp"
#include "radnet/error.hpp"
#include "radnet/layers.hpp"
#include "radnet/rng.hpp"
#include "radnet/tensor.hpp"

namespace radnet {

enum class LayerKind { kConv, kPool, kDense };

struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  std::size_t width = 0;   // conv: output channels, dense: units
  bool dropout = false;    // pool only; dense layers always carry dropout

  bool operator==(const LayerSpec&) const = default;
};

/// Declarative network description: an ordered layer list plus input geometry.
/// Every conv is followed by BN and leaky ReLU; every dense by BN, leaky ReLU
/// and dropout; a final linear projection to num_classes feeds the softmax.
struct ModelSpec {
  std::size_t in_channels = 1;
  std::size_t in_height = 128;
  std::size_t in_width = 128;
  std::size_t num_classes = 24;
  std::vector<LayerSpec> layers;
  double leaky_slope = 0.01;
  double pool_dropout = 0.25;
  double dense_dropout = 0.5;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;

  bool operator==(const ModelSpec&) const = default;

  /// The stock 128x128 grayscale classifier: ten 3x3 conv blocks in four
  /// pooling stages, dropout after the last pool, two 256-unit dense blocks,
  /// 24-way softmax.
  static ModelSpec defaults() {
    ModelSpec s;
    s.layers = {
        {LayerKind::kConv, 32},  {LayerKind::kConv, 16},  {LayerKind::kPool, 0},
        {LayerKind::kConv, 64},  {LayerKind::kConv, 32},  {LayerKind::kPool, 0},
        {LayerKind::kConv, 128}, {LayerKind::kConv, 128}, {LayerKind::kConv, 64},
        {LayerKind::kPool, 0},   {LayerKind::kConv, 256}, {LayerKind::kConv, 256},
        {LayerKind::kConv, 128}, {LayerKind::kPool, 0, true},
        {LayerKind::kDense, 256}, {LayerKind::kDense, 256},
    };
    return s;
  }

  std::string layers_to_string() const {
    std::string out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (i) out += ",";
      switch (layers[i].kind) {
        case LayerKind::kConv: out += "conv" + std::to_string(layers[i].width); break;
        case LayerKind::kPool: out += layers[i].dropout ? "pool+drop" : "pool"; break;
        case LayerKind::kDense: out += "dense" + std::to_string(layers[i].width); break;
      }
    }
    return out;
  }

  static std::vector<LayerSpec> parse_layers(const std::string& text) {
    std::vector<LayerSpec> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      // trim
      while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.erase(0, 1);
      while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t')) tok.pop_back();
      if (tok.empty()) continue;
      if (tok == "pool") {
        out.push_back({LayerKind::kPool, 0, false});
      } else if (tok == "pool+drop") {
        out.push_back({LayerKind::kPool, 0, true});
      } else if (tok.rfind("conv", 0) == 0 || tok.rfind("dense", 0) == 0) {
        const bool is_conv = tok.rfind("conv", 0) == 0;
        const std::string num = tok.substr(is_conv ? 4 : 5);
        std::size_t width = 0;
        try {
          width = std::stoul(num);
        } catch (const std::exception&) {
          throw ConfigError("model: bad layer token '" + tok + "'");
        }
        if (width == 0) throw ConfigError("model: bad layer token '" + tok + "'");
        out.push_back({is_conv ? LayerKind::kConv : LayerKind::kDense, width});
      } else {
        throw ConfigError("model: unknown layer token '" + tok + "'");
      }
    }
    return out;
  }

  std::string to_text() const {
    std::ostringstream out;
    out.precision(17);
    out << "input=" << in_channels << "x" << in_height << "x" << in_width << "\n"
        << "classes=" << num_classes << "\n"
        << "layers=" << layers_to_string() << "\n"
        << "leaky_slope=" << leaky_slope << "\n"
        << "pool_dropout=" << pool_dropout << "\n"
        << "dense_dropout=" << dense_dropout << "\n"
        << "bn_momentum=" << bn_momentum << "\n"
        << "bn_epsilon=" << bn_epsilon << "\n";
    return out.str();
  }

  static ModelSpec from_text(const std::string& text) {
    ModelSpec s;
    s.layers.clear();
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      const std::string val = line.substr(eq + 1);
      try {
        if (key == "input") {
          std::size_t c = 0, h = 0, w = 0;
          char x1 = 0, x2 = 0;
          std::istringstream iv(val);
          iv >> c >> x1 >> h >> x2 >> w;
          if (!iv || x1 != 'x' || x2 != 'x') throw ConfigError("model: bad input '" + val + "'");
          s.in_channels = c;
          s.in_height = h;
          s.in_width = w;
        } else if (key == "classes") {
          s.num_classes = std::stoul(val);
        } else if (key == "layers") {
          s.layers = parse_layers(val);
        } else if (key == "leaky_slope") {
          s.leaky_slope = std::stod(val);
        } else if (key == "pool_dropout") {
          s.pool_dropout = std::stod(val);
        } else if (key == "dense_dropout") {
          s.dense_dropout = std::stod(val);
        } else if (key == "bn_momentum") {
          s.bn_momentum = std::stod(val);
        } else if (key == "bn_epsilon") {
          s.bn_epsilon = std::stod(val);
        } else {
          throw ConfigError("model: unknown spec key '" + key + "'");
        }
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception&) {
        throw ConfigError("model: bad value '" + val + "' for key '" + key + "'");
      }
    }
    return s;
  }

  /// Spatial/width state after each layer plus the flatten width feeding the
  /// first dense layer (or the head, for all-conv specs).
  struct ShapeChain {
    std::vector<Shape> after_layer;  // {C,H,W} or {D}
    std::size_t flatten_width = 0;
  };

  ShapeChain shape_chain() const {
    if (in_channels == 0 || in_height == 0 || in_width == 0) {
      throw ConfigError("model: input shape has a zero dimension");
    }
    if (num_classes == 0) throw ConfigError("model: num_classes must be positive");
    if (leaky_slope < 0.0 || leaky_slope >= 1.0) {
      throw ConfigError("model: leaky_slope outside [0,1)");
    }
    if (pool_dropout < 0.0 || pool_dropout >= 1.0 || dense_dropout < 0.0 || dense_dropout >= 1.0) {
      throw ConfigError("model: dropout probabilities must lie in [0,1)");
    }
    ShapeChain chain;
    std::size_t c = in_channels, h = in_height, w = in_width;
    bool spatial = true;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      const std::string where = "model: layer " + std::to_string(i + 1);
      switch (l.kind) {
        case LayerKind::kConv:
          if (!spatial) {
            throw ConfigError(where + " (conv" + std::to_string(l.width) +
                              "): input is already flattened");
          }
          c = l.width;
          chain.after_layer.push_back({c, h, w});
          break;
        case LayerKind::kPool:
          if (!spatial) throw ConfigError(where + " (pool): input is already flattened");
          if (h < 3 || w < 3) {
            throw ConfigError(where + " (pool): input " + std::to_string(h) + "x" +
                              std::to_string(w) + " smaller than the 3x3 window");
          }
          h = pooled_dim(h);
          w = pooled_dim(w);
          chain.after_layer.push_back({c, h, w});
          break;
        case LayerKind::kDense:
          if (spatial) {
            chain.flatten_width = c * h * w;
            spatial = false;
          }
          chain.after_layer.push_back({l.width});
          break;
      }
    }
    if (spatial) chain.flatten_width = c * h * w;
    return chain;
  }

  void validate() const { shape_chain(); }
};

template <typename T>
struct ForwardCaches;

/// A built network: parameter tensors, BN runtime state and the spec that
/// shaped them.
template <typename T>
class Model {
 public:
  struct ConvSite {
    Tensor<T> weight, bias;
    BatchNormState<T> bn;
  };
  struct DenseSite {
    Tensor<T> weight, bias;
    BatchNormState<T> bn;
  };

  ModelSpec spec;
  std::uint64_t rng_seed = 0;
  std::vector<ConvSite> convs;
  std::vector<DenseSite> denses;
  Tensor<T> head_weight, head_bias;

  /// Trainable tensors keyed by stable names; iteration order is the map
  /// order, which is deterministic.
  std::map<std::string, Tensor<T>*> parameters() {
    std::map<std::string, Tensor<T>*> out;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      const std::string p = "conv" + std::to_string(i + 1);
      out[p + ".weight"] = &convs[i].weight;
      out[p + ".bias"] = &convs[i].bias;
      out[p + ".bn.gamma"] = &convs[i].bn.gamma;
      out[p + ".bn.beta"] = &convs[i].bn.beta;
    }
    for (std::size_t i = 0; i < denses.size(); ++i) {
      const std::string p = "dense" + std::to_string(i + 1);
      out[p + ".weight"] = &denses[i].weight;
      out[p + ".bias"] = &denses[i].bias;
      out[p + ".bn.gamma"] = &denses[i].bn.gamma;
      out[p + ".bn.beta"] = &denses[i].bn.beta;
    }
    out["head.weight"] = &head_weight;
    out["head.bias"] = &head_bias;
    return out;
  }

  /// Non-trainable tensors (BN running statistics).
  std::map<std::string, Tensor<T>*> buffers() {
    std::map<std::string, Tensor<T>*> out;
    auto add = [&](const std::string& p, BatchNormState<T>& bn) {
      out[p + ".bn.running_mean"] = &bn.running_mean;
      out[p + ".bn.running_var"] = &bn.running_var;
    };
    for (std::size_t i = 0; i < convs.size(); ++i) add("conv" + std::to_string(i + 1), convs[i].bn);
    for (std::size_t i = 0; i < denses.size(); ++i) {
      add("dense" + std::to_string(i + 1), denses[i].bn);
    }
    return out;
  }

  std::uint64_t last_forward_token = 0;
};

/// Element count over all trainable tensors (weights, biases, BN gamma/beta).
template <typename T>
std::size_t param_count(Model<T>& model) {
  std::size_t n = 0;
  for (const auto& [name, t] : model.parameters()) n += t->size();
  return n;
}

/// Builds and initializes a model: He fan-in init (corrected for the leaky
/// slope) on hidden conv/dense weights, zero biases, BN gamma=1 beta=0 with
/// running stats (0,1). The classifier head starts at zero so that a fresh
/// model scores every class equally (initial loss is exactly ln K).
template <typename T>
Model<T> build_model(const ModelSpec& spec, std::uint64_t init_seed) {
  const ModelSpec::ShapeChain chain = spec.shape_chain();  // validates
  Model<T> model;
  model.spec = spec;
  model.rng_seed = init_seed;
  Rng rng(init_seed);

  const double slope_sq = spec.leaky_slope * spec.leaky_slope;
  std::size_t c = spec.in_channels;
  std::size_t flat = 0;
  bool spatial = true;
  for (const LayerSpec& l : spec.layers) {
    if (l.kind == LayerKind::kConv) {
      const std::size_t fan_in = c * 9;
      const double stddev = std::sqrt(2.0 / ((1.0 + slope_sq) * static_cast<double>(fan_in)));
      typename Model<T>::ConvSite site;
      site.weight = Tensor<T>::randn({l.width, c, 3, 3}, rng, stddev);
      site.bias = Tensor<T>({l.width});
      site.bn = BatchNormState<T>::init(l.width, spec.bn_momentum, spec.bn_epsilon);
      model.convs.push_back(std::move(site));
      c = l.width;
    } else if (l.kind == LayerKind::kDense) {
      if (spatial) {
        flat = chain.flatten_width;
        spatial = false;
      }
      const double stddev = std::sqrt(2.0 / ((1.0 + slope_sq) * static_cast<double>(flat)));
      typename Model<T>::DenseSite site;
      site.weight = Tensor<T>::randn({flat, l.width}, rng, stddev);
      site.bias = Tensor<T>({l.width});
      site.bn = BatchNormState<T>::init(l.width, spec.bn_momentum, spec.bn_epsilon);
      model.denses.push_back(std::move(site));
      flat = l.width;
    }
  }
  const std::size_t head_in = spatial ? chain.flatten_width : flat;
  model.head_weight = Tensor<T>({head_in, spec.num_classes});
  model.head_bias = Tensor<T>({spec.num_classes});
  return model;
}

namespace detail {
struct FlattenMark {
  Shape pre_shape;
};
}  // namespace detail

template <typename T>
struct ForwardCaches {
  using Item = std::variant<Conv2dCache<T>, BatchNormCache<T>, LeakyReluCache<T>, MaxPoolCache<T>,
                            DropoutCache<T>, DenseCache<T>, detail::FlattenMark>;
  struct Tagged {
    Item item;
    int site;  // conv/dense site index, -1 for head / untied ops
  };
  std::vector<Tagged> items;
  Mode mode = Mode::kInfer;
  std::uint64_t token = 0;
  bool consumed = false;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;
  ForwardCaches<T> caches;
};

/// Runs the network. Train mode updates BN running statistics, applies
/// dropout (seeded deterministically from `seed`) and records layer caches;
/// infer mode is pure and records nothing.
template <typename T>
ForwardResult<T> forward(Model<T>& model, Tensor<T> batch, Mode mode, std::uint64_t seed = 0) {
  const ModelSpec& spec = model.spec;
  if (batch.rank() != 4) {
    throw std::invalid_argument("forward: batch rank " + std::to_string(batch.rank()) +
                                ", expected 4");
  }
  if (batch.dim(1) != spec.in_channels || batch.dim(2) != spec.in_height ||
      batch.dim(3) != spec.in_width) {
    throw std::invalid_argument(
        "forward: batch shape " + shape_str(batch.shape()) + " does not match model input [N," +
        std::to_string(spec.in_channels) + "," + std::to_string(spec.in_height) + "," +
        std::to_string(spec.in_width) + "]");
  }

  const bool train = mode == Mode::kTrain;
  ForwardCaches<T> caches;
  caches.mode = mode;
  if (train) caches.token = ++model.last_forward_token;

  auto keep = [&](typename ForwardCaches<T>::Item&& item, int site) {
    if (train) caches.items.push_back({std::move(item), site});
  };

  Tensor<T> cur = std::move(batch);
  std::size_t conv_i = 0, dense_i = 0, op_i = 0;
  for (const LayerSpec& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::kConv: {
        auto& site = model.convs[conv_i];
        auto conv = conv2d(std::move(cur), site.weight, site.bias);
        keep(std::move(conv.cache), static_cast<int>(conv_i));
        auto bn = batchnorm(std::move(conv.y), site.bn, mode);
        keep(std::move(bn.cache), static_cast<int>(conv_i));
        auto act = leaky_relu(std::move(bn.y), spec.leaky_slope);
        keep(std::move(act.cache), -1);
        cur = std::move(act.y);
        ++conv_i;
        ++op_i;
        break;
      }
      case LayerKind::kPool: {
        auto pool = maxpool(cur);
        keep(std::move(pool.cache), -1);
        cur = std::move(pool.y);
        if (l.dropout) {
          auto drop = dropout(std::move(cur), spec.pool_dropout, mode, mix_seed(seed, op_i));
          keep(std::move(drop.cache), -1);
          cur = std::move(drop.y);
        }
        ++op_i;
        break;
      }
      case LayerKind::kDense: {
        if (cur.rank() != 2) {
          detail::FlattenMark mark{cur.shape()};
          const std::size_t n = cur.dim(0);
          cur = std::move(cur).reshaped({n, cur.size() / n});
          keep(std::move(mark), -1);
        }
        auto& site = model.denses[dense_i];
        auto fc = dense(std::move(cur), site.weight, site.bias);
        keep(std::move(fc.cache), static_cast<int>(dense_i));
        auto bn = batchnorm(std::move(fc.y), site.bn, mode);
        keep(std::move(bn.cache), static_cast<int>(dense_i));
        auto act = leaky_relu(std::move(bn.y), spec.leaky_slope);
        keep(std::move(act.cache), -1);
        auto drop = dropout(std::move(act.y), spec.dense_dropout, mode, mix_seed(seed, op_i));
        keep(std::move(drop.cache), -1);
        cur = std::move(drop.y);
        ++dense_i;
        ++op_i;
        break;
      }
    }
  }
  if (cur.rank() != 2) {
    detail::FlattenMark mark{cur.shape()};
    const std::size_t n = cur.dim(0);
    cur = std::move(cur).reshaped({n, cur.size() / n});
    keep(std::move(mark), -1);
  }
  auto head = dense(std::move(cur), model.head_weight, model.head_bias);
  keep(std::move(head.cache), -1);
  return {std::move(head.y), std::move(caches)};
}

/// Backpropagates grad wrt logits through the cached forward pass. Returns a
/// gradient map whose keys exactly match the parameter map keys.
template <typename T>
std::map<std::string, Tensor<T>> backward(Model<T>& model, const Tensor<T>& grad_logits,
                                          ForwardCaches<T>& caches) {
  if (caches.mode != Mode::kTrain) {
    throw std::logic_error("backward: caches were recorded in infer mode");
  }
  if (caches.token != model.last_forward_token) {
    throw std::logic_error("backward: stale caches (a newer train forward has run)");
  }
  if (caches.consumed) throw std::logic_error("backward: caches already consumed");
  caches.consumed = true;

  std::map<std::string, Tensor<T>> grads;
  Tensor<T> g = grad_logits;
  for (auto it = caches.items.rbegin(); it != caches.items.rend(); ++it) {
    const int site = it->site;
    std::visit(
        [&](auto& cache) {
          using C = std::decay_t<decltype(cache)>;
          if constexpr (std::is_same_v<C, DenseCache<T>>) {
            DenseGrads<T> dg = dense_backward(g, cache);
            const std::string p = site < 0 ? "head" : "dense" + std::to_string(site + 1);
            grads[p + ".weight"] = std::move(dg.w);
            grads[p + ".bias"] = std::move(dg.b);
            g = std::move(dg.x);
          } else if constexpr (std::is_same_v<C, Conv2dCache<T>>) {
            Conv2dGrads<T> cg = conv2d_backward(g, cache);
            const std::string p = "conv" + std::to_string(site + 1);
            grads[p + ".weight"] = std::move(cg.w);
            grads[p + ".bias"] = std::move(cg.b);
            g = std::move(cg.x);
          } else if constexpr (std::is_same_v<C, BatchNormCache<T>>) {
            BatchNormGrads<T> bg = batchnorm_backward(g, cache);
            const std::string p = (cache.xhat.rank() == 2 ? "dense" : "conv") +
                                  std::to_string(site + 1) + ".bn";
            grads[p + ".gamma"] = std::move(bg.gamma);
            grads[p + ".beta"] = std::move(bg.beta);
            g = std::move(bg.x);
          } else if constexpr (std::is_same_v<C, LeakyReluCache<T>>) {
            g = leaky_relu_backward(g, cache);
          } else if constexpr (std::is_same_v<C, MaxPoolCache<T>>) {
            g = maxpool_backward(g, cache);
          } else if constexpr (std::is_same_v<C, DropoutCache<T>>) {
            g = dropout_backward(g, cache);
          } else if constexpr (std::is_same_v<C, detail::FlattenMark>) {
            g = std::move(g).reshaped(cache.pre_shape);
          }
        },
        it->item);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

template <typename T>
void save_checkpoint(Model<T>& model, const std::string& path) {
  TensorFile file;
  file.put_string("format", "radnet-model");
  file.put_string("spec", model.spec.to_text());
  file.put_string("rng_seed", std::to_string(model.rng_seed));
  for (const auto& [name, t] : model.parameters()) file.put(name, *t);
  for (const auto& [name, t] : model.buffers()) file.put(name, *t);
  std::string counts;
  for (std::size_t i = 0; i < model.convs.size(); ++i) {
    counts += (counts.empty() ? "" : ",") + std::to_string(model.convs[i].bn.update_count);
  }
  for (std::size_t i = 0; i < model.denses.size(); ++i) {
    counts += (counts.empty() ? "" : ",") + std::to_string(model.denses[i].bn.update_count);
  }
  file.put_string("bn_counts", counts);
  file.write(path);
}

template <typename T>
Model<T> load_checkpoint(const std::string& path) {
  TensorFile file = TensorFile::read(path);
  if (!file.has_string("format") || file.get_string("format") != "radnet-model") {
    throw DataError("checkpoint: '" + path + "' is not a model checkpoint");
  }
  const ModelSpec spec = ModelSpec::from_text(file.get_string("spec"));
  std::uint64_t seed = 0;
  try {
    seed = std::stoull(file.get_string("rng_seed"));
  } catch (const std::exception&) {
    throw DataError("checkpoint: '" + path + "' has a malformed rng_seed record");
  }
  Model<T> model = build_model<T>(spec, seed);

  auto fetch = [&](const std::string& name, Tensor<T>* dst) {
    const Tensor<T>& src = file.get<T>(name);
    if (src.shape() != dst->shape()) {
      throw DataError("checkpoint: shape mismatch for '" + name + "': file has " +
                      shape_str(src.shape()) + ", spec implies " + shape_str(dst->shape()));
    }
    *dst = src;
  };
  for (const auto& [name, t] : model.parameters()) fetch(name, t);
  for (const auto& [name, t] : model.buffers()) fetch(name, t);

  std::vector<long> counts;
  {
    std::stringstream ss(file.get_string("bn_counts"));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) counts.push_back(std::stol(tok));
    }
  }
  if (counts.size() != model.convs.size() + model.denses.size()) {
    throw DataError("checkpoint: '" + path + "' bn_counts record does not match the spec");
  }
  for (std::size_t i = 0; i < model.convs.size(); ++i) model.convs[i].bn.update_count = counts[i];
  for (std::size_t i = 0; i < model.denses.size(); ++i) {
    model.denses[i].bn.update_count = counts[model.convs.size() + i];
  }
  return model;
}

}  // namespace radnet
