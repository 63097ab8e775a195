#pragma once

// Dense+ReLU feature network. Layer index 0 is the identity (input) map and
// index l >= 1 is the post-activation output of the l-th dense layer; the
// last layer emits logits.
//
// Parameters are stored in single precision (the on-disk format is f32);
// all arithmetic is carried out in double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "rails/binary_io.hpp"
#include "rails/dataset.hpp"
#include "rails/error.hpp"
#include "rails/numerics.hpp"
#include "rails/random.hpp"

namespace rails {

enum class Activation : std::uint8_t { none = 0, relu = 1 };

struct DenseLayer {
  std::size_t rows = 0;  // output width
  std::size_t cols = 0;  // input width
  std::vector<float> weights;  // rows x cols, row-major
  std::vector<float> bias;     // rows
  Activation activation = Activation::relu;

  bool operator==(const DenseLayer&) const = default;
};

class FeatureNetwork;

// Ordered, duplicate-free set of layer indices valid for a given network.
class LayerSelection {
 public:
  LayerSelection(std::vector<int> indices, int max_layer) : indices_(std::move(indices)) {
    std::sort(indices_.begin(), indices_.end());
    indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
    detail::require_config(!indices_.empty(), "layer selection is empty");
    detail::require_config(indices_.front() >= 0 && indices_.back() <= max_layer,
                           "layer selection out of range [0, " + std::to_string(max_layer) + "]");
  }

  const std::vector<int>& indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  int operator[](std::size_t i) const { return indices_[i]; }
  auto begin() const { return indices_.begin(); }
  auto end() const { return indices_.end(); }

  bool operator==(const LayerSelection&) const = default;

 private:
  std::vector<int> indices_;
};

class FeatureNetwork {
 public:
  FeatureNetwork() = default;

  explicit FeatureNetwork(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ValidationError("network has no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.rows == 0 || l.cols == 0) throw ValidationError("layer " + std::to_string(i + 1) + " has a zero dimension");
      if (l.weights.size() != l.rows * l.cols || l.bias.size() != l.rows)
        throw ValidationError("layer " + std::to_string(i + 1) + " parameter count does not match its shape");
      if (i > 0 && l.cols != layers_[i - 1].rows)
        throw ValidationError("layer " + std::to_string(i + 1) + " expects input width " + std::to_string(l.cols) +
                              " but layer " + std::to_string(i) + " emits " + std::to_string(layers_[i - 1].rows));
    }
  }

  // Number of dense layers (L). Valid feature-layer indices are 0..L.
  int depth() const { return static_cast<int>(layers_.size()); }
  std::size_t input_dim() const { return layers_.front().cols; }
  int class_count() const { return static_cast<int>(layers_.back().rows); }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t width(int layer) const {
    check_layer(layer);
    return layer == 0 ? input_dim() : layers_[static_cast<std::size_t>(layer - 1)].rows;
  }

  // All hidden layers plus the input layer.
  LayerSelection default_layers() const {
    std::vector<int> idx(static_cast<std::size_t>(depth()));
    std::iota(idx.begin(), idx.end(), 0);
    return LayerSelection(std::move(idx), depth());
  }

  // f_l(x).
  FeatureVector activation(const FeatureVector& x, int layer) const {
    check_input(x);
    check_layer(layer);
    FeatureVector cur = x;
    for (int l = 0; l < layer; ++l) cur = apply(layers_[static_cast<std::size_t>(l)], cur);
    return cur;
  }

  std::map<int, FeatureVector> forward_activations(const FeatureVector& x, const LayerSelection& layers) const {
    check_input(x);
    detail::require_config(layers.indices().back() <= depth(), "layer selection exceeds network depth");
    std::map<int, FeatureVector> out;
    FeatureVector cur = x;
    int at = 0;
    for (int want : layers) {
      for (; at < want; ++at) cur = apply(layers_[static_cast<std::size_t>(at)], cur);
      out.emplace(want, cur);
    }
    return out;
  }

  FeatureVector logits(const FeatureVector& x) const { return activation(x, depth()); }

  int predict(const FeatureVector& x) const {
    const auto z = logits(x);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }

  // Softmax cross-entropy of the logits against label y.
  double loss(const FeatureVector& x, int y) const {
    check_label(y);
    const auto z = logits(x);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s) - z[static_cast<std::size_t>(y)];
  }

  // d loss(x, y) / dx by backpropagation.
  FeatureVector loss_gradient(const FeatureVector& x, int y) const {
    check_input(x);
    check_label(y);
    std::vector<FeatureVector> acts{x};
    acts.reserve(layers_.size() + 1);
    for (const auto& l : layers_) acts.push_back(apply(l, acts.back()));

    FeatureVector grad = softmax(acts.back());
    grad[static_cast<std::size_t>(y)] -= 1.0;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& l = layers_[li];
      if (l.activation == Activation::relu) {
        for (std::size_t r = 0; r < l.rows; ++r)
          if (acts[li + 1][r] <= 0.0) grad[r] = 0.0;
      }
      FeatureVector below(l.cols, 0.0);
      for (std::size_t r = 0; r < l.rows; ++r) {
        const double g = grad[r];
        if (g == 0.0) continue;
        const float* w = &l.weights[r * l.cols];
        for (std::size_t c = 0; c < l.cols; ++c) below[c] += g * w[c];
      }
      grad = std::move(below);
    }
    return grad;
  }

  static FeatureVector softmax(const FeatureVector& z) {
    const double m = *std::max_element(z.begin(), z.end());
    FeatureVector p(z.size());
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
    for (double& v : p) v /= s;
    return p;
  }

  // Dot products use four interleaved partial sums (c mod 4), combined as
  // bias + ((s0 + s1) + (s2 + s3)).
  static FeatureVector apply(const DenseLayer& l, const FeatureVector& in) {
    FeatureVector out(l.rows);
    const std::size_t n = l.cols, n4 = n - n % 4;
    const double* x = in.data();
    for (std::size_t r = 0; r < l.rows; ++r) {
      const float* w = &l.weights[r * n];
      double s[4] = {0.0, 0.0, 0.0, 0.0};
      std::size_t c = 0;
      for (; c < n4; c += 4) {
        s[0] += static_cast<double>(w[c]) * x[c];
        s[1] += static_cast<double>(w[c + 1]) * x[c + 1];
        s[2] += static_cast<double>(w[c + 2]) * x[c + 2];
        s[3] += static_cast<double>(w[c + 3]) * x[c + 3];
      }
      for (; c < n; ++c) s[c % 4] += static_cast<double>(w[c]) * x[c];
      const double v = static_cast<double>(l.bias[r]) + ((s[0] + s[1]) + (s[2] + s[3]));
      out[r] = (l.activation == Activation::relu && v < 0.0) ? 0.0 : v;
    }
    return out;
  }

  bool operator==(const FeatureNetwork&) const = default;

 private:
  void check_input(const FeatureVector& x) const {
    detail::require_dims(!layers_.empty(), "network is empty");
    detail::require_dims(x.size() == input_dim(), "network input has width " + std::to_string(x.size()) +
                                                      ", expected " + std::to_string(input_dim()));
  }
  void check_layer(int layer) const {
    detail::require_config(layer >= 0 && layer <= depth(), "layer index " + std::to_string(layer) + " out of range");
  }
  void check_label(int y) const {
    detail::require_dims(y >= 0 && y < class_count(), "label " + std::to_string(y) + " out of range");
  }

  std::vector<DenseLayer> layers_;
};

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
// Hidden layers use ReLU, the output layer none.
inline FeatureNetwork init_network(const std::vector<std::size_t>& arch, std::uint64_t seed) {
  detail::require_config(arch.size() >= 2, "architecture needs at least input and output widths");
  auto rng = derive_stream(seed, 0, Purpose::init);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < arch.size(); ++i) {
    DenseLayer l;
    l.cols = arch[i];
    l.rows = arch[i + 1];
    detail::require_config(l.rows > 0 && l.cols > 0, "architecture widths must be positive");
    l.activation = (i + 2 == arch.size()) ? Activation::none : Activation::relu;
    const double limit = std::sqrt(6.0 / static_cast<double>(l.rows + l.cols));
    l.weights.resize(l.rows * l.cols);
    for (auto& w : l.weights) w = static_cast<float>(rng.uniform(-limit, limit));
    l.bias.assign(l.rows, 0.0f);
    layers.push_back(std::move(l));
  }
  return FeatureNetwork(std::move(layers));
}

struct TrainOptions {
  std::size_t epochs = 20;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

// Mini-batch SGD on softmax cross-entropy. Deterministic given the seed.
inline FeatureNetwork train_network(const Dataset& train, const std::vector<std::size_t>& arch,
                                    const TrainOptions& opt) {
  if (train.empty()) throw DataError("train_network: empty dataset");
  detail::require_config(!arch.empty() && arch.front() == train.dim(), "architecture input width does not match data");
  detail::require_config(static_cast<int>(arch.back()) == train.class_count(),
                         "architecture output width does not match class count");
  detail::require_config(opt.batch_size >= 1, "batch size must be positive");
  detail::require_config(opt.learning_rate > 0.0, "learning rate must be positive");

  FeatureNetwork init = init_network(arch, opt.seed);
  if (opt.epochs == 0) return init;
  std::vector<DenseLayer> layers = init.layers();
  const std::size_t depth = layers.size();

  std::vector<std::vector<double>> gw(depth), gb(depth);
  for (std::size_t i = 0; i < depth; ++i) {
    gw[i].resize(layers[i].weights.size());
    gb[i].resize(layers[i].bias.size());
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto shuffle_root = derive_stream(opt.seed, 0, Purpose::shuffle);

  std::vector<FeatureVector> acts(depth + 1);
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    auto rng = shuffle_root.fork({epoch});
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opt.batch_size);
      for (std::size_t i = 0; i < depth; ++i) {
        std::fill(gw[i].begin(), gw[i].end(), 0.0);
        std::fill(gb[i].begin(), gb[i].end(), 0.0);
      }
      for (std::size_t b = start; b < stop; ++b) {
        const auto& ex = train[order[b]];
        acts[0] = ex.x;
        for (std::size_t i = 0; i < depth; ++i) acts[i + 1] = FeatureNetwork::apply(layers[i], acts[i]);
        FeatureVector delta = FeatureNetwork::softmax(acts[depth]);
        delta[static_cast<std::size_t>(ex.label)] -= 1.0;
        for (std::size_t i = depth; i-- > 0;) {
          const auto& l = layers[i];
          if (l.activation == Activation::relu)
            for (std::size_t r = 0; r < l.rows; ++r)
              if (acts[i + 1][r] <= 0.0) delta[r] = 0.0;
          FeatureVector below(i > 0 ? l.cols : 0, 0.0);
          for (std::size_t r = 0; r < l.rows; ++r) {
            const double d = delta[r];
            if (d == 0.0) continue;
            gb[i][r] += d;
            double* g = &gw[i][r * l.cols];
            const double* a = acts[i].data();
            for (std::size_t c = 0; c < l.cols; ++c) g[c] += d * a[c];
            if (i > 0) {
              const float* w = &l.weights[r * l.cols];
              for (std::size_t c = 0; c < l.cols; ++c) below[c] += d * w[c];
            }
          }
          delta = std::move(below);
        }
      }
      const double step = opt.learning_rate / static_cast<double>(stop - start);
      for (std::size_t i = 0; i < depth; ++i) {
        auto& l = layers[i];
        for (std::size_t j = 0; j < l.weights.size(); ++j) l.weights[j] -= static_cast<float>(step * gw[i][j]);
        for (std::size_t j = 0; j < l.bias.size(); ++j) l.bias[j] -= static_cast<float>(step * gb[i][j]);
      }
    }
  }
  return FeatureNetwork(std::move(layers));
}

inline double accuracy(const FeatureNetwork& net, const Dataset& data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& ex : data.examples()) hits += net.predict(ex.x) == ex.label;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

// Weight file: "RAILSNET", u32 layer count, then per layer u32 rows, u32 cols,
// u8 activation, rows*cols f32 weights (row-major), rows f32 biases. All
// little-endian.
inline constexpr std::string_view kWeightMagic = "RAILSNET";

inline std::vector<char> serialize_weights(const FeatureNetwork& net) {
  detail::ByteWriter w;
  w.bytes(kWeightMagic);
  w.u32_le(static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    w.u32_le(static_cast<std::uint32_t>(l.rows));
    w.u32_le(static_cast<std::uint32_t>(l.cols));
    w.u8(static_cast<std::uint8_t>(l.activation));
    for (float v : l.weights) w.f32_le(v);
    for (float v : l.bias) w.f32_le(v);
  }
  return w.data();
}

inline void save_weights(const FeatureNetwork& net, const std::filesystem::path& path) {
  detail::write_file(path, serialize_weights(net));
}

inline FeatureNetwork parse_weights(detail::ByteReader in) {
  if (in.bytes(kWeightMagic.size()) != kWeightMagic) throw FormatError(in.source() + ": bad magic, not a RAILSNET file");
  const std::uint32_t count = in.u32_le();
  if (count == 0) throw ValidationError(in.source() + ": zero layers");
  std::vector<DenseLayer> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    DenseLayer l;
    l.rows = in.u32_le();
    l.cols = in.u32_le();
    const auto code = in.u8();
    if (code > 1) throw FormatError(in.source() + ": unknown activation code " + std::to_string(code));
    l.activation = static_cast<Activation>(code);
    const std::uint64_t n = std::uint64_t{l.rows} * l.cols;
    if ((n + l.rows) * 4 > in.remaining())
      throw FormatError(in.source() + ": truncated at offset " + std::to_string(in.offset()) + " (layer " +
                        std::to_string(i + 1) + " needs " + std::to_string((n + l.rows) * 4) + " bytes)");
    l.weights.resize(n);
    for (auto& v : l.weights) v = in.f32_le();
    l.bias.resize(l.rows);
    for (auto& v : l.bias) v = in.f32_le();
    layers.push_back(std::move(l));
  }
  if (in.remaining() != 0) throw FormatError(in.source() + ": trailing bytes after last layer");
  return FeatureNetwork(std::move(layers));  // throws ValidationError on unchained dims
}

inline FeatureNetwork load_weights(const std::filesystem::path& path) {
  return parse_weights(detail::ByteReader::from_file(path));
}

}  // namespace rails
