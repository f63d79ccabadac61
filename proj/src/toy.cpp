#include "raest/toy.hpp"

#include "raest/error.hpp"
#include "raest/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace raest {

namespace {

double normal(Rng& rng) {
  // Box-Muller; 1 - u keeps the log argument positive.
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor<float> random_weights(Rng& rng, std::size_t n, int fan_in) {
  Tensor<float> w(static_cast<Eigen::Index>(n));
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < n; ++i) w[static_cast<Eigen::Index>(i)] = static_cast<float>(normal(rng) * scale);
  return w;
}

struct Blueprint {
  Shape input;
  std::vector<Layer<float>> layers;
};

Blueprint blueprint(std::string_view preset, Rng& rng) {
  Blueprint b;
  if (preset == "conv") {
    b.input = {1, 6, 6};
    b.layers.push_back(conv2d<float>(b.input, 3, 3, 1, 0, random_weights(rng, 27, 9)));
    const Shape c = b.layers.back().output;
    b.layers.push_back(relu<float>(c));
    b.layers.push_back(max_pool<float>(c, 2, 2));
    const Shape p = b.layers.back().output;
    b.layers.push_back(flatten<float>(p));
    b.layers.push_back(fully_connected<float>(12, 3, random_weights(rng, 36, 12)));
  } else if (preset == "mlp") {
    b.input = {32, 1, 1};
    b.layers.push_back(fully_connected<float>(32, 12, random_weights(rng, 384, 32)));
    b.layers.push_back(relu<float>({12, 1, 1}));
    b.layers.push_back(fully_connected<float>(12, 3, random_weights(rng, 36, 12)));
  } else {
    throw ValidationError("unknown toy preset '" + std::string(preset) + "'");
  }
  return b;
}

template <class S>
Tensor<S> cast_tensor(const Tensor<float>& t) {
  Tensor<S> out(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) out[i] = static_cast<S>(t[i]);
  return out;
}

template <class S>
Layer<S> cast_layer(const Layer<float>& l, Tensor<S> weights, int shift) {
  Layer<S> out;
  out.kind = l.kind;
  out.input = l.input;
  out.output = l.output;
  out.kernel = l.kernel;
  out.stride = l.stride;
  out.padding = l.padding;
  out.shift = shift;
  out.weights = std::move(weights);
  return out;
}

// Symmetric int8 quantization of a float tensor with a power-of-two scale.
Tensor<std::int8_t> quantize(const Tensor<float>& t, int frac_bits) {
  Tensor<std::int8_t> out(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const long v = std::lround(std::ldexp(static_cast<double>(t[i]), frac_bits));
    out[i] = static_cast<std::int8_t>(std::clamp<long>(v, -127, 127));
  }
  return out;
}

constexpr int kInputFracBits = 7;  // inputs in [0,1) map to [0,127]

int weight_frac_bits(const Tensor<float>& w) {
  const float m = w.cwiseAbs().maxCoeff();
  int bits = 0;
  while (bits < 7 && std::ldexp(static_cast<double>(m), bits + 1) <= 127.0) ++bits;
  return bits;
}

// Chooses per-layer shifts so the int8 activations stay mostly in range on
// the calibration inputs.
Network<std::int8_t> to_int8(const Blueprint& b, const std::vector<Tensor<float>>& calibration) {
  std::vector<Layer<std::int8_t>> layers;
  std::vector<Tensor<std::int8_t>> acts;
  for (const auto& x : calibration) acts.push_back(quantize(x, kInputFracBits));
  for (const auto& l : b.layers) {
    Tensor<std::int8_t> w;
    int shift = 0;
    if (l.kind == LayerKind::Conv2d || l.kind == LayerKind::FullyConnected) {
      w = quantize(l.weights, weight_frac_bits(l.weights));
      // Smallest shift that keeps the 99th-percentile accumulator peak
      // within int8 range.
      std::vector<std::int64_t> peaks;
      for (const auto& a : acts) {
        std::int64_t peak = 0;
        const auto n_out = static_cast<Eigen::Index>(l.output.size());
        for (Eigen::Index o = 0; o < n_out; ++o) {
          std::int64_t acc = 0;
          if (l.kind == LayerKind::FullyConnected) {
            const Eigen::Index n_in = static_cast<Eigen::Index>(l.input.size());
            for (Eigen::Index i = 0; i < n_in; ++i) acc += static_cast<std::int64_t>(w[o * n_in + i]) * a[i];
          } else {
            const int oc = static_cast<int>(o / (l.output.height * l.output.width));
            const int oy = static_cast<int>(o / l.output.width % l.output.height);
            const int ox = static_cast<int>(o % l.output.width);
            for (int ci = 0; ci < l.input.channels; ++ci)
              for (int ky = 0; ky < l.kernel; ++ky)
                for (int kx = 0; kx < l.kernel; ++kx) {
                  const int iy = oy * l.stride - l.padding + ky, ix = ox * l.stride - l.padding + kx;
                  if (iy < 0 || ix < 0 || iy >= l.input.height || ix >= l.input.width) continue;
                  acc += static_cast<std::int64_t>(w[((oc * l.input.channels + ci) * l.kernel + ky) * l.kernel + kx]) *
                         a[(ci * l.input.height + iy) * l.input.width + ix];
                }
          }
          peak = std::max(peak, acc < 0 ? -acc : acc);
        }
        peaks.push_back(peak);
      }
      std::sort(peaks.begin(), peaks.end());
      const std::int64_t p99 = peaks.empty() ? 0 : peaks[peaks.size() * 99 / 100];
      while (shift < 24 && (p99 >> shift) > 100) ++shift;
    }
    auto layer = cast_layer<std::int8_t>(l, w, shift);
    const Network<std::int8_t> step(l.input, {layer});
    for (auto& a : acts) a = forward_trace(step, a).back();
    layers.push_back(std::move(layer));
  }
  return Network<std::int8_t>(b.input, std::move(layers));
}

template <class S>
Network<S> to_float_format(const Blueprint& b) {
  std::vector<Layer<S>> layers;
  for (const auto& l : b.layers) layers.push_back(cast_layer<S>(l, cast_tensor<S>(l.weights), 0));
  return Network<S>(b.input, std::move(layers));
}

}  // namespace

std::vector<std::string> toy_presets() { return {"conv", "mlp"}; }

AcceleratorConfig toy_accelerator(NumericFormat format) {
  AcceleratorConfig c;
  c.numeric_format = format;
  c.bit_width = format_width(format);
  c.ff_count[FFType::InputActivation] = 300;
  c.ff_count[FFType::Weight] = 300;
  c.ff_count[FFType::OutputActivation] = 200;
  c.ff_count[FFType::ControlGlobal] = 100;
  c.ff_count[FFType::ControlLocal] = 50;
  for (FFType t : kFFTypes) c.raw_fit[t] = 600.0;
  c.reuse[FFType::InputActivation] = 4;
  c.reuse[FFType::Weight] = 4;
  c.reuse[FFType::OutputActivation] = 1;
  c.reuse[FFType::ControlGlobal] = 1;
  c.reuse[FFType::ControlLocal] = 1;
  c.control_global_fraction = 2.0 / 3.0;
  return c;
}

ToyBundle make_toy(std::string_view preset, std::uint64_t seed, const ToyOptions& options) {
  if (options.evalset_size == 0) throw ValidationError("evalset size must be positive");
  if (!(options.label_noise >= 0.0 && options.label_noise < 1.0)) throw ValidationError("label noise must lie in [0,1)");
  Rng rng(seed, 1);
  Blueprint b = blueprint(preset, rng);
  const int classes = static_cast<int>(b.layers.back().output.size());

  // One random prototype input per class. The classifier rows are the
  // centered features of the prototypes (template matching), so noisy copies
  // of a prototype tend to land in its class.
  std::vector<Tensor<float>> prototypes;
  for (int c = 0; c < classes; ++c) {
    Tensor<float> x(static_cast<Eigen::Index>(b.input.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());
    prototypes.push_back(std::move(x));
  }
  {
    const Network<float> body(b.input, std::vector<Layer<float>>(b.layers.begin(), b.layers.end() - 1));
    std::vector<Tensor<float>> feats;
    for (const auto& p : prototypes) feats.push_back(forward_trace(body, p).back());
    Tensor<float> mean = Tensor<float>::Zero(feats.front().size());
    for (const auto& f : feats) mean += f;
    mean /= static_cast<float>(classes);
    auto& w = b.layers.back().weights;
    const Eigen::Index n_in = feats.front().size();
    for (int c = 0; c < classes; ++c) {
      Tensor<float> row = feats[static_cast<std::size_t>(c)] - mean;
      // Orthogonal to the mean feature, so the shared component of every
      // input contributes nothing to the logits.
      row -= (row.dot(mean) / mean.squaredNorm()) * mean;
      const float norm = row.norm();
      if (norm > 0.0f) row *= 2.0f / norm;
      for (Eigen::Index i = 0; i < n_in; ++i) w[c * n_in + i] = row[i];
    }
  }
  const Network<float> teacher(b.input, b.layers);

  // Draw noisy prototype copies until every class has its share of
  // confident examples.
  constexpr float kNoise = 0.6f;
  const std::size_t per_class = (options.evalset_size + static_cast<std::size_t>(classes) - 1) / static_cast<std::size_t>(classes);
  std::vector<std::size_t> count(static_cast<std::size_t>(classes), 0);
  std::vector<Tensor<float>> inputs;
  std::vector<int> labels;
  Rng data_rng(seed, 2);
  const std::size_t max_tries = options.evalset_size * 10'000;
  for (std::size_t tries = 0; inputs.size() < options.evalset_size; ++tries) {
    if (tries >= max_tries) throw Error("toy generator could not find enough confident inputs; lower min_margin");
    const auto& proto = prototypes[tries % static_cast<std::size_t>(classes)];
    Tensor<float> x(static_cast<Eigen::Index>(b.input.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = proto[i] + kNoise * (data_rng.uniform() - 0.5);
      x[i] = static_cast<float>(std::clamp(v, 0.0, 0.999));
    }
    const Tensor<float> logits = forward_trace(teacher, x).back();
    const int label = argmax(logits);
    float second = -INFINITY;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      if (i != label) second = std::max(second, logits[i]);
    }
    if (logits[label] - second < options.min_margin) continue;
    if (count[static_cast<std::size_t>(label)] >= per_class) continue;
    ++count[static_cast<std::size_t>(label)];
    inputs.push_back(std::move(x));
    labels.push_back(label);
  }
  Rng noise_rng(seed, 3);
  for (auto& l : labels) {
    if (noise_rng.uniform() < options.label_noise) {
      l = (l + 1 + static_cast<int>(noise_rng.below(static_cast<std::uint64_t>(classes - 1)))) % classes;
    }
  }

  ToyBundle out{MicroNetwork(teacher), EvalSet(EvalData<float>{}), {}};
  auto make_set = [&](auto tag, auto convert) {
    using S = decltype(tag);
    EvalData<S> d;
    d.shape = b.input;
    d.num_classes = classes;
    d.labels = labels;
    for (const auto& x : inputs) d.inputs.push_back(convert(x));
    return EvalSet(std::move(d));
  };
  switch (options.format) {
    case NumericFormat::FP32:
      out.net = MicroNetwork(to_float_format<float>(b));
      out.evalset = make_set(float{}, [](const Tensor<float>& x) { return x; });
      break;
    case NumericFormat::FP16:
      out.net = MicroNetwork(to_float_format<half>(b));
      out.evalset = make_set(half{}, [](const Tensor<float>& x) { return cast_tensor<half>(x); });
      break;
    case NumericFormat::INT8:
      out.net = MicroNetwork(to_int8(b, inputs));
      out.evalset = make_set(std::int8_t{}, [](const Tensor<float>& x) { return quantize(x, kInputFracBits); });
      break;
  }
  out.config.name = std::string(preset);
  out.config.accel = toy_accelerator(options.format);
  return out;
}

}  // namespace raest
