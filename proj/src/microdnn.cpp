#include "raest/microdnn.hpp"

#include "raest/error.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

namespace raest {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::FullyConnected: return "fc";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Softmax: return "softmax";
  }
  return "unknown";
}

namespace {

// Number of output positions o in [0, out) whose window tap k lands inside
// [0, in) for the given stride and padding.
std::uint64_t valid_taps(int k, int out, int stride, int pad, int in) {
  std::uint64_t n = 0;
  for (int o = 0; o < out; ++o) {
    const int i = o * stride - pad + k;
    if (i >= 0 && i < in) ++n;
  }
  return n;
}

// Number of (o, k) pairs with o * stride - pad + k == target.
std::uint64_t covering_taps(int target, int out, int kernel, int stride, int pad) {
  std::uint64_t n = 0;
  for (int o = 0; o < out; ++o) {
    const int k = target - (o * stride - pad);
    if (k >= 0 && k < kernel) ++n;
  }
  return n;
}

int conv_out(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace

template <class Scalar>
std::uint64_t Layer<Scalar>::var_count(FFType t) const {
  if (!has_variables()) return 0;
  switch (t) {
    case FFType::InputActivation: return input.size();
    case FFType::Weight: return static_cast<std::uint64_t>(weights.size());
    case FFType::OutputActivation: return output.size();
    default: return 0;
  }
}

template <class Scalar>
std::uint64_t Layer<Scalar>::mac_count() const {
  switch (kind) {
    case LayerKind::Conv2d:
      return output.size() * static_cast<std::uint64_t>(input.channels) *
             static_cast<std::uint64_t>(kernel) * static_cast<std::uint64_t>(kernel);
    case LayerKind::FullyConnected: return input.size() * output.size();
    case LayerKind::MaxPool:
      return output.size() * static_cast<std::uint64_t>(kernel) * static_cast<std::uint64_t>(kernel);
    case LayerKind::Relu:
    case LayerKind::Softmax: return input.size();
    case LayerKind::Flatten: return 0;
  }
  return 0;
}

template <class Scalar>
std::uint64_t Layer<Scalar>::uses(FFType t, std::uint64_t index) const {
  if (index >= var_count(t)) throw ValidationError("variable index out of range");
  if (t == FFType::OutputActivation) return 1;
  switch (kind) {
    case LayerKind::Conv2d: {
      const std::uint64_t k = static_cast<std::uint64_t>(kernel);
      if (t == FFType::Weight) {
        const int kx = static_cast<int>(index % k);
        const int ky = static_cast<int>((index / k) % k);
        return valid_taps(ky, output.height, stride, padding, input.height) *
               valid_taps(kx, output.width, stride, padding, input.width);
      }
      const int ix = static_cast<int>(index % static_cast<std::uint64_t>(input.width));
      const int iy = static_cast<int>((index / static_cast<std::uint64_t>(input.width)) %
                                      static_cast<std::uint64_t>(input.height));
      return static_cast<std::uint64_t>(output.channels) *
             covering_taps(iy, output.height, kernel, stride, padding) *
             covering_taps(ix, output.width, kernel, stride, padding);
    }
    case LayerKind::FullyConnected:
      return t == FFType::Weight ? 1 : output.size();
    case LayerKind::MaxPool: {
      const int ix = static_cast<int>(index % static_cast<std::uint64_t>(input.width));
      const int iy = static_cast<int>((index / static_cast<std::uint64_t>(input.width)) %
                                      static_cast<std::uint64_t>(input.height));
      return covering_taps(iy, output.height, kernel, stride, 0) *
             covering_taps(ix, output.width, kernel, stride, 0);
    }
    case LayerKind::Relu:
    case LayerKind::Softmax: return 1;
    case LayerKind::Flatten: return 0;
  }
  return 0;
}

template <class Scalar>
Layer<Scalar> conv2d(Shape input, int out_channels, int kernel, int stride, int padding,
                     Tensor<Scalar> weights, int shift) {
  if (kernel < 1 || stride < 1 || padding < 0 || out_channels < 1) {
    throw ValidationError("conv2d: invalid geometry");
  }
  Layer<Scalar> l;
  l.kind = LayerKind::Conv2d;
  l.input = input;
  l.output = {out_channels, conv_out(input.height, kernel, stride, padding),
              conv_out(input.width, kernel, stride, padding)};
  if (l.output.height < 1 || l.output.width < 1) throw ValidationError("conv2d: kernel larger than input");
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.shift = shift;
  const auto expected = static_cast<Eigen::Index>(out_channels) * input.channels * kernel * kernel;
  if (weights.size() != expected) throw ValidationError("conv2d: weight count mismatch");
  l.weights = std::move(weights);
  return l;
}

template <class Scalar>
Layer<Scalar> fully_connected(int fan_in, int fan_out, Tensor<Scalar> weights, int shift) {
  if (fan_in < 1 || fan_out < 1) throw ValidationError("fc: invalid geometry");
  if (weights.size() != static_cast<Eigen::Index>(fan_in) * fan_out) {
    throw ValidationError("fc: weight count mismatch");
  }
  Layer<Scalar> l;
  l.kind = LayerKind::FullyConnected;
  l.input = {fan_in, 1, 1};
  l.output = {fan_out, 1, 1};
  l.shift = shift;
  l.weights = std::move(weights);
  return l;
}

template <class Scalar>
Layer<Scalar> relu(Shape shape) {
  Layer<Scalar> l;
  l.kind = LayerKind::Relu;
  l.input = shape;
  l.output = shape;
  return l;
}

template <class Scalar>
Layer<Scalar> max_pool(Shape input, int kernel, int stride) {
  if (kernel < 1 || stride < 1) throw ValidationError("maxpool: invalid geometry");
  Layer<Scalar> l;
  l.kind = LayerKind::MaxPool;
  l.input = input;
  l.output = {input.channels, conv_out(input.height, kernel, stride, 0),
              conv_out(input.width, kernel, stride, 0)};
  if (l.output.height < 1 || l.output.width < 1) throw ValidationError("maxpool: kernel larger than input");
  l.kernel = kernel;
  l.stride = stride;
  return l;
}

template <class Scalar>
Layer<Scalar> flatten(Shape input) {
  Layer<Scalar> l;
  l.kind = LayerKind::Flatten;
  l.input = input;
  l.output = {static_cast<int>(input.size()), 1, 1};
  return l;
}

template <class Scalar>
Layer<Scalar> softmax(int size) {
  if constexpr (std::is_same_v<Scalar, std::int8_t>) {
    throw ValidationError("softmax: unsupported for int8");
  }
  Layer<Scalar> l;
  l.kind = LayerKind::Softmax;
  l.input = {size, 1, 1};
  l.output = {size, 1, 1};
  return l;
}

template <class Scalar>
Network<Scalar>::Network(Shape input, std::vector<Layer<Scalar>> layers)
    : input_(input), layers_(std::move(layers)) {
  if (layers_.empty()) throw ValidationError("network has no layers");
  Shape current = input_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const bool flat_ok = l.input.size() == current.size() &&
                         (l.kind == LayerKind::FullyConnected || l.kind == LayerKind::Softmax);
    if (!(l.input == current) && !flat_ok) {
      throw ValidationError("layer " + std::to_string(i) + " (" + std::string(to_string(l.kind)) +
                            "): input shape does not match previous output");
    }
    if constexpr (std::is_same_v<Scalar, std::int8_t>) {
      if (l.kind == LayerKind::Softmax) throw ValidationError("softmax: unsupported for int8");
    }
    current = l.output;
  }
}

// ---------------------------------------------------------------------------
// Forward pass

namespace {

template <class Scalar>
struct Probe {
  FFType type;
  std::uint64_t index;
  int bit;
  std::uint64_t begin;
  std::uint64_t end;
  std::uint64_t seen = 0;

  Scalar read(FFType t, std::uint64_t i, Scalar v) {
    if (t != type || i != index) return v;
    const Scalar out = (seen >= begin && seen < end) ? flip_bit(v, bit) : v;
    ++seen;
    return out;
  }
};

template <class Scalar>
Scalar probed(Probe<Scalar>* probe, FFType t, std::uint64_t i, Scalar v) {
  return probe ? probe->read(t, i, v) : v;
}

template <class Scalar>
void run_layer(const Layer<Scalar>& l, const Tensor<Scalar>& in, Tensor<Scalar>& out,
               Probe<Scalar>* probe) {
  using A = Arith<Scalar>;
  out.resize(static_cast<Eigen::Index>(l.output.size()));
  constexpr auto IA = FFType::InputActivation;
  constexpr auto W = FFType::Weight;
  constexpr auto OA = FFType::OutputActivation;

  switch (l.kind) {
    case LayerKind::Conv2d: {
      const int cin = l.input.channels, h = l.input.height, w = l.input.width;
      const int k = l.kernel;
      for (int co = 0; co < l.output.channels; ++co) {
        for (int oy = 0; oy < l.output.height; ++oy) {
          for (int ox = 0; ox < l.output.width; ++ox) {
            auto acc = A::zero();
            for (int ci = 0; ci < cin; ++ci) {
              for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * l.stride - l.padding + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int ix = ox * l.stride - l.padding + kx;
                  if (ix < 0 || ix >= w) continue;
                  const auto widx = static_cast<std::uint64_t>(((co * cin + ci) * k + ky) * k + kx);
                  const auto iidx = static_cast<std::uint64_t>((ci * h + iy) * w + ix);
                  const Scalar wv = probed(probe, W, widx, l.weights[static_cast<Eigen::Index>(widx)]);
                  const Scalar xv = probed(probe, IA, iidx, in[static_cast<Eigen::Index>(iidx)]);
                  acc = A::mac(acc, wv, xv);
                }
              }
            }
            const auto oidx = static_cast<std::uint64_t>((co * l.output.height + oy) * l.output.width + ox);
            out[static_cast<Eigen::Index>(oidx)] = probed(probe, OA, oidx, A::finish(acc, l.shift));
          }
        }
      }
      break;
    }
    case LayerKind::FullyConnected: {
      const auto n = static_cast<std::uint64_t>(l.input.size());
      const auto m = static_cast<std::uint64_t>(l.output.size());
      for (std::uint64_t o = 0; o < m; ++o) {
        auto acc = A::zero();
        for (std::uint64_t i = 0; i < n; ++i) {
          const std::uint64_t widx = o * n + i;
          const Scalar wv = probed(probe, W, widx, l.weights[static_cast<Eigen::Index>(widx)]);
          const Scalar xv = probed(probe, IA, i, in[static_cast<Eigen::Index>(i)]);
          acc = A::mac(acc, wv, xv);
        }
        out[static_cast<Eigen::Index>(o)] = probed(probe, OA, o, A::finish(acc, l.shift));
      }
      break;
    }
    case LayerKind::Relu: {
      for (Eigen::Index i = 0; i < in.size(); ++i) {
        const auto u = static_cast<std::uint64_t>(i);
        out[i] = probed(probe, OA, u, A::relu(probed(probe, IA, u, in[i])));
      }
      break;
    }
    case LayerKind::MaxPool: {
      const int h = l.input.height, w = l.input.width;
      for (int c = 0; c < l.output.channels; ++c) {
        for (int oy = 0; oy < l.output.height; ++oy) {
          for (int ox = 0; ox < l.output.width; ++ox) {
            Scalar best{};
            bool first = true;
            for (int ky = 0; ky < l.kernel; ++ky) {
              const int iy = oy * l.stride + ky;
              if (iy >= h) continue;
              for (int kx = 0; kx < l.kernel; ++kx) {
                const int ix = ox * l.stride + kx;
                if (ix >= w) continue;
                const auto iidx = static_cast<std::uint64_t>((c * h + iy) * w + ix);
                const Scalar v = probed(probe, IA, iidx, in[static_cast<Eigen::Index>(iidx)]);
                if (first || A::greater(v, best)) best = v;
                first = false;
              }
            }
            const auto oidx = static_cast<std::uint64_t>((c * l.output.height + oy) * l.output.width + ox);
            out[static_cast<Eigen::Index>(oidx)] = probed(probe, OA, oidx, best);
          }
        }
      }
      break;
    }
    case LayerKind::Flatten: {
      out = in;
      break;
    }
    case LayerKind::Softmax: {
      if constexpr (!std::is_same_v<Scalar, std::int8_t>) {
        const Eigen::Index n = in.size();
        std::vector<float> x(static_cast<std::size_t>(n));
        float mx = -std::numeric_limits<float>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
          x[static_cast<std::size_t>(i)] = to_float(probed(probe, IA, static_cast<std::uint64_t>(i), in[i]));
          mx = std::max(mx, x[static_cast<std::size_t>(i)]);
        }
        float sum = 0.0f;
        for (auto& v : x) {
          v = std::exp(v - mx);
          sum += v;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          out[i] = probed(probe, OA, static_cast<std::uint64_t>(i),
                          static_cast<Scalar>(x[static_cast<std::size_t>(i)] / sum));
        }
      }
      break;
    }
  }
}

template <class Scalar>
const Network<Scalar>& as(const MicroNetwork& net) {
  const auto* p = std::get_if<Network<Scalar>>(&net.variant());
  if (!p) throw ValidationError("network format mismatch");
  return *p;
}

template <class F>
decltype(auto) visit_net(const MicroNetwork& net, F&& f) {
  return std::visit(std::forward<F>(f), net.variant());
}

}  // namespace

template <class Scalar>
int argmax(const Tensor<Scalar>& logits) {
  int best = -1;
  float best_v = 0.0f;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const float v = to_float(logits[i]);
    if (std::isnan(v)) continue;
    if (best < 0 || v > best_v) {
      best = static_cast<int>(i);
      best_v = v;
    }
  }
  return best < 0 ? 0 : best;
}

template <class Scalar>
std::vector<Tensor<Scalar>> forward_trace(const Network<Scalar>& net, const Tensor<Scalar>& input) {
  if (static_cast<std::size_t>(input.size()) != net.input_shape().size()) {
    throw ValidationError("input size does not match network input shape");
  }
  std::vector<Tensor<Scalar>> trace;
  trace.reserve(net.layers().size() + 1);
  trace.push_back(input);
  for (const auto& l : net.layers()) {
    Tensor<Scalar> out;
    run_layer<Scalar>(l, trace.back(), out, nullptr);
    trace.push_back(std::move(out));
  }
  return trace;
}

template <class Scalar>
int infer(const Network<Scalar>& net, const Tensor<Scalar>& input) {
  return argmax(forward_trace(net, input).back());
}

template <class Scalar>
FaultyPrediction resume_faulty(const Network<Scalar>& net, const std::vector<Tensor<Scalar>>& trace,
                               const ResolvedFault& fault) {
  switch (fault.kind) {
    case ResolvedFault::Kind::Crash: return CrashOutcome{};
    case ResolvedFault::Kind::NoEffect: return argmax(trace.back());
    case ResolvedFault::Kind::Flip: break;
  }
  const auto& layers = net.layers();
  Probe<Scalar> probe{fault.target.type, fault.target.index, fault.bit, fault.use_begin, fault.use_end};
  Tensor<Scalar> cur;
  run_layer<Scalar>(layers[fault.target.layer], trace[fault.target.layer], cur, &probe);
  Tensor<Scalar> next;
  for (std::size_t i = fault.target.layer + 1; i < layers.size(); ++i) {
    run_layer<Scalar>(layers[i], cur, next, nullptr);
    std::swap(cur, next);
  }
  return argmax(cur);
}

template <class Scalar>
FaultyPrediction infer_faulty(const Network<Scalar>& net, const Tensor<Scalar>& input,
                              const ResolvedFault& fault) {
  if (fault.kind == ResolvedFault::Kind::Crash) return CrashOutcome{};
  if (static_cast<std::size_t>(input.size()) != net.input_shape().size()) {
    throw ValidationError("input size does not match network input shape");
  }
  const auto& layers = net.layers();
  Tensor<Scalar> cur = input;
  Tensor<Scalar> next;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const bool hit = fault.kind == ResolvedFault::Kind::Flip && fault.target.layer == i;
    Probe<Scalar> probe{fault.target.type, fault.target.index, fault.bit, fault.use_begin, fault.use_end};
    run_layer<Scalar>(layers[i], cur, next, hit ? &probe : nullptr);
    std::swap(cur, next);
  }
  return argmax(cur);
}

// ---------------------------------------------------------------------------
// Format-erased handles

NumericFormat MicroNetwork::format() const {
  return std::visit([](const auto& n) {
    using S = typename std::decay_t<decltype(n.layers().front().weights)>::Scalar;
    return NumericTraits<S>::format;
  }, *impl_);
}

std::size_t MicroNetwork::layer_count() const {
  return visit_net(*this, [](const auto& n) { return n.layers().size(); });
}

LayerKind MicroNetwork::kind(std::size_t layer) const {
  return visit_net(*this, [&](const auto& n) { return n.layers().at(layer).kind; });
}

std::uint64_t MicroNetwork::var_count(std::size_t layer, FFType t) const {
  return visit_net(*this, [&](const auto& n) { return n.layers().at(layer).var_count(t); });
}

std::uint64_t MicroNetwork::mac_count(std::size_t layer) const {
  return visit_net(*this, [&](const auto& n) { return n.layers().at(layer).mac_count(); });
}

std::uint64_t MicroNetwork::uses(std::size_t layer, FFType t, std::uint64_t index) const {
  return visit_net(*this, [&](const auto& n) { return n.layers().at(layer).uses(t, index); });
}

int MicroNetwork::num_classes() const {
  return visit_net(*this, [](const auto& n) { return n.num_classes(); });
}

NumericFormat EvalSet::format() const {
  return std::visit([](const auto& d) {
    using S = typename std::decay_t<decltype(d.inputs)>::value_type::Scalar;
    return NumericTraits<S>::format;
  }, *impl_);
}

std::size_t EvalSet::size() const {
  return std::visit([](const auto& d) { return d.labels.size(); }, *impl_);
}

std::span<const int> EvalSet::labels() const {
  return std::visit([](const auto& d) { return std::span<const int>(d.labels); }, *impl_);
}

DataVariable local_control_target(const MicroNetwork& net, std::uint64_t control_index,
                                  std::uint64_t control_count) {
  if (control_count == 0 || control_index >= control_count) {
    throw ValidationError("local control index out of range");
  }
  std::uint64_t total = 0;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    for (FFType t : kDataTypes) total += net.var_count(l, t);
  }
  if (total == 0) throw ValidationError("network has no data variables");
  std::uint64_t g = static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(control_index) * total) / control_count);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    for (FFType t : kDataTypes) {
      const std::uint64_t n = net.var_count(l, t);
      if (g < n) return {l, t, g};
      g -= n;
    }
  }
  throw Error("local_control_target: enumeration overflow");
}

ResolvedFault resolve_fault(const MicroNetwork& net, const FaultSpec& fault, ReuseSchedule schedule) {
  const auto& site = fault.site;
  if (site.bit_pos < 0 || site.bit_pos >= net.bit_width()) {
    throw ValidationError("fault site " + to_string(site) + ": bit position out of range");
  }
  ResolvedFault r;
  r.bit = site.bit_pos;
  DataVariable target;
  if (site.var_type == FFType::ControlGlobal) {
    if (fault.mode == FaultMode::Crash) r.kind = ResolvedFault::Kind::Crash;
    return r;
  }
  if (site.var_type == FFType::ControlLocal) {
    target = local_control_target(net, site.var_index, fault.local_control_count);
  } else {
    if (site.layer_id < 0 || static_cast<std::size_t>(site.layer_id) >= net.layer_count()) {
      throw ValidationError("fault site " + to_string(site) + ": no such layer");
    }
    target = {static_cast<std::size_t>(site.layer_id), site.var_type, site.var_index};
    if (site.var_index >= net.var_count(target.layer, target.type)) {
      throw ValidationError("fault site " + to_string(site) + ": variable index out of range");
    }
  }
  if (fault.mode == FaultMode::Crash) {
    r.kind = ResolvedFault::Kind::Crash;
    return r;
  }
  const std::uint64_t total = net.uses(target.layer, target.type, target.index);
  r.target = target;
  if (total == 0) return r;
  r.kind = ResolvedFault::Kind::Flip;
  if (fault.mode == FaultMode::FullCorruption) {
    r.use_begin = 0;
    r.use_end = total;
    return r;
  }
  if (fault.reuse == 0) throw ValidationError("reuse-bounded fault needs reuse >= 1");
  const std::uint64_t span = std::min<std::uint64_t>(fault.reuse, total);
  const std::uint64_t offset =
      schedule == ReuseSchedule::Indexed ? target.index % (total - span + 1) : 0;
  r.use_begin = offset;
  r.use_end = offset + span;
  return r;
}

int infer(const MicroNetwork& net, const EvalSet& set, std::size_t input_index) {
  return visit_net(net, [&](const auto& n) {
    using S = typename std::decay_t<decltype(n.layers().front().weights)>::Scalar;
    const auto* d = std::get_if<EvalData<S>>(&set.variant());
    if (!d) throw ValidationError("evalset format does not match network format");
    return infer(n, d->inputs.at(input_index));
  });
}

FaultyPrediction infer_faulty(const MicroNetwork& net, const EvalSet& set, std::size_t input_index,
                              const FaultSpec& fault, ReuseSchedule schedule) {
  const ResolvedFault resolved = resolve_fault(net, fault, schedule);
  return visit_net(net, [&](const auto& n) -> FaultyPrediction {
    using S = typename std::decay_t<decltype(n.layers().front().weights)>::Scalar;
    const auto* d = std::get_if<EvalData<S>>(&set.variant());
    if (!d) throw ValidationError("evalset format does not match network format");
    return infer_faulty(n, d->inputs.at(input_index), resolved);
  });
}

double accuracy(const MicroNetwork& net, const EvalSet& set, const std::optional<FaultSpec>& fault,
                ReuseSchedule schedule) {
  std::optional<ResolvedFault> resolved;
  if (fault) resolved = resolve_fault(net, *fault, schedule);
  return visit_net(net, [&](const auto& n) {
    using S = typename std::decay_t<decltype(n.layers().front().weights)>::Scalar;
    const auto* d = std::get_if<EvalData<S>>(&set.variant());
    if (!d) throw ValidationError("evalset format does not match network format");
    if (d->inputs.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < d->inputs.size(); ++i) {
      if (!resolved) {
        correct += infer(n, d->inputs[i]) == d->labels[i] ? 1 : 0;
        continue;
      }
      const FaultyPrediction p = infer_faulty(n, d->inputs[i], *resolved);
      if (const int* label = std::get_if<int>(&p); label && *label == d->labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(d->inputs.size());
  });
}

// ---------------------------------------------------------------------------
// Binary container format (little-endian); see docs/file_formats.md.

namespace {

constexpr char kNetMagic[8] = {'R', 'A', 'E', 'S', 'T', 'N', 'E', 'T'};
constexpr char kEvalMagic[8] = {'R', 'A', 'E', 'S', 'T', 'E', 'V', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot open " + path.string() + " for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }
  void shape(const Shape& s) {
    u32(static_cast<std::uint32_t>(s.channels));
    u32(static_cast<std::uint32_t>(s.height));
    u32(static_cast<std::uint32_t>(s.width));
  }
  template <class Scalar>
  void values(const Tensor<Scalar>& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const auto b = to_bits(t[i]);
      for (std::size_t k = 0; k < sizeof(b); ++k) {
        const auto byte = static_cast<unsigned char>(b >> (8 * k));
        bytes(&byte, 1);
      }
    }
  }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw Error("write failed: " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw ValidationError("cannot open " + path.string());
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw ValidationError(path_.string() + ": truncated file");
    }
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | hi << 32;
  }
  Shape shape() {
    Shape s;
    s.channels = static_cast<int>(u32());
    s.height = static_cast<int>(u32());
    s.width = static_cast<int>(u32());
    if (s.channels < 1 || s.height < 1 || s.width < 1 || s.size() > (1u << 28)) {
      throw ValidationError(path_.string() + ": invalid shape");
    }
    return s;
  }
  template <class Scalar>
  Tensor<Scalar> values(std::uint64_t n) {
    using Bits = typename NumericTraits<Scalar>::Bits;
    if (n > (1ull << 28)) throw ValidationError(path_.string() + ": tensor too large");
    Tensor<Scalar> t(static_cast<Eigen::Index>(n));
    for (std::uint64_t i = 0; i < n; ++i) {
      unsigned char b[sizeof(Bits)];
      bytes(b, sizeof(Bits));
      Bits v = 0;
      for (std::size_t k = 0; k < sizeof(Bits); ++k) v = static_cast<Bits>(v | static_cast<Bits>(b[k]) << (8 * k));
      t[static_cast<Eigen::Index>(i)] = from_bits<Scalar>(v);
    }
    return t;
  }
  void magic(const char (&expected)[8]) {
    char m[8];
    bytes(m, 8);
    if (std::memcmp(m, expected, 8) != 0) throw ValidationError(path_.string() + ": bad magic");
    if (u32() != kFormatVersion) throw ValidationError(path_.string() + ": unsupported version");
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw ValidationError(path_.string() + ": trailing bytes");
    }
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

template <class Scalar>
Network<Scalar> read_network(Reader& r, std::uint32_t layer_count) {
  const Shape input = r.shape();
  std::vector<Layer<Scalar>> layers;
  Shape current = input;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const auto kind = static_cast<LayerKind>(r.u32());
    const Shape in = r.shape();
    const Shape out = r.shape();
    const int kernel = r.i32();
    const int stride = r.i32();
    const int padding = r.i32();
    const int shift = r.i32();
    const std::uint64_t nw = r.u64();
    Tensor<Scalar> w = r.values<Scalar>(nw);
    Layer<Scalar> l;
    switch (kind) {
      case LayerKind::Conv2d: l = conv2d<Scalar>(in, out.channels, kernel, stride, padding, std::move(w), shift); break;
      case LayerKind::FullyConnected:
        l = fully_connected<Scalar>(static_cast<int>(in.size()), static_cast<int>(out.size()), std::move(w), shift);
        break;
      case LayerKind::Relu: l = relu<Scalar>(in); break;
      case LayerKind::MaxPool: l = max_pool<Scalar>(in, kernel, stride); break;
      case LayerKind::Flatten: l = flatten<Scalar>(in); break;
      case LayerKind::Softmax: l = softmax<Scalar>(static_cast<int>(in.size())); break;
      default: throw ValidationError("unsupported layer kind " + std::to_string(static_cast<std::uint32_t>(kind)));
    }
    if (!(l.output == out)) throw ValidationError("layer " + std::to_string(i) + ": recorded output shape is inconsistent");
    current = l.output;
    layers.push_back(std::move(l));
  }
  (void)current;
  return Network<Scalar>(input, std::move(layers));
}

}  // namespace

void save_network(const MicroNetwork& net, const std::filesystem::path& path) {
  Writer w(path);
  w.bytes(kNetMagic, 8);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(net.format()));
  w.u32(static_cast<std::uint32_t>(net.layer_count()));
  visit_net(net, [&](const auto& n) {
    w.shape(n.input_shape());
    for (const auto& l : n.layers()) {
      w.u32(static_cast<std::uint32_t>(l.kind));
      w.shape(l.input);
      w.shape(l.output);
      w.i32(l.kernel);
      w.i32(l.stride);
      w.i32(l.padding);
      w.i32(l.shift);
      w.u64(static_cast<std::uint64_t>(l.weights.size()));
      w.values(l.weights);
    }
  });
  w.finish(path);
}

MicroNetwork load_network(const std::filesystem::path& path) {
  Reader r(path);
  r.magic(kNetMagic);
  const std::uint32_t format = r.u32();
  const std::uint32_t layer_count = r.u32();
  if (layer_count == 0 || layer_count > 4096) throw ValidationError(path.string() + ": invalid layer count");
  auto finish = [&](auto net) {
    r.expect_end();
    return MicroNetwork(std::move(net));
  };
  switch (static_cast<NumericFormat>(format)) {
    case NumericFormat::FP32: return finish(read_network<float>(r, layer_count));
    case NumericFormat::FP16: return finish(read_network<half>(r, layer_count));
    case NumericFormat::INT8: return finish(read_network<std::int8_t>(r, layer_count));
  }
  throw ValidationError(path.string() + ": unknown numeric format tag " + std::to_string(format));
}

void save_evalset(const EvalSet& set, const std::filesystem::path& path) {
  Writer w(path);
  w.bytes(kEvalMagic, 8);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(set.format()));
  std::visit([&](const auto& d) {
    w.u32(static_cast<std::uint32_t>(d.inputs.size()));
    w.shape(d.shape);
    w.u32(static_cast<std::uint32_t>(d.num_classes));
    for (std::size_t i = 0; i < d.inputs.size(); ++i) {
      w.u32(static_cast<std::uint32_t>(d.labels[i]));
      w.values(d.inputs[i]);
    }
  }, set.variant());
  w.finish(path);
}

namespace {

template <class Scalar>
EvalSet read_evalset(Reader& r, const std::filesystem::path& path) {
  EvalData<Scalar> d;
  const std::uint32_t count = r.u32();
  if (count == 0) throw ValidationError(path.string() + ": empty evalset");
  d.shape = r.shape();
  d.num_classes = static_cast<int>(r.u32());
  if (d.num_classes < 1) throw ValidationError(path.string() + ": invalid class count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto label = static_cast<int>(r.u32());
    if (label < 0 || label >= d.num_classes) throw ValidationError(path.string() + ": label out of range");
    d.labels.push_back(label);
    d.inputs.push_back(r.values<Scalar>(d.shape.size()));
  }
  r.expect_end();
  return EvalSet(std::move(d));
}

}  // namespace

EvalSet load_evalset(const std::filesystem::path& path) {
  Reader r(path);
  r.magic(kEvalMagic);
  const std::uint32_t format = r.u32();
  switch (static_cast<NumericFormat>(format)) {
    case NumericFormat::FP32: return read_evalset<float>(r, path);
    case NumericFormat::FP16: return read_evalset<half>(r, path);
    case NumericFormat::INT8: return read_evalset<std::int8_t>(r, path);
  }
  throw ValidationError(path.string() + ": unknown numeric format tag " + std::to_string(format));
}

#define RAEST_INSTANTIATE(S)                                                                     \
  template struct Layer<S>;                                                                      \
  template class Network<S>;                                                                     \
  template Layer<S> conv2d<S>(Shape, int, int, int, int, Tensor<S>, int);                        \
  template Layer<S> fully_connected<S>(int, int, Tensor<S>, int);                                \
  template Layer<S> relu<S>(Shape);                                                              \
  template Layer<S> max_pool<S>(Shape, int, int);                                                \
  template Layer<S> flatten<S>(Shape);                                                           \
  template Layer<S> softmax<S>(int);                                                             \
  template int argmax<S>(const Tensor<S>&);                                                      \
  template int infer<S>(const Network<S>&, const Tensor<S>&);                                    \
  template std::vector<Tensor<S>> forward_trace<S>(const Network<S>&, const Tensor<S>&);         \
  template FaultyPrediction resume_faulty<S>(const Network<S>&, const std::vector<Tensor<S>>&,   \
                                             const ResolvedFault&);                              \
  template FaultyPrediction infer_faulty<S>(const Network<S>&, const Tensor<S>&, const ResolvedFault&);

RAEST_INSTANTIATE(float)
RAEST_INSTANTIATE(half)
RAEST_INSTANTIATE(std::int8_t)

#undef RAEST_INSTANTIATE

}  // namespace raest
