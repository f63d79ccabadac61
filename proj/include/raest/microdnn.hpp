#pragma once

#include "raest/fault_site.hpp"
#include "raest/numeric.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace raest {

enum class LayerKind : std::uint32_t {
  Conv2d = 0,
  FullyConnected = 1,
  Relu = 2,
  MaxPool = 3,
  Flatten = 4,
  Softmax = 5,
};

std::string_view to_string(LayerKind kind);

struct Shape {
  int channels = 1;
  int height = 1;
  int width = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

template <class Scalar>
using Tensor = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// One layer of a sequential network. Conv weights are laid out
// [out_channel][in_channel][ky][kx]; FC weights [output][input]. There are no
// biases: every weight is a fault site.
template <class Scalar>
struct Layer {
  LayerKind kind = LayerKind::Relu;
  Shape input;
  Shape output;
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  int shift = 0;  // INT8 requantization shift
  Tensor<Scalar> weights;

  bool has_variables() const { return kind != LayerKind::Flatten; }
  std::uint64_t var_count(FFType t) const;
  std::uint64_t mac_count() const;
  // Number of reads of one variable during a single inference.
  std::uint64_t uses(FFType t, std::uint64_t index) const;
};

template <class Scalar>
Layer<Scalar> conv2d(Shape input, int out_channels, int kernel, int stride, int padding,
                     Tensor<Scalar> weights, int shift = 0);
template <class Scalar>
Layer<Scalar> fully_connected(int fan_in, int fan_out, Tensor<Scalar> weights, int shift = 0);
template <class Scalar>
Layer<Scalar> relu(Shape shape);
template <class Scalar>
Layer<Scalar> max_pool(Shape input, int kernel, int stride);
template <class Scalar>
Layer<Scalar> flatten(Shape input);
template <class Scalar>
Layer<Scalar> softmax(int size);

template <class Scalar>
class Network {
 public:
  Network(Shape input, std::vector<Layer<Scalar>> layers);

  const Shape& input_shape() const { return input_; }
  const std::vector<Layer<Scalar>>& layers() const { return layers_; }
  int num_classes() const { return static_cast<int>(layers_.back().output.size()); }

 private:
  Shape input_;
  std::vector<Layer<Scalar>> layers_;
};

template <class Scalar>
struct EvalData {
  Shape shape;
  int num_classes = 0;
  std::vector<Tensor<Scalar>> inputs;
  std::vector<int> labels;
};

// Format-erased, immutable, cheaply copyable network handle.
class MicroNetwork {
 public:
  using Variant = std::variant<Network<float>, Network<half>, Network<std::int8_t>>;

  template <class Scalar>
  explicit MicroNetwork(Network<Scalar> net)
      : impl_(std::make_shared<const Variant>(std::move(net))) {}

  NumericFormat format() const;
  int bit_width() const { return format_width(format()); }
  const Variant& variant() const { return *impl_; }
  std::size_t layer_count() const;
  LayerKind kind(std::size_t layer) const;
  std::uint64_t var_count(std::size_t layer, FFType t) const;
  std::uint64_t mac_count(std::size_t layer) const;
  std::uint64_t uses(std::size_t layer, FFType t, std::uint64_t index) const;
  int num_classes() const;

 private:
  std::shared_ptr<const Variant> impl_;
};

class EvalSet {
 public:
  using Variant = std::variant<EvalData<float>, EvalData<half>, EvalData<std::int8_t>>;

  template <class Scalar>
  explicit EvalSet(EvalData<Scalar> data)
      : impl_(std::make_shared<const Variant>(std::move(data))) {}

  NumericFormat format() const;
  const Variant& variant() const { return *impl_; }
  std::size_t size() const;
  std::span<const int> labels() const;

 private:
  std::shared_ptr<const Variant> impl_;
};

enum class FaultMode : std::uint8_t { FullCorruption, ReuseBounded, Crash };

// Where a reuse-bounded corruption window starts within the variable's uses.
enum class ReuseSchedule : std::uint8_t {
  Indexed,  // offset = var_index mod (uses - r + 1)
  Leading,  // offset = 0
};

struct FaultSpec {
  SoftwareFaultSite site;
  FaultMode mode = FaultMode::FullCorruption;
  std::uint32_t reuse = 1;
  // Number of local control FFs; needed to map a local control site onto the
  // datapath variable it corrupts.
  std::uint64_t local_control_count = 0;
};

struct CrashOutcome {
  friend bool operator==(const CrashOutcome&, const CrashOutcome&) = default;
};

using FaultyPrediction = std::variant<int, CrashOutcome>;

struct DataVariable {
  std::size_t layer = 0;
  FFType type = FFType::Weight;
  std::uint64_t index = 0;

  friend bool operator==(const DataVariable&, const DataVariable&) = default;
};

// Local control FF c corrupts data variable floor(c * D / C) in the flat
// enumeration (layer order, then IA, W, OA, then index), D data variables and
// C local control FFs.
DataVariable local_control_target(const MicroNetwork& net, std::uint64_t control_index,
                                  std::uint64_t control_count);

// A fault reduced to what the datapath sees: crash, nothing, or one bit of
// one variable flipped over the use window [use_begin, use_end).
struct ResolvedFault {
  enum class Kind : std::uint8_t { Crash, NoEffect, Flip };
  Kind kind = Kind::NoEffect;
  DataVariable target;
  int bit = 0;
  std::uint64_t use_begin = 0;
  std::uint64_t use_end = 0;
};

ResolvedFault resolve_fault(const MicroNetwork& net, const FaultSpec& fault,
                            ReuseSchedule schedule = ReuseSchedule::Indexed);

// Argmax over logits; ties go to the lowest index and NaN never wins.
template <class Scalar>
int argmax(const Tensor<Scalar>& logits);

template <class Scalar>
int infer(const Network<Scalar>& net, const Tensor<Scalar>& input);

// Layer inputs of a fault-free pass; element i is the input of layer i and
// the last element holds the logits.
template <class Scalar>
std::vector<Tensor<Scalar>> forward_trace(const Network<Scalar>& net, const Tensor<Scalar>& input);

// Re-runs the network from the faulted layer on, reusing a fault-free trace.
template <class Scalar>
FaultyPrediction resume_faulty(const Network<Scalar>& net,
                               const std::vector<Tensor<Scalar>>& trace,
                               const ResolvedFault& fault);

template <class Scalar>
FaultyPrediction infer_faulty(const Network<Scalar>& net, const Tensor<Scalar>& input,
                              const ResolvedFault& fault);

int infer(const MicroNetwork& net, const EvalSet& set, std::size_t input_index);
FaultyPrediction infer_faulty(const MicroNetwork& net, const EvalSet& set,
                              std::size_t input_index, const FaultSpec& fault,
                              ReuseSchedule schedule = ReuseSchedule::Indexed);

// Fraction of correct predictions; a crashed inference counts as wrong.
double accuracy(const MicroNetwork& net, const EvalSet& set,
                const std::optional<FaultSpec>& fault = std::nullopt,
                ReuseSchedule schedule = ReuseSchedule::Indexed);

void save_network(const MicroNetwork& net, const std::filesystem::path& path);
MicroNetwork load_network(const std::filesystem::path& path);
void save_evalset(const EvalSet& set, const std::filesystem::path& path);
EvalSet load_evalset(const std::filesystem::path& path);

}  // namespace raest
