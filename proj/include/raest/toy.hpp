#pragma once

#include "raest/microdnn.hpp"
#include "raest/netprofile.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace raest {

// Small seeded networks with synthetic evaluation data, used by tests,
// examples and the `make-toy` subcommand.
//
//   conv: CONV 1x6x6 -> 3x4x4 (k3), RELU, MAXPOOL 2, FLATTEN, FC 12 -> 3
//   mlp:  FC 32 -> 12, RELU, FC 12 -> 3
//
// Weights are drawn N(0, 1/fan_in); inputs uniform in [0,1). Labels are the
// float-precision network's own predictions, kept only for inputs whose top
// two logits differ by at least `min_margin`, balanced across classes.
struct ToyOptions {
  NumericFormat format = NumericFormat::FP16;
  std::size_t evalset_size = 100;
  double min_margin = 0.05;
  // Fraction of labels replaced by a different class.
  double label_noise = 0.0;
};

struct ToyBundle {
  MicroNetwork net;
  EvalSet evalset;
  ConfigFile config;
};

std::vector<std::string> toy_presets();
ToyBundle make_toy(std::string_view preset, std::uint64_t seed, const ToyOptions& options = {});

// Accelerator model paired with the presets: more data FFs than data
// variables, reuse 4 for weights and input activations, 1 for outputs, and
// crashing global control.
AcceleratorConfig toy_accelerator(NumericFormat format);

}  // namespace raest
