#include "raest/error.hpp"
#include "raest/microdnn.hpp"
#include "raest/toy.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace raest;

namespace {

template <class S>
Tensor<S> tensor(std::initializer_list<float> v) {
  Tensor<S> t(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (float x : v) t[i++] = static_cast<S>(x);
  return t;
}

template <class S>
Network<S> identity_fc(int n) {
  Tensor<S> w = Tensor<S>::Zero(n * n);
  for (int i = 0; i < n; ++i) w[i * n + i] = static_cast<S>(1.0f);
  return Network<S>({n, 1, 1}, {fully_connected<S>(n, n, w)});
}

template <class S>
void check_identity() {
  const auto net = identity_fc<S>(4);
  for (int hot = 0; hot < 4; ++hot) {
    Tensor<S> x = Tensor<S>::Zero(4);
    x[hot] = static_cast<S>(1.0f);
    CHECK(infer(net, x) == hot);
  }
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("raest_unit_" + name);
}

}  // namespace

TEST_CASE("identity FC predicts the hot index in every format") {
  check_identity<float>();
  check_identity<half>();
  check_identity<std::int8_t>();
}

TEST_CASE("all-zero weights predict class 0") {
  const Network<float> net({3, 1, 1}, {fully_connected<float>(3, 5, Tensor<float>::Zero(15))});
  CHECK(infer(net, tensor<float>({0.3f, 0.9f, 0.1f})) == 0);
}

TEST_CASE("argmax: NaN never wins, ties go low") {
  const float nan = std::numeric_limits<float>::quiet_NaN();
  CHECK(argmax(tensor<float>({nan, 1.0f, 2.0f})) == 2);
  CHECK(argmax(tensor<float>({1.0f, nan, 1.0f})) == 0);
  CHECK(argmax(tensor<float>({nan, nan})) == 0);
  CHECK(argmax(tensor<float>({-INFINITY, INFINITY, 3.0f})) == 1);
}

TEST_CASE("MAC and variable counts") {
  const auto fc = fully_connected<float>(10, 4, Tensor<float>::Zero(40));
  CHECK(fc.mac_count() == 40);
  CHECK(fc.var_count(FFType::Weight) == 40);
  CHECK(fc.var_count(FFType::InputActivation) == 10);
  CHECK(fc.var_count(FFType::OutputActivation) == 4);

  const auto conv = conv2d<float>({1, 8, 8}, 2, 3, 1, 0, Tensor<float>::Zero(18));
  CHECK(conv.mac_count() == 2u * 6 * 6 * 1 * 3 * 3);
  CHECK(conv.mac_count() == 648);
  CHECK(conv.output == Shape{2, 6, 6});
}

TEST_CASE("geometry errors") {
  CHECK_THROWS_AS(fully_connected<float>(3, 2, Tensor<float>::Zero(5)), ValidationError);
  CHECK_THROWS_AS(conv2d<float>({1, 2, 2}, 1, 3, 1, 0, Tensor<float>::Zero(9)), ValidationError);
  CHECK_THROWS_AS(Network<float>({4, 1, 1}, {fully_connected<float>(3, 2, Tensor<float>::Zero(6))}), ValidationError);
  const auto net = identity_fc<float>(3);
  CHECK_THROWS_AS(infer(net, tensor<float>({1.0f, 0.0f})), ValidationError);
}

TEST_CASE("seeded toy network is stable") {
  // Recorded from the first run of this implementation.
  const ToyBundle t = make_toy("conv", 1);
  const auto& net = std::get<Network<half>>(t.net.variant());
  const auto& data = std::get<EvalData<half>>(t.evalset.variant());
  const auto logits = forward_trace(net, data.inputs[0]).back();
  REQUIRE(logits.size() == 3);
  CHECK(to_bits(logits[0]) == 0x3a1d);
  CHECK(to_bits(logits[1]) == 0xbaa6);
  CHECK(to_bits(logits[2]) == 0xb44d);
  CHECK(infer(t.net, t.evalset, 0) == 0);
  CHECK(accuracy(t.net, t.evalset) == 1.0);
}

TEST_CASE("toy presets in every format") {
  for (const auto& preset : toy_presets()) {
    for (auto fmt : {NumericFormat::FP32, NumericFormat::FP16, NumericFormat::INT8}) {
      ToyOptions o;
      o.format = fmt;
      const ToyBundle t = make_toy(preset, 2, o);
      CHECK(t.net.format() == fmt);
      CHECK(t.evalset.size() == 100);
      CHECK(accuracy(t.net, t.evalset) >= 0.9);
      CHECK(t.config.accel.bit_width == format_width(fmt));
    }
  }
  CHECK_THROWS_AS(make_toy("resnet", 1), ValidationError);
}

TEST_CASE("fault semantics on the toy net") {
  const ToyBundle t = make_toy("conv", 1);
  const MicroNetwork& net = t.net;
  const double sa = accuracy(net, t.evalset);

  SUBCASE("global control crash") {
    const FaultSpec f{{kControlLayer, FFType::ControlGlobal, 0, 3}, FaultMode::Crash};
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(std::holds_alternative<CrashOutcome>(infer_faulty(net, t.evalset, i, f)));
    }
    CHECK(accuracy(net, t.evalset, f) == 0.0);
  }

  SUBCASE("reuse-bounded with every use equals full corruption") {
    for (std::uint64_t w = 0; w < net.var_count(0, FFType::Weight); ++w) {
      const std::uint64_t uses = net.uses(0, FFType::Weight, w);
      for (int b : {0, 9, 14, 15}) {
        const SoftwareFaultSite s{0, FFType::Weight, w, b};
        const FaultSpec full{s, FaultMode::FullCorruption};
        const FaultSpec bounded{s, FaultMode::ReuseBounded, static_cast<std::uint32_t>(uses)};
        for (std::size_t i = 0; i < 4; ++i) {
          CHECK(infer_faulty(net, t.evalset, i, full) == infer_faulty(net, t.evalset, i, bounded));
        }
      }
    }
  }

  SUBCASE("a benign weight flip leaves the prediction alone") {
    // Brute-force search for a flip that keeps the argmax of input 0.
    const int clean = infer(net, t.evalset, 0);
    bool found = false;
    for (std::uint64_t w = 0; w < net.var_count(4, FFType::Weight) && !found; ++w) {
      const FaultSpec f{{4, FFType::Weight, w, 0}, FaultMode::FullCorruption};
      const auto r = infer_faulty(net, t.evalset, 0, f);
      if (r == FaultyPrediction{clean}) found = true;
    }
    CHECK(found);
  }

  SUBCASE("fraction LSB flips are near-harmless") {
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      for (std::uint64_t w = 0; w < net.var_count(l, FFType::Weight); ++w) {
        const FaultSpec f{{static_cast<int>(l), FFType::Weight, w, 0}, FaultMode::FullCorruption};
        CHECK(accuracy(net, t.evalset, f) >= sa - 0.02);
      }
    }
  }

  SUBCASE("exponent MSB flips hurt more than fraction LSB flips in aggregate") {
    for (std::size_t l : {0u, 4u}) {
      double msb = 0.0, lsb = 0.0;
      for (std::uint64_t w = 0; w < net.var_count(l, FFType::Weight); ++w) {
        msb += accuracy(net, t.evalset, FaultSpec{{static_cast<int>(l), FFType::Weight, w, 14}});
        lsb += accuracy(net, t.evalset, FaultSpec{{static_cast<int>(l), FFType::Weight, w, 0}});
      }
      CHECK(msb <= lsb);
    }
  }

  SUBCASE("repeated faulty inference is deterministic and leaves no state") {
    const FaultSpec f{{0, FFType::InputActivation, 5, 14}, FaultMode::ReuseBounded, 4};
    const auto a = infer_faulty(net, t.evalset, 3, f);
    CHECK(infer_faulty(net, t.evalset, 3, f) == a);
    CHECK(infer(net, t.evalset, 3) == t.evalset.labels()[3]);
  }

  SUBCASE("invalid sites") {
    CHECK_THROWS_AS(infer_faulty(net, t.evalset, 0, FaultSpec{{0, FFType::Weight, 0, 16}}), ValidationError);
    CHECK_THROWS_AS(infer_faulty(net, t.evalset, 0, FaultSpec{{9, FFType::Weight, 0, 1}}), ValidationError);
    CHECK_THROWS_AS(infer_faulty(net, t.evalset, 0, FaultSpec{{0, FFType::Weight, 999, 1}}), ValidationError);
  }
}

TEST_CASE("local control mapping") {
  const ToyBundle t = make_toy("mlp", 1);
  std::uint64_t total = 0;
  for (std::size_t l = 0; l < t.net.layer_count(); ++l) {
    for (FFType ty : kDataTypes) total += t.net.var_count(l, ty);
  }
  const auto first = local_control_target(t.net, 0, 10);
  CHECK(first == DataVariable{0, FFType::InputActivation, 0});
  // Index c maps to flat variable floor(c * D / C).
  const auto last = local_control_target(t.net, 9, 10);
  std::uint64_t flat = 9 * total / 10;
  std::size_t layer = 0;
  FFType type = FFType::InputActivation;
  for (std::size_t l = 0; l < t.net.layer_count(); ++l) {
    bool done = false;
    for (FFType ty : kDataTypes) {
      const auto n = t.net.var_count(l, ty);
      if (flat < n) {
        layer = l;
        type = ty;
        done = true;
        break;
      }
      flat -= n;
    }
    if (done) break;
  }
  CHECK(last == DataVariable{layer, type, flat});
  CHECK_THROWS_AS(local_control_target(t.net, 10, 10), ValidationError);
}

TEST_CASE("network and evalset files round-trip") {
  for (auto fmt : {NumericFormat::FP32, NumericFormat::FP16, NumericFormat::INT8}) {
    ToyOptions o;
    o.format = fmt;
    const ToyBundle t = make_toy("conv", 3, o);
    const auto np = temp_file("net.bin");
    const auto ep = temp_file("evl.bin");
    save_network(t.net, np);
    save_evalset(t.evalset, ep);
    const MicroNetwork net = load_network(np);
    const EvalSet set = load_evalset(ep);
    CHECK(net.format() == fmt);
    CHECK(net.layer_count() == t.net.layer_count());
    CHECK(set.size() == t.evalset.size());
    for (std::size_t i = 0; i < set.size(); ++i) CHECK(infer(net, set, i) == infer(t.net, t.evalset, i));
    std::filesystem::remove(np);
    std::filesystem::remove(ep);
  }
}

TEST_CASE("corrupt network files are rejected") {
  const auto p = temp_file("bad.bin");
  {
    std::ofstream out(p, std::ios::binary);
    out << "NOTANET!garbage";
  }
  CHECK_THROWS_AS(load_network(p), ValidationError);
  const ToyBundle t = make_toy("mlp", 1);
  save_network(t.net, p);
  std::filesystem::resize_file(p, std::filesystem::file_size(p) - 3);
  CHECK_THROWS_AS(load_network(p), ValidationError);
  std::filesystem::remove(p);
  CHECK_THROWS_AS(load_network(temp_file("missing.bin")), ValidationError);
}
