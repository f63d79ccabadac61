#include "raest/error.hpp"
#include "raest/netprofile.hpp"
#include "raest/toy.hpp"

#include <doctest.h>

#include <algorithm>

using namespace raest;

namespace {

AcceleratorConfig weights_only(std::uint64_t ffs) {
  AcceleratorConfig c;
  c.ff_count[FFType::Weight] = ffs;
  c.raw_fit[FFType::Weight] = 600.0;
  return c;
}

LayerStats layer(int id, std::uint64_t macs, std::uint64_t weights) {
  LayerStats s;
  s.layer_id = id;
  s.mac_count = macs;
  s.var_count[FFType::Weight] = weights;
  return s;
}

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
  return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

}  // namespace

TEST_CASE("derive_profile counts MACs and variables") {
  AcceleratorConfig c = toy_accelerator(NumericFormat::FP32);
  const Network<float> fc({10, 1, 1}, {fully_connected<float>(10, 4, Tensor<float>::Zero(40))});
  const auto p = derive_profile(MicroNetwork(fc), c);
  REQUIRE(p.layers().size() == 1);
  CHECK(p.layers()[0].mac_count == 40);
  CHECK(p.layers()[0].var_count[FFType::Weight] == 40);
  CHECK(p.control_var_count(FFType::ControlGlobal) == c.ff_count[FFType::ControlGlobal]);
  CHECK(p.control_var_count(FFType::ControlLocal) == c.ff_count[FFType::ControlLocal]);

  const Network<float> conv({1, 8, 8}, {conv2d<float>({1, 8, 8}, 2, 3, 1, 0, Tensor<float>::Zero(18))});
  CHECK(derive_profile(MicroNetwork(conv), c).layers()[0].mac_count == 648);

  const NetworkProfile two({layer(0, 648, 18), layer(1, 40, 40)}, 0, 0);
  CHECK(two.total_macs() == 688);
}

TEST_CASE("derive_profile is deterministic and chains activations") {
  const ToyBundle t = make_toy("conv", 4);
  const auto a = derive_profile(t.net, t.config.accel);
  const auto b = derive_profile(t.net, t.config.accel);
  CHECK(a == b);
  // A reshape holds no activations; the chain continues across it.
  std::vector<const LayerStats*> chained;
  for (const auto& l : a.layers()) {
    if (l.var_count[FFType::InputActivation] > 0) chained.push_back(&l);
  }
  REQUIRE(chained.size() >= 3);
  for (std::size_t i = 0; i + 1 < chained.size(); ++i) {
    CHECK(chained[i]->var_count[FFType::OutputActivation] == chained[i + 1]->var_count[FFType::InputActivation]);
  }
}

TEST_CASE("validate_profile") {
  const AcceleratorConfig c = weights_only(8);
  NetworkProfile p({layer(0, 10, 4), layer(1, 20, 4)}, 0, 0);
  CHECK(validate_profile(p, c).empty());
  CHECK_NOTHROW(require_valid(p, c));

  SUBCASE("utilization above one") {
    p.layers()[1].utilization = 1.2;
    const auto v = validate_profile(p, c);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("layer 1") != std::string::npos);
    CHECK(v[0].find("utilization") != std::string::npos);
    CHECK_THROWS_AS(require_valid(p, c), ValidationError);
  }
  SUBCASE("all raw FIT zero") {
    AcceleratorConfig z = c;
    z.raw_fit[FFType::Weight] = 0.0;
    const auto v = validate_profile(p, z);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("raw_fit") != std::string::npos);
  }
  SUBCASE("avf mode does not need FIT rates") {
    AcceleratorConfig z = c;
    z.raw_fit[FFType::Weight] = 0.0;
    z.avf_mode = true;
    CHECK(validate_profile(p, z).empty());
  }
  SUBCASE("other violations are all reported") {
    AcceleratorConfig bad = c;
    bad.bit_width = 8;
    bad.reuse[FFType::Weight] = 0;
    bad.ff_count[FFType::OutputActivation] = 3;
    bad.raw_fit[FFType::OutputActivation] = -1.0;
    p.layers()[0].mac_count = 0;
    const auto v = validate_profile(p, bad);
    CHECK(mentions(v, "bit_width"));
    CHECK(mentions(v, "reuse.weight"));
    CHECK(mentions(v, "raw_fit.output_activation"));
    CHECK(mentions(v, "mac_count is zero"));
    CHECK(mentions(v, "output_activation has flip-flops but no variables"));
  }
  SUBCASE("control counts must match the config") {
    AcceleratorConfig cc = c;
    cc.ff_count[FFType::ControlGlobal] = 2;
    CHECK(mentions(validate_profile(p, cc), "control variable counts"));
  }
}

TEST_CASE("config text parsing") {
  const std::string text = R"(# comment line
numeric_format = int8
ff_count.weight = 100
ff_count.input_activation = 50
ff_count.control = 30   # split by control_global_fraction
control_global_fraction = 0.4
raw_fit.weight = 600
raw_fit.control = 200
reuse.weight = 4
layer.0.utilization = 0.75
layer.1.mac_count = 12
layer.1.var_count.weight = 7
network = nets/a.net
)";
  const ConfigFile cfg = parse_config(text, "/base");
  const auto& a = cfg.accel;
  CHECK(a.numeric_format == NumericFormat::INT8);
  CHECK(a.bit_width == 8);
  CHECK(a.ff_count[FFType::ControlGlobal] == 12);
  CHECK(a.ff_count[FFType::ControlLocal] == 18);
  CHECK(a.raw_fit[FFType::ControlLocal] == 200.0);
  CHECK(a.reuse[FFType::Weight] == 4);
  CHECK(a.reuse[FFType::InputActivation] == 1);
  CHECK(*cfg.layers.at(0).utilization == 0.75);
  CHECK(*cfg.layers.at(1).var_count[FFType::Weight] == 7);
  CHECK(cfg.network == std::filesystem::path("/base/nets/a.net"));

  const ConfigFile again = parse_config(format_config(cfg));
  CHECK(again.accel.ff_count == a.ff_count);
  CHECK(again.accel.raw_fit == a.raw_fit);
  CHECK(again.accel.reuse == a.reuse);
  CHECK(again.accel.numeric_format == a.numeric_format);
  CHECK(again.accel.control_global_fraction == a.control_global_fraction);
  CHECK(*again.layers.at(1).mac_count == 12);
}

TEST_CASE("config parse errors name the line") {
  auto fails_with = [](const std::string& text, const std::string& needle) {
    try {
      parse_config(text);
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
      return;
    }
    FAIL("no error for: " << text);
  };
  fails_with("bogus = 1\n", "line 1");
  fails_with("\nff_count.weights = 3\n", "line 2");
  fails_with("ff_count.weight\n", "expected 'key = value'");
  fails_with("reuse.weight = 0\n", "reuse");
  fails_with("numeric_format = bf16\n", "unknown numeric format");
  fails_with("layer.0.var_count.control_global = 1\n", "not per-layer");
  fails_with("ff_count.control = 3\nff_count.control_local = 1\n", "conflicts");
}

TEST_CASE("overrides on a derived profile") {
  const ToyBundle t = make_toy("mlp", 1);
  auto p = derive_profile(t.net, t.config.accel);
  ConfigFile cfg = t.config;
  cfg.layers[0].utilization = 0.5;
  cfg.layers[2].mac_count = 99;
  apply_overrides(p, cfg);
  CHECK(p.layers()[0].utilization == 0.5);
  CHECK(p.layers()[2].mac_count == 99);
  cfg.layers[17].mac_count = 1;
  CHECK_THROWS_AS(apply_overrides(p, cfg), ValidationError);
}

TEST_CASE("profile from overrides alone") {
  const ConfigFile cfg = parse_config(
      "ff_count.weight = 4\nraw_fit.weight = 1\n"
      "layer.0.mac_count = 30\nlayer.0.var_count.weight = 3\n"
      "layer.1.mac_count = 10\nlayer.1.var_count.weight = 5\n");
  const auto p = profile_from_overrides(cfg);
  REQUIRE(p.layers().size() == 2);
  CHECK(p.total_macs() == 40);
  CHECK(p.var_total(FFType::Weight) == 8);
  CHECK(validate_profile(p, cfg.accel).empty());
}
