#pragma once

#include "raest/fault_site.hpp"
#include "raest/microdnn.hpp"
#include "raest/numeric.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace raest {

struct LayerStats {
  int layer_id = 0;
  std::uint64_t mac_count = 0;
  // Data types only; control entries stay zero.
  PerType<std::uint64_t> var_count{};
  double utilization = 1.0;

  friend bool operator==(const LayerStats&, const LayerStats&) = default;
};

struct AcceleratorConfig {
  PerType<std::uint64_t> ff_count{};
  PerType<double> raw_fit{};
  int bit_width = 16;
  NumericFormat numeric_format = NumericFormat::FP16;
  PerType<std::uint32_t> reuse{{1, 1, 1, 1, 1}};
  double control_global_fraction = 2.0 / 3.0;
  // Ignore raw FIT rates: every cell is equally likely (AVF-style weighting).
  bool avf_mode = false;
  // Whether a global control fault crashes the accelerator. When false the
  // fault is treated as benign.
  bool control_global_crash = true;

  std::uint64_t total_ff() const;
};

class NetworkProfile {
 public:
  NetworkProfile() = default;
  NetworkProfile(std::vector<LayerStats> layers, std::uint64_t control_global_vars,
                 std::uint64_t control_local_vars);

  const std::vector<LayerStats>& layers() const { return layers_; }
  std::vector<LayerStats>& layers() { return layers_; }
  const LayerStats& layer(int layer_id) const;
  bool has_layer(int layer_id) const;

  std::uint64_t total_macs() const;
  // One control variable per control FF.
  std::uint64_t control_var_count() const { return control_global_ + control_local_; }
  std::uint64_t control_var_count(FFType t) const;
  // Variables of type t, summed over layers (or the control count).
  std::uint64_t var_total(FFType t) const;

  friend bool operator==(const NetworkProfile&, const NetworkProfile&) = default;

 private:
  std::vector<LayerStats> layers_;
  std::uint64_t control_global_ = 0;
  std::uint64_t control_local_ = 0;
};

NetworkProfile derive_profile(const MicroNetwork& network, const AcceleratorConfig& config);

// All invariant violations; an empty list means valid.
std::vector<std::string> validate_config(const AcceleratorConfig& config);
std::vector<std::string> validate_profile(const NetworkProfile& profile, const AcceleratorConfig& config);

// Throws ValidationError listing every violation.
void require_valid(const NetworkProfile& profile, const AcceleratorConfig& config);

struct LayerOverride {
  std::optional<std::uint64_t> mac_count;
  PerType<std::optional<std::uint64_t>> var_count{};
  std::optional<double> utilization;
};

// Contents of a `key = value` experiment config file.
struct ConfigFile {
  AcceleratorConfig accel;
  std::map<int, LayerOverride> layers;
  std::string name;
  std::filesystem::path network;
  std::filesystem::path evalset;
};

ConfigFile parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ConfigFile load_config(const std::filesystem::path& path);
std::string format_config(const ConfigFile& config);

// Applies per-layer overrides on top of a derived profile.
void apply_overrides(NetworkProfile& profile, const ConfigFile& config);
// Builds a profile purely from `layer.<i>.*` keys (no network file).
NetworkProfile profile_from_overrides(const ConfigFile& config);

}  // namespace raest
