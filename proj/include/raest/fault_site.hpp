#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace raest {

// Flip-flop categories. Input and output activations live in different FFs
// and are therefore separate fault targets even when numerically equal.
enum class FFType : std::uint8_t {
  InputActivation = 0,
  Weight = 1,
  OutputActivation = 2,
  ControlGlobal = 3,
  ControlLocal = 4,
};

inline constexpr std::size_t kNumFFTypes = 5;

inline constexpr std::array<FFType, kNumFFTypes> kFFTypes = {
    FFType::InputActivation, FFType::Weight, FFType::OutputActivation,
    FFType::ControlGlobal, FFType::ControlLocal};

inline constexpr std::array<FFType, 3> kDataTypes = {
    FFType::InputActivation, FFType::Weight, FFType::OutputActivation};

constexpr bool is_control(FFType t) {
  return t == FFType::ControlGlobal || t == FFType::ControlLocal;
}

constexpr std::size_t index_of(FFType t) { return static_cast<std::size_t>(t); }

std::string_view to_string(FFType t);
std::optional<FFType> parse_ff_type(std::string_view name);

// Fixed-size map keyed by FFType.
template <class T>
struct PerType {
  std::array<T, kNumFFTypes> values{};

  constexpr T& operator[](FFType t) { return values[index_of(t)]; }
  constexpr const T& operator[](FFType t) const { return values[index_of(t)]; }

  friend constexpr bool operator==(const PerType&, const PerType&) = default;
};

// Control variables have no owning network layer; they sit in a pseudo-layer
// spanning the whole run.
inline constexpr int kControlLayer = -1;

// One (variable, bit position) pair, tagged with its layer and FF type.
struct SoftwareFaultSite {
  int layer_id = 0;
  FFType var_type = FFType::Weight;
  std::uint64_t var_index = 0;
  int bit_pos = 0;

  friend auto operator<=>(const SoftwareFaultSite&, const SoftwareFaultSite&) = default;
};

std::string to_string(const SoftwareFaultSite& site);

struct SiteHash {
  std::size_t operator()(const SoftwareFaultSite& s) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(static_cast<std::int64_t>(s.layer_id));
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint64_t>(s.var_type);
    h = h * 0x9E3779B97F4A7C15ULL ^ s.var_index;
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint64_t>(s.bit_pos);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

}  // namespace raest
