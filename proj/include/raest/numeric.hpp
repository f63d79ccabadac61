#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace raest {

enum class NumericFormat : std::uint8_t { FP32 = 0, FP16 = 1, INT8 = 2 };

using half = Eigen::half;

std::string_view to_string(NumericFormat f);
std::optional<NumericFormat> parse_numeric_format(std::string_view name);

constexpr int format_width(NumericFormat f) {
  switch (f) {
    case NumericFormat::FP32: return 32;
    case NumericFormat::FP16: return 16;
    case NumericFormat::INT8: return 8;
  }
  return 0;
}

template <class Scalar>
struct NumericTraits;

template <>
struct NumericTraits<float> {
  using Bits = std::uint32_t;
  using Accum = float;
  static constexpr NumericFormat format = NumericFormat::FP32;
  static constexpr int width = 32;
};

template <>
struct NumericTraits<half> {
  using Bits = std::uint16_t;
  using Accum = half;
  static constexpr NumericFormat format = NumericFormat::FP16;
  static constexpr int width = 16;
};

template <>
struct NumericTraits<std::int8_t> {
  using Bits = std::uint8_t;
  using Accum = std::int32_t;
  static constexpr NumericFormat format = NumericFormat::INT8;
  static constexpr int width = 8;
};

template <class Scalar>
typename NumericTraits<Scalar>::Bits to_bits(Scalar v) {
  return std::bit_cast<typename NumericTraits<Scalar>::Bits>(v);
}

template <class Scalar>
Scalar from_bits(typename NumericTraits<Scalar>::Bits b) {
  return std::bit_cast<Scalar>(b);
}

// Toggles exactly one bit of the storage pattern. The result may be Inf/NaN.
template <class Scalar>
Scalar flip_bit(Scalar v, int bit) {
  using Bits = typename NumericTraits<Scalar>::Bits;
  if (bit < 0 || bit >= NumericTraits<Scalar>::width) {
    throw std::out_of_range("flip_bit: bit " + std::to_string(bit) + " outside a " +
                            std::to_string(NumericTraits<Scalar>::width) + "-bit value");
  }
  return from_bits<Scalar>(static_cast<Bits>(to_bits(v) ^ static_cast<Bits>(Bits{1} << bit)));
}

template <class Scalar>
float to_float(Scalar v) {
  return static_cast<float>(v);
}

// MAC semantics per format. Floating formats round after every operation in
// their own precision; INT8 accumulates in 32 bits and requantizes by an
// arithmetic right shift with round-half-up and saturation.
template <class Scalar>
struct Arith;

template <>
struct Arith<float> {
  using Accum = float;
  static Accum zero() { return 0.0f; }
  static Accum mac(Accum acc, float w, float x) { return acc + w * x; }
  static float finish(Accum acc, int /*shift*/) { return acc; }
  static float relu(float x) { return x > 0.0f ? x : 0.0f; }
  static bool greater(float a, float b) { return a > b; }
};

template <>
struct Arith<half> {
  using Accum = half;
  static Accum zero() { return half(0.0f); }
  static Accum mac(Accum acc, half w, half x) { return acc + w * x; }
  static half finish(Accum acc, int /*shift*/) { return acc; }
  static half relu(half x) { return x > half(0.0f) ? x : half(0.0f); }
  static bool greater(half a, half b) { return a > b; }
};

template <>
struct Arith<std::int8_t> {
  using Accum = std::int32_t;
  static Accum zero() { return 0; }
  static Accum mac(Accum acc, std::int8_t w, std::int8_t x) {
    return acc + static_cast<Accum>(w) * static_cast<Accum>(x);
  }
  static std::int8_t finish(Accum acc, int shift) {
    std::int64_t v = acc;
    if (shift > 0) v = (v + (std::int64_t{1} << (shift - 1))) >> shift;
    return static_cast<std::int8_t>(std::clamp<std::int64_t>(v, -128, 127));
  }
  static std::int8_t relu(std::int8_t x) { return x > 0 ? x : std::int8_t{0}; }
  static bool greater(std::int8_t a, std::int8_t b) { return a > b; }
};

// Bit-position classes used by the bit-position accuracy heuristic.
enum class BitClass : std::uint8_t {
  Sign,
  ExponentMsb,
  ExponentHigh,  // the four exponent bits below the MSB
  ExponentLow,
  Mantissa,      // fraction bits, or magnitude bits of integer formats
};

BitClass bit_class(NumericFormat f, int bit);

}  // namespace raest
