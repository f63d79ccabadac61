#include "raest/fault_site.hpp"
#include "raest/numeric.hpp"

namespace raest {

std::string_view to_string(FFType t) {
  switch (t) {
    case FFType::InputActivation: return "input_activation";
    case FFType::Weight: return "weight";
    case FFType::OutputActivation: return "output_activation";
    case FFType::ControlGlobal: return "control_global";
    case FFType::ControlLocal: return "control_local";
  }
  return "unknown";
}

std::optional<FFType> parse_ff_type(std::string_view name) {
  for (FFType t : kFFTypes) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

std::string to_string(const SoftwareFaultSite& site) {
  return "<layer " + std::to_string(site.layer_id) + ", " + std::string(to_string(site.var_type)) +
         " #" + std::to_string(site.var_index) + ", bit " + std::to_string(site.bit_pos) + ">";
}

std::string_view to_string(NumericFormat f) {
  switch (f) {
    case NumericFormat::FP32: return "fp32";
    case NumericFormat::FP16: return "fp16";
    case NumericFormat::INT8: return "int8";
  }
  return "unknown";
}

std::optional<NumericFormat> parse_numeric_format(std::string_view name) {
  for (auto f : {NumericFormat::FP32, NumericFormat::FP16, NumericFormat::INT8}) {
    if (to_string(f) == name) return f;
  }
  if (name == "FP32") return NumericFormat::FP32;
  if (name == "FP16") return NumericFormat::FP16;
  if (name == "INT8") return NumericFormat::INT8;
  return std::nullopt;
}

BitClass bit_class(NumericFormat f, int bit) {
  const int width = format_width(f);
  if (bit < 0 || bit >= width) throw std::out_of_range("bit_class: bit out of range");
  if (f == NumericFormat::INT8) return bit == width - 1 ? BitClass::Sign : BitClass::Mantissa;
  const int exp_bits = f == NumericFormat::FP32 ? 8 : 5;
  const int msb = width - 2;
  const int exp_lsb = width - 1 - exp_bits;
  if (bit == width - 1) return BitClass::Sign;
  if (bit == msb) return BitClass::ExponentMsb;
  if (bit < msb && bit >= msb - 4) return BitClass::ExponentHigh;
  if (bit >= exp_lsb) return BitClass::ExponentLow;
  return BitClass::Mantissa;
}

}  // namespace raest
