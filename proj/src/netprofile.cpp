#include "raest/netprofile.hpp"

#include "raest/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace raest {

std::uint64_t AcceleratorConfig::total_ff() const {
  std::uint64_t n = 0;
  for (FFType t : kFFTypes) n += ff_count[t];
  return n;
}

NetworkProfile::NetworkProfile(std::vector<LayerStats> layers, std::uint64_t control_global_vars,
                               std::uint64_t control_local_vars)
    : layers_(std::move(layers)), control_global_(control_global_vars), control_local_(control_local_vars) {}

const LayerStats& NetworkProfile::layer(int layer_id) const {
  for (const auto& l : layers_) {
    if (l.layer_id == layer_id) return l;
  }
  throw ValidationError("unknown layer id " + std::to_string(layer_id));
}

bool NetworkProfile::has_layer(int layer_id) const {
  for (const auto& l : layers_) {
    if (l.layer_id == layer_id) return true;
  }
  return false;
}

std::uint64_t NetworkProfile::total_macs() const {
  std::uint64_t n = 0;
  for (const auto& l : layers_) n += l.mac_count;
  return n;
}

std::uint64_t NetworkProfile::control_var_count(FFType t) const {
  if (t == FFType::ControlGlobal) return control_global_;
  if (t == FFType::ControlLocal) return control_local_;
  return 0;
}

std::uint64_t NetworkProfile::var_total(FFType t) const {
  if (is_control(t)) return control_var_count(t);
  std::uint64_t n = 0;
  for (const auto& l : layers_) n += l.var_count[t];
  return n;
}

NetworkProfile derive_profile(const MicroNetwork& network, const AcceleratorConfig& config) {
  if (network.layer_count() == 0) throw ValidationError("network has no layers");
  std::vector<LayerStats> layers;
  for (std::size_t i = 0; i < network.layer_count(); ++i) {
    LayerStats s;
    s.layer_id = static_cast<int>(i);
    s.mac_count = network.mac_count(i);
    for (FFType t : kDataTypes) s.var_count[t] = network.var_count(i, t);
    layers.push_back(s);
  }
  return NetworkProfile(std::move(layers), config.ff_count[FFType::ControlGlobal],
                        config.ff_count[FFType::ControlLocal]);
}

std::vector<std::string> validate_config(const AcceleratorConfig& c) {
  std::vector<std::string> v;
  if (c.total_ff() == 0) v.push_back("config: ff_count sums to zero");
  bool any_fit = false;
  for (FFType t : kFFTypes) {
    const double f = c.raw_fit[t];
    if (!std::isfinite(f) || f < 0) {
      v.push_back("config: raw_fit." + std::string(to_string(t)) + " must be a finite non-negative number");
    }
    if (f > 0 && c.ff_count[t] > 0) any_fit = true;
    if (c.reuse[t] == 0) v.push_back("config: reuse." + std::string(to_string(t)) + " must be >= 1");
  }
  if (!any_fit && !c.avf_mode) v.push_back("config: every populated FF type has raw_fit = 0");
  if (c.bit_width != format_width(c.numeric_format)) {
    v.push_back("config: bit_width " + std::to_string(c.bit_width) + " does not match numeric_format " +
                std::string(to_string(c.numeric_format)));
  }
  if (!(c.control_global_fraction >= 0.0 && c.control_global_fraction <= 1.0)) {
    v.push_back("config: control_global_fraction must lie in [0,1]");
  }
  return v;
}

std::vector<std::string> validate_profile(const NetworkProfile& p, const AcceleratorConfig& c) {
  std::vector<std::string> v = validate_config(c);
  if (p.layers().empty()) v.push_back("profile: no layers");
  for (std::size_t i = 0; i < p.layers().size(); ++i) {
    const auto& l = p.layers()[i];
    const std::string where = "profile: layer " + std::to_string(l.layer_id);
    if (l.layer_id != static_cast<int>(i)) v.push_back(where + ": layer_id out of execution order");
    if (!(l.utilization >= 0.0 && l.utilization <= 1.0)) {
      v.push_back(where + ": utilization " + std::to_string(l.utilization) + " outside [0,1]");
    }
    for (FFType t : kFFTypes) {
      if (is_control(t) && l.var_count[t] != 0) v.push_back(where + ": control variables belong to no layer");
    }
    const bool has_vars = l.var_count[FFType::InputActivation] + l.var_count[FFType::Weight] +
                              l.var_count[FFType::OutputActivation] > 0;
    if (has_vars && l.mac_count == 0) v.push_back(where + ": mac_count is zero but the layer holds variables");
  }
  if (!p.layers().empty() && p.total_macs() == 0) v.push_back("profile: total mac_count is zero");
  for (FFType t : kFFTypes) {
    if (c.ff_count[t] > 0 && p.var_total(t) == 0) {
      v.push_back("profile: FF type " + std::string(to_string(t)) + " has flip-flops but no variables");
    }
  }
  if (p.control_var_count(FFType::ControlGlobal) != c.ff_count[FFType::ControlGlobal] ||
      p.control_var_count(FFType::ControlLocal) != c.ff_count[FFType::ControlLocal]) {
    v.push_back("profile: control variable counts differ from control FF counts");
  }
  return v;
}

void require_valid(const NetworkProfile& profile, const AcceleratorConfig& config) {
  const auto v = validate_profile(profile, config);
  if (v.empty()) return;
  std::string msg;
  for (const auto& s : v) msg += (msg.empty() ? "" : "; ") + s;
  throw ValidationError(msg);
}

// ---------------------------------------------------------------------------
// Config text

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(std::string_view v, const std::string& key) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) throw ValidationError(key + ": expected a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

double parse_double(std::string_view v, const std::string& key) {
  std::string s(v);
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw ValidationError(key + ": expected a number, got '" + s + "'");
  return out;
}

bool parse_bool(std::string_view v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError(key + ": expected true/false, got '" + std::string(v) + "'");
}

FFType parse_type_key(std::string_view name, const std::string& key) {
  const auto t = parse_ff_type(name);
  if (!t) throw ValidationError(key + ": unknown FF type '" + std::string(name) + "'");
  return *t;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ConfigFile parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  ConfigFile cfg;
  std::optional<std::uint64_t> control_total;
  bool explicit_control = false;
  bool saw_bit_width = false;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const std::string where = "config line " + std::to_string(line_no) + " (" + key + ")";
    auto& a = cfg.accel;
    const auto dot = key.find('.');
    const std::string head = key.substr(0, dot);
    const std::string tail = dot == std::string::npos ? "" : key.substr(dot + 1);

    if (head == "ff_count" && !tail.empty()) {
      if (tail == "control") {
        control_total = parse_u64(value, where);
      } else {
        const FFType t = parse_type_key(tail, where);
        a.ff_count[t] = parse_u64(value, where);
        if (is_control(t)) explicit_control = true;
      }
    } else if (head == "raw_fit" && !tail.empty()) {
      if (tail == "control") {
        a.raw_fit[FFType::ControlGlobal] = a.raw_fit[FFType::ControlLocal] = parse_double(value, where);
      } else {
        a.raw_fit[parse_type_key(tail, where)] = parse_double(value, where);
      }
    } else if (head == "reuse" && !tail.empty()) {
      const auto r = parse_u64(value, where);
      if (r == 0 || r > 0xFFFFFFFFull) throw ValidationError(where + ": reuse must be a positive 32-bit integer");
      a.reuse[parse_type_key(tail, where)] = static_cast<std::uint32_t>(r);
    } else if (key == "bit_width") {
      a.bit_width = static_cast<int>(parse_u64(value, where));
      saw_bit_width = true;
    } else if (key == "numeric_format") {
      const auto f = parse_numeric_format(value);
      if (!f) throw ValidationError(where + ": unknown numeric format '" + std::string(value) + "'");
      a.numeric_format = *f;
    } else if (key == "control_global_fraction") {
      a.control_global_fraction = parse_double(value, where);
    } else if (key == "avf_mode") {
      a.avf_mode = parse_bool(value, where);
    } else if (key == "control_global_crash") {
      a.control_global_crash = parse_bool(value, where);
    } else if (key == "name") {
      cfg.name = std::string(value);
    } else if (key == "network") {
      cfg.network = base_dir / std::filesystem::path(std::string(value));
    } else if (key == "evalset") {
      cfg.evalset = base_dir / std::filesystem::path(std::string(value));
    } else if (head == "layer" && !tail.empty()) {
      const auto dot2 = tail.find('.');
      if (dot2 == std::string::npos) throw ValidationError(where + ": expected layer.<index>.<field>");
      const int idx = static_cast<int>(parse_u64(tail.substr(0, dot2), where));
      const std::string field = tail.substr(dot2 + 1);
      auto& ov = cfg.layers[idx];
      if (field == "mac_count") {
        ov.mac_count = parse_u64(value, where);
      } else if (field == "utilization") {
        ov.utilization = parse_double(value, where);
      } else if (field.rfind("var_count.", 0) == 0) {
        const FFType t = parse_type_key(field.substr(10), where);
        if (is_control(t)) throw ValidationError(where + ": control variables are not per-layer");
        ov.var_count[t] = parse_u64(value, where);
      } else {
        throw ValidationError(where + ": unknown layer field '" + field + "'");
      }
    } else {
      throw ValidationError(where + ": unknown key");
    }
  }
  auto& a = cfg.accel;
  if (control_total) {
    if (explicit_control) throw ValidationError("config: ff_count.control conflicts with explicit control_global/control_local counts");
    if (!(a.control_global_fraction >= 0.0 && a.control_global_fraction <= 1.0)) {
      throw ValidationError("config: control_global_fraction must lie in [0,1]");
    }
    const auto global = static_cast<std::uint64_t>(
        std::llround(static_cast<double>(*control_total) * a.control_global_fraction));
    a.ff_count[FFType::ControlGlobal] = global;
    a.ff_count[FFType::ControlLocal] = *control_total - global;
  }
  if (!saw_bit_width) a.bit_width = format_width(a.numeric_format);
  return cfg;
}

ConfigFile load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string format_config(const ConfigFile& cfg) {
  std::ostringstream os;
  const auto& a = cfg.accel;
  if (!cfg.name.empty()) os << "name = " << cfg.name << "\n";
  if (!cfg.network.empty()) os << "network = " << cfg.network.generic_string() << "\n";
  if (!cfg.evalset.empty()) os << "evalset = " << cfg.evalset.generic_string() << "\n";
  os << "numeric_format = " << to_string(a.numeric_format) << "\n";
  os << "bit_width = " << a.bit_width << "\n";
  for (FFType t : kFFTypes) os << "ff_count." << to_string(t) << " = " << a.ff_count[t] << "\n";
  for (FFType t : kFFTypes) os << "raw_fit." << to_string(t) << " = " << fmt_double(a.raw_fit[t]) << "\n";
  for (FFType t : kFFTypes) os << "reuse." << to_string(t) << " = " << a.reuse[t] << "\n";
  os << "control_global_fraction = " << fmt_double(a.control_global_fraction) << "\n";
  os << "avf_mode = " << (a.avf_mode ? "true" : "false") << "\n";
  os << "control_global_crash = " << (a.control_global_crash ? "true" : "false") << "\n";
  for (const auto& [idx, ov] : cfg.layers) {
    const std::string p = "layer." + std::to_string(idx) + ".";
    if (ov.mac_count) os << p << "mac_count = " << *ov.mac_count << "\n";
    for (FFType t : kDataTypes) {
      if (ov.var_count[t]) os << p << "var_count." << to_string(t) << " = " << *ov.var_count[t] << "\n";
    }
    if (ov.utilization) os << p << "utilization = " << fmt_double(*ov.utilization) << "\n";
  }
  return os.str();
}

void apply_overrides(NetworkProfile& profile, const ConfigFile& cfg) {
  for (const auto& [idx, ov] : cfg.layers) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= profile.layers().size()) {
      throw ValidationError("config: layer." + std::to_string(idx) + " does not exist in the network");
    }
    auto& l = profile.layers()[static_cast<std::size_t>(idx)];
    if (ov.mac_count) l.mac_count = *ov.mac_count;
    for (FFType t : kDataTypes) {
      if (ov.var_count[t]) l.var_count[t] = *ov.var_count[t];
    }
    if (ov.utilization) l.utilization = *ov.utilization;
  }
}

NetworkProfile profile_from_overrides(const ConfigFile& cfg) {
  std::vector<LayerStats> layers;
  int expected = 0;
  for (const auto& [idx, ov] : cfg.layers) {
    if (idx != expected++) throw ValidationError("config: layer indices must be contiguous from 0");
    LayerStats s;
    s.layer_id = idx;
    if (!ov.mac_count) throw ValidationError("config: layer." + std::to_string(idx) + ".mac_count missing");
    s.mac_count = *ov.mac_count;
    for (FFType t : kDataTypes) s.var_count[t] = ov.var_count[t].value_or(0);
    s.utilization = ov.utilization.value_or(1.0);
    layers.push_back(s);
  }
  if (layers.empty()) throw ValidationError("config: no network file and no layer.<i>.* entries");
  return NetworkProfile(std::move(layers), cfg.accel.ff_count[FFType::ControlGlobal],
                        cfg.accel.ff_count[FFType::ControlLocal]);
}

}  // namespace raest
