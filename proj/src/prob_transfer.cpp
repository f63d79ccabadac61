#include "raest/prob_transfer.hpp"

#include "raest/error.hpp"

#include <cmath>

namespace raest {

namespace {

// Σ_T FF(T)·rawFIT(T) / Σ FF: the FIT-weighted mean used to normalize the
// per-type weights (AVF mode weighs every cell equally).
double fit_normalization(const AcceleratorConfig& c) {
  if (c.avf_mode) return 1.0;
  const double total = static_cast<double>(c.total_ff());
  double norm = 0.0;
  for (FFType t : kFFTypes) norm += static_cast<double>(c.ff_count[t]) / total * c.raw_fit[t];
  return norm;
}

double fit_weight(const AcceleratorConfig& c, FFType t, double norm) {
  if (c.avf_mode) return 1.0;
  return c.raw_fit[t] / norm;
}

double site_value(double lp, double tp, double w, std::uint64_t vars, int bit_width) {
  return lp * tp * w / (static_cast<double>(vars) * static_cast<double>(bit_width));
}

std::uint64_t typed_macs(const NetworkProfile& p, FFType t) {
  std::uint64_t n = 0;
  for (const auto& l : p.layers()) {
    if (l.var_count[t] > 0) n += l.mac_count;
  }
  return n;
}

void check_config(const AcceleratorConfig& c) {
  if (c.total_ff() == 0) throw ValidationError("config: ff_count sums to zero");
  if (!c.avf_mode && fit_normalization(c) <= 0.0) throw ValidationError("config: all raw FIT rates are zero");
}

}  // namespace

double layer_prob(const NetworkProfile& profile, int layer_id) {
  const auto& l = profile.layer(layer_id);
  const auto total = profile.total_macs();
  if (total == 0) throw ValidationError("profile: total mac_count is zero");
  return static_cast<double>(l.mac_count) / static_cast<double>(total);
}

double layer_prob(const NetworkProfile& profile, int layer_id, FFType t) {
  if (is_control(t)) return 1.0;
  const auto& l = profile.layer(layer_id);
  if (l.var_count[t] == 0) return 0.0;
  return static_cast<double>(l.mac_count) / static_cast<double>(typed_macs(profile, t));
}

double type_prob(const AcceleratorConfig& config, FFType t) {
  const auto total = config.total_ff();
  if (total == 0) throw ValidationError("config: ff_count sums to zero");
  return static_cast<double>(config.ff_count[t]) / static_cast<double>(total);
}

double var_prob(const NetworkProfile& profile, int layer_id, FFType t) {
  if (is_control(t)) return 1.0;
  const auto n = profile.layer(layer_id).var_count[t];
  if (n == 0) {
    throw ValidationError("layer " + std::to_string(layer_id) + " has no " + std::string(to_string(t)) + " variables");
  }
  return 1.0 / static_cast<double>(n);
}

double cell_fault_prob(const AcceleratorConfig& config, FFType t, double cell_count) {
  if (!(cell_count > 0)) throw ValidationError("cell count must be positive");
  check_config(config);
  return fit_weight(config, t, fit_normalization(config)) / cell_count;
}

double site_prob(const NetworkProfile& profile, const AcceleratorConfig& config,
                 const SoftwareFaultSite& site) {
  check_config(config);
  if (site.bit_pos < 0 || site.bit_pos >= config.bit_width) {
    throw ValidationError("site " + to_string(site) + ": bit position out of range");
  }
  const FFType t = site.var_type;
  const double w = fit_weight(config, t, fit_normalization(config));
  const double tp = type_prob(config, t);
  if (is_control(t)) {
    if (site.layer_id != kControlLayer) throw ValidationError("site " + to_string(site) + ": control sites live in layer -1");
    const auto n = profile.control_var_count(t);
    if (site.var_index >= n) throw ValidationError("site " + to_string(site) + ": control index out of range");
    return site_value(1.0, tp, w, n, config.bit_width);
  }
  const auto& l = profile.layer(site.layer_id);
  if (site.var_index >= l.var_count[t]) throw ValidationError("site " + to_string(site) + ": variable index out of range");
  if (config.ff_count[t] == 0) return 0.0;
  return site_value(layer_prob(profile, site.layer_id, t), tp, w, l.var_count[t], config.bit_width);
}

SiteProbabilityTable build_table(const NetworkProfile& profile, const AcceleratorConfig& config,
                                 const TableOptions& options) {
  require_valid(profile, config);
  const AcceleratorConfig& basis = options.normalize_against ? *options.normalize_against : config;
  check_config(basis);
  if (!(options.cell_count > 0)) throw ValidationError("cell count must be positive");
  const double norm = fit_normalization(basis);

  SiteProbabilityTable table;
  table.bit_width_ = config.bit_width;
  table.cell_count_ = options.cell_count;
  table.normalization_ = norm;
  long double covered = 0.0L;
  for (FFType t : kDataTypes) {
    if (config.ff_count[t] == 0) continue;
    const double tp = type_prob(config, t);
    const double w = fit_weight(config, t, norm);
    covered += static_cast<long double>(tp) * w;
    for (const auto& l : profile.layers()) {
      if (l.var_count[t] == 0 || l.mac_count == 0) continue;
      ProbClass c;
      c.layer_id = l.layer_id;
      c.type = t;
      c.var_count = l.var_count[t];
      c.mac_count = l.mac_count;
      c.per_var_per_bit = site_value(layer_prob(profile, l.layer_id, t), tp, w, c.var_count, config.bit_width);
      c.utilization = l.utilization;
      table.classes_.push_back(c);
    }
  }
  for (FFType t : {FFType::ControlGlobal, FFType::ControlLocal}) {
    const auto n = profile.control_var_count(t);
    if (n == 0 || config.ff_count[t] == 0) continue;
    const double tp = type_prob(config, t);
    const double w = fit_weight(config, t, norm);
    covered += static_cast<long double>(tp) * w;
    ProbClass c;
    c.layer_id = kControlLayer;
    c.type = t;
    c.var_count = n;
    c.per_var_per_bit = site_value(1.0, tp, w, n, config.bit_width);
    c.utilization = 1.0;
    table.classes_.push_back(c);
  }
  for (auto& c : table.classes_) {
    c.class_total = c.per_var_per_bit * static_cast<double>(c.var_count) * config.bit_width;
    table.total_sites_ += c.var_count * static_cast<std::uint64_t>(config.bit_width);
  }
  if (options.normalize_against) table.masked_ = std::max(0.0, static_cast<double>(1.0L - covered));
  if (table.classes_.empty()) throw ValidationError("probability table is empty");
  return table;
}

std::optional<std::size_t> SiteProbabilityTable::find(int layer_id, FFType t) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].layer_id == layer_id && classes_[i].type == t) return i;
  }
  return std::nullopt;
}

const ProbClass& SiteProbabilityTable::class_of(const SoftwareFaultSite& site) const {
  const auto i = find(site.layer_id, site.var_type);
  if (!i) throw ValidationError("site " + to_string(site) + ": no such probability class");
  const auto& c = classes_[*i];
  if (site.var_index >= c.var_count || site.bit_pos < 0 || site.bit_pos >= bit_width_) {
    throw ValidationError("site " + to_string(site) + ": outside its class");
  }
  return c;
}

double SiteProbabilityTable::site_prob(const SoftwareFaultSite& site) const {
  return class_of(site).per_var_per_bit;
}

double SiteProbabilityTable::total_probability() const {
  long double sum = masked_;
  for (const auto& c : classes_) {
    sum += static_cast<long double>(c.per_var_per_bit) * c.var_count * bit_width_;
  }
  return static_cast<double>(sum);
}

Eigen::VectorXd SiteProbabilityTable::class_totals() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(classes_.size()));
  for (std::size_t i = 0; i < classes_.size(); ++i) v[static_cast<Eigen::Index>(i)] = classes_[i].class_total;
  return v;
}

void SiteProbabilityTable::for_each_site(
    const std::function<void(std::size_t, const SoftwareFaultSite&)>& fn) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const auto& c = classes_[i];
    for (std::uint64_t v = 0; v < c.var_count; ++v) {
      for (int b = 0; b < bit_width_; ++b) fn(i, SoftwareFaultSite{c.layer_id, c.type, v, b});
    }
  }
}

void SiteProbabilityTable::set_utilization(const std::vector<double>& per_layer) {
  for (auto& c : classes_) {
    if (c.layer_id == kControlLayer) continue;
    const auto idx = static_cast<std::size_t>(c.layer_id);
    if (idx >= per_layer.size()) throw ValidationError("utilization vector shorter than layer count");
    const double u = per_layer[idx];
    if (!(u >= 0.0 && u <= 1.0)) throw ValidationError("utilization outside [0,1]");
    c.utilization = u;
  }
}

RAResult ra_expected(const SiteProbabilityTable& table, const SiteAccuracy& accuracy,
                     const SiteUtilization& uf, double sa) {
  if (!accuracy) throw ValidationError("ra_expected: no accuracy source");
  RAResult r;
  r.sa = sa;
  PerType<long double> parts{};
  table.for_each_site([&](std::size_t, const SoftwareFaultSite& s) {
    const double p = table.site_prob(s);
    const double a = accuracy(s);
    const double u = uf ? uf(s) : 1.0;
    parts[s.var_type] += static_cast<long double>(p) * (u * a + (1.0 - u) * sa);
  });
  long double total = static_cast<long double>(table.masked_probability()) * sa;
  r.masked = static_cast<double>(total);
  for (FFType t : kFFTypes) {
    r.components[t] = static_cast<double>(parts[t]);
    total += parts[t];
  }
  r.ra = static_cast<double>(total);
  return r;
}

SiteUtilization table_utilization(const SiteProbabilityTable& table) {
  return [&table](const SoftwareFaultSite& s) { return table.class_of(s).utilization; };
}

}  // namespace raest
