#include "raest/estimator.hpp"

#include "raest/error.hpp"
#include "raest/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace raest {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Uniform: return "uniform";
    case Strategy::MacWeighted: return "mac";
    case Strategy::Importance: return "is";
    case Strategy::ImportanceBP: return "is-b";
  }
  return "unknown";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (Strategy s : kStrategies) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

BpModel BpModel::standard() {
  BpModel m;
  m.drop[static_cast<std::size_t>(BitClass::ExponentMsb)] = 0.15;
  m.drop[static_cast<std::size_t>(BitClass::ExponentHigh)] = 0.08;
  return m;
}

double BpModel::drop_for(NumericFormat format, int bit) const {
  return drop[static_cast<std::size_t>(bit_class(format, bit))];
}

SamplingStrategy SamplingStrategy::make(Strategy tag) {
  SamplingStrategy s;
  s.tag = tag;
  if (tag == Strategy::ImportanceBP) s.bp_model = BpModel::standard();
  return s;
}

// ---------------------------------------------------------------------------
// PDF

DiscretePDF::DiscretePDF(std::vector<Cell> cells, const SiteProbabilityTable& table) : cells_(std::move(cells)) {
  for (const auto& c : table.classes()) {
    layer_of_cls_.push_back(c.layer_id);
    type_of_cls_.push_back(c.type);
  }
  long double acc = 0.0L;
  cumulative_.reserve(cells_.size());
  for (const auto& c : cells_) {
    if (!(c.site_weight >= 0.0) || !std::isfinite(c.site_weight)) throw ValidationError("pdf weight must be finite and non-negative");
    if (c.cls >= layer_of_cls_.size() || c.var_count == 0) throw ValidationError("pdf cell does not match the table");
    acc += static_cast<long double>(c.site_weight) * c.var_count;
    cumulative_.push_back(static_cast<double>(acc));
  }
  total_ = static_cast<double>(acc);
  if (!(total_ > 0.0)) throw ValidationError("degenerate pdf: every weight is zero");
}

Eigen::VectorXd DiscretePDF::cell_masses() const {
  Eigen::VectorXd m(static_cast<Eigen::Index>(cells_.size()));
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    m[static_cast<Eigen::Index>(i)] = cells_[i].site_weight * static_cast<double>(cells_[i].var_count) / total_;
  }
  return m;
}

DiscretePDF::Draw DiscretePDF::draw(Rng& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  std::size_t k = static_cast<std::size_t>(it - cumulative_.begin());
  if (k >= cells_.size()) {
    // u rounded up onto the total; take the last cell with mass.
    k = cells_.size() - 1;
    while (cells_[k].site_weight == 0.0) --k;
  }
  const Cell& c = cells_[k];
  const std::uint64_t var = c.var_begin + rng.below(c.var_count);
  rng.next();
  return {SoftwareFaultSite{layer_of_cls_[c.cls], type_of_cls_[c.cls], var, c.bit}, k};
}

DiscretePDF build_pdf(const SamplingStrategy& strategy, const SiteProbabilityTable& table,
                      const NetworkProfile& profile, double sa, NumericFormat format) {
  if ((strategy.tag == Strategy::ImportanceBP) != strategy.bp_model.has_value()) {
    throw ValidationError("bp_model must be given exactly for the is-b strategy");
  }
  if (strategy.bp_model) {
    for (double d : strategy.bp_model->drop) {
      if (!(d >= 0.0 && d <= 1.0)) throw ValidationError("bp_model drops must lie in [0,1]");
    }
  }
  const int bw = table.bit_width();
  if (format_width(format) != bw) throw ValidationError("numeric format does not match table bit width");

  // Per-class MAC mass for the MAC-weighted strategy: data classes carry
  // their layer's MACs, control classes share the total by FF count.
  std::vector<double> mac_mass(table.classes().size(), 0.0);
  if (strategy.tag == Strategy::MacWeighted) {
    std::uint64_t control_vars = 0;
    for (const auto& c : table.classes()) {
      if (is_control(c.type)) control_vars += c.var_count;
    }
    const double total_macs = static_cast<double>(profile.total_macs());
    for (std::size_t i = 0; i < table.classes().size(); ++i) {
      const auto& c = table.classes()[i];
      mac_mass[i] = is_control(c.type)
                        ? total_macs * static_cast<double>(c.var_count) / static_cast<double>(control_vars)
                        : static_cast<double>(c.mac_count);
    }
  }

  std::vector<DiscretePDF::Cell> cells;
  cells.reserve(table.classes().size() * static_cast<std::size_t>(bw));
  for (std::size_t i = 0; i < table.classes().size(); ++i) {
    const auto& c = table.classes()[i];
    for (int b = 0; b < bw; ++b) {
      double w = 0.0;
      switch (strategy.tag) {
        case Strategy::Uniform: w = 1.0; break;
        case Strategy::MacWeighted:
          w = mac_mass[i] / (static_cast<double>(c.var_count) * static_cast<double>(bw));
          break;
        case Strategy::Importance: w = c.per_var_per_bit; break;
        case Strategy::ImportanceBP: {
          const double a_hat = std::max(0.0, sa - strategy.bp_model->drop_for(format, b));
          w = c.per_var_per_bit * a_hat;
          break;
        }
      }
      cells.push_back({i, 0, c.var_count, b, w});
    }
  }
  return DiscretePDF(std::move(cells), table);
}

BpModel profile_bp_model(const SiteProbabilityTable& table, const SiteEvaluator& evaluator, NumericFormat format,
                          std::uint64_t per_class, std::uint64_t seed, unsigned threads) {
  if (per_class == 0) throw ValidationError("profile_bp_model needs at least one injection per class");
  const int bw = table.bit_width();
  if (format_width(format) != bw) throw ValidationError("numeric format does not match table bit width");
  BpModel model;
  for (std::size_t k = 0; k < model.drop.size(); ++k) {
    std::vector<DiscretePDF::Cell> cells;
    for (std::size_t i = 0; i < table.classes().size(); ++i) {
      const auto& c = table.classes()[i];
      if (is_control(c.type)) continue;
      for (int b = 0; b < bw; ++b) {
        if (static_cast<std::size_t>(bit_class(format, b)) != k) continue;
        cells.push_back({i, 0, c.var_count, b, c.per_var_per_bit});
      }
    }
    double mass = 0.0;
    for (const auto& c : cells) mass += c.site_weight;
    if (mass <= 0.0) continue;
    const DiscretePDF pdf(std::move(cells), table);
    Rng rng(seed, 0x6270000 + k);
    std::vector<SoftwareFaultSite> sites;
    sites.reserve(per_class);
    for (std::uint64_t n = 0; n < per_class; ++n) sites.push_back(pdf.draw(rng).site);
    const auto acc = evaluate_all(evaluator, sites, threads);
    long double sum = 0.0L;
    for (double a : acc) sum += a;
    const double mean = static_cast<double>(sum / static_cast<long double>(acc.size()));
    model.drop[k] = std::clamp(evaluator.sa() - mean, 0.0, 1.0);
  }
  return model;
}

DiscretePDF build_oracle_pdf(const SiteProbabilityTable& table, const AccuracyArchive& archive, bool use_uf) {
  std::vector<DiscretePDF::Cell> cells;
  cells.reserve(table.total_sites());
  const double sa = archive.sa();
  table.for_each_site([&](std::size_t cls, const SoftwareFaultSite& s) {
    const auto& c = table.classes()[cls];
    const double u = use_uf ? c.utilization : 1.0;
    const double g = u * archive.at(s) + (1.0 - u) * sa;
    cells.push_back({cls, s.var_index, 1, s.bit_pos, c.per_var_per_bit * g});
  });
  return DiscretePDF(std::move(cells), table);
}

// ---------------------------------------------------------------------------
// Convergence

PocTracker::PocTracker(double truth, PocCriteria criteria) : truth_(truth), c_(criteria) {
  if (c_.window == 0 || !(c_.mean_tol > 0) || !(c_.var_thresh > 0)) throw ValidationError("invalid PoC criteria");
  ring_.assign(c_.window, 0.0);
}

bool PocTracker::push(double x) {
  const std::size_t slot = n_ % c_.window;
  if (n_ >= c_.window) {
    sum_ -= ring_[slot];
    sumsq_ -= static_cast<long double>(ring_[slot]) * ring_[slot];
  }
  ring_[slot] = x;
  sum_ += x;
  sumsq_ += static_cast<long double>(x) * x;
  ++n_;
  if (n_ < c_.window || !std::isfinite(x)) return false;
  const long double w = static_cast<long double>(c_.window);
  const long double mean = sum_ / w;
  const long double var = std::max(0.0L, sumsq_ / w - mean * mean);
  const bool mean_ok = std::fabs(static_cast<double>(mean) - truth_) <= c_.mean_tol * std::fabs(truth_);
  return mean_ok && var < c_.var_thresh;
}

std::optional<std::uint64_t> detect_poc(const std::vector<double>& trace, double truth, const PocCriteria& criteria) {
  PocTracker t(truth, criteria);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (t.push(trace[i])) return i + 1;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Estimation

namespace {

// Rejects PDFs that can never sample a site whose integrand is positive.
void check_absolute_continuity(const DiscretePDF& pdf, const SiteProbabilityTable& table,
                               const SiteEvaluator& evaluator, bool use_uf) {
  for (const auto& c : pdf.cells()) {
    const auto& pc = table.classes()[c.cls];
    if (pc.per_var_per_bit == 0.0) continue;
    if (c.site_weight > 0.0) continue;
    const double sa = evaluator.sa();
    for (std::uint64_t v = c.var_begin; v < c.var_begin + c.var_count; ++v) {
      const SoftwareFaultSite s{pc.layer_id, pc.type, v, c.bit};
      const double u = use_uf ? pc.utilization : 1.0;
      if (c.var_count > 1 || u * evaluator.accuracy(s) + (1.0 - u) * sa > 0.0) {
        throw ValidationError("pdf is zero at site " + to_string(s) +
                              " whose integrand may be positive; the estimate would be biased");
      }
    }
  }
}

}  // namespace

RAEstimate estimate_ra(const DiscretePDF& pdf, const SiteProbabilityTable& table,
                       const SiteEvaluator& evaluator, const EstimateOptions& options) {
  if (options.samples == 0 && !options.ground_truth) {
    throw ValidationError("running to convergence needs a ground-truth RA");
  }
  check_absolute_continuity(pdf, table, evaluator, options.use_uf);
  const std::uint64_t limit = options.samples > 0 ? options.samples : options.max_samples;
  const double sa = evaluator.sa();
  const double masked_term = table.masked_probability() * sa;

  RAEstimate est;
  est.seed = options.seed;
  est.trace.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(limit, 1u << 20)));
  est.variance_trace.reserve(est.trace.capacity());
  std::optional<PocTracker> tracker;
  if (options.ground_truth) tracker.emplace(*options.ground_truth, options.poc);

  Rng rng(options.seed);
  long double mean = 0.0L, m2 = 0.0L;
  std::uint64_t n = 0;
  bool stop = false;
  std::vector<DiscretePDF::Draw> draws;
  std::vector<SoftwareFaultSite> sites;
  while (n < limit && !stop) {
    const std::uint64_t batch = std::min<std::uint64_t>(std::max<std::uint64_t>(options.batch, 1), limit - n);
    draws.clear();
    sites.clear();
    for (std::uint64_t i = 0; i < batch; ++i) {
      draws.push_back(pdf.draw(rng));
      sites.push_back(draws.back().site);
    }
    const std::vector<double> acc = evaluate_all(evaluator, sites, options.threads);
    for (std::uint64_t i = 0; i < batch && !stop; ++i) {
      const auto& cls = table.class_of(sites[i]);
      const double u = options.use_uf ? cls.utilization : 1.0;
      const double g = u * acc[i] + (1.0 - u) * sa;
      const double x = cls.per_var_per_bit * g / pdf.site_pdf(draws[i].cell) + masked_term;
      ++n;
      const long double d = x - mean;
      mean += d / static_cast<long double>(n);
      m2 += d * (x - mean);
      const double running = static_cast<double>(mean);
      est.trace.push_back(running);
      est.variance_trace.push_back(n > 1 ? static_cast<double>(m2 / static_cast<long double>(n - 1)) : 0.0);
      est.max_running_mean = n == 1 ? running : std::max(est.max_running_mean, running);
      if (tracker && !est.samples_to_poc && tracker->push(running)) {
        est.samples_to_poc = n;
        if (options.samples == 0) stop = true;
      }
    }
  }
  est.samples_drawn = n;
  est.mean = static_cast<double>(mean);
  est.variance = n > 1 ? static_cast<double>(m2 / static_cast<long double>(n - 1)) : 0.0;
  return est;
}

// ---------------------------------------------------------------------------
// Studies

std::vector<SoftwareFaultSite> software_sites(const NetworkProfile& profile, int bit_width) {
  std::vector<SoftwareFaultSite> out;
  const auto& layers = profile.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    std::vector<FFType> types = {FFType::InputActivation, FFType::Weight};
    if (i + 1 == layers.size()) types.push_back(FFType::OutputActivation);
    for (FFType t : types) {
      for (std::uint64_t v = 0; v < l.var_count[t]; ++v) {
        for (int b = 0; b < bit_width; ++b) out.push_back({l.layer_id, t, v, b});
      }
    }
  }
  return out;
}

RAEstimate ra_sw_baseline(const SiteEvaluator& evaluator, const std::vector<SoftwareFaultSite>& sites,
                          std::uint64_t samples, std::uint64_t seed, unsigned threads) {
  if (sites.empty()) throw ValidationError("no software fault sites");
  RAEstimate est;
  est.seed = seed;
  Rng rng(seed);
  std::vector<SoftwareFaultSite> drawn;
  drawn.reserve(samples);
  for (std::uint64_t i = 0; i < samples; ++i) {
    drawn.push_back(sites[rng.below(sites.size())]);
    rng.next();
    rng.next();
  }
  const auto acc = evaluate_all(evaluator, drawn, threads);
  long double mean = 0.0L, m2 = 0.0L;
  for (std::uint64_t i = 0; i < samples; ++i) {
    const long double d = acc[i] - mean;
    mean += d / static_cast<long double>(i + 1);
    m2 += d * (acc[i] - mean);
    est.trace.push_back(static_cast<double>(mean));
    est.variance_trace.push_back(i > 0 ? static_cast<double>(m2 / static_cast<long double>(i)) : 0.0);
  }
  est.samples_drawn = samples;
  est.mean = static_cast<double>(mean);
  est.variance = est.variance_trace.empty() ? 0.0 : est.variance_trace.back();
  return est;
}

MethodsResult methods_study(const SiteProbabilityTable& table, const NetworkProfile& profile,
                            const SiteEvaluator& hardware, const SiteEvaluator& software,
                            bool use_uf, unsigned threads) {
  MethodsResult r;
  r.sa = hardware.sa();
  std::vector<SoftwareFaultSite> sites;
  sites.reserve(table.total_sites());
  table.for_each_site([&](std::size_t, const SoftwareFaultSite& s) { sites.push_back(s); });
  const auto acc = evaluate_all(hardware, sites, threads);

  long double ra = table.masked_probability() * r.sa;
  long double ra_nc = ra;
  long double uniform = 0.0L;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto& c = table.class_of(sites[i]);
    const double u = use_uf ? c.utilization : 1.0;
    const double g = u * acc[i] + (1.0 - u) * r.sa;
    ra += static_cast<long double>(c.per_var_per_bit) * g;
    ra_nc += static_cast<long double>(c.per_var_per_bit) * (sites[i].var_type == FFType::ControlGlobal ? r.sa : g);
    uniform += g;
  }
  r.ra_true = static_cast<double>(ra);
  r.ra_true_nc = static_cast<double>(ra_nc);
  r.ra_sw_ca = static_cast<double>(uniform / static_cast<long double>(sites.size()));

  const auto sw_sites = software_sites(profile, table.bit_width());
  const auto sw_acc = evaluate_all(software, sw_sites, threads);
  long double sw = 0.0L;
  for (double a : sw_acc) sw += a;
  r.ra_sw = static_cast<double>(sw / static_cast<long double>(sw_sites.size()));
  return r;
}

AcceleratorConfig hardened(const AcceleratorConfig& config, std::optional<FFType> t, double hardened_fit) {
  if (!(hardened_fit >= 0.0)) throw ValidationError("hardened FIT rate must be non-negative");
  AcceleratorConfig out = config;
  for (FFType x : kFFTypes) {
    if (!t || *t == x) out.raw_fit[x] = hardened_fit;
  }
  return out;
}

SiteProbabilityTable hardened_table(const NetworkProfile& profile, const AcceleratorConfig& config,
                                    std::optional<FFType> t, double hardened_fit) {
  if (config.avf_mode) throw ValidationError("hardening needs raw FIT rates; avf_mode is on");
  TableOptions opt;
  opt.normalize_against = config;
  return build_table(profile, hardened(config, t, hardened_fit), opt);
}

std::vector<HardenRow> hardening_study(const NetworkProfile& profile, const AcceleratorConfig& config,
                                       const SiteEvaluator& evaluator, bool use_uf, double hardened_fit) {
  const auto ra_of = [&](const SiteProbabilityTable& table) {
    return ra_expected(
               table, [&](const SoftwareFaultSite& s) { return evaluator.accuracy(s); },
               use_uf ? table_utilization(table) : SiteUtilization{}, evaluator.sa())
        .ra;
  };
  std::vector<HardenRow> rows;
  rows.push_back({"none", ra_of(build_table(profile, config))});
  for (FFType t : kFFTypes) rows.push_back({std::string(to_string(t)), ra_of(hardened_table(profile, config, t, hardened_fit))});
  rows.push_back({"all", ra_of(hardened_table(profile, config, std::nullopt, hardened_fit))});
  return rows;
}

FitRates fit_sdc_rates(const SiteProbabilityTable& table, const SiteEvaluator& evaluator,
                       const AcceleratorConfig& config, double threshold, bool use_uf) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("FIT threshold must lie in (0,1]");
  const double sa = evaluator.sa();
  const double limit = sa * (1.0 - threshold);
  long double fit = 0.0L, sdc = 0.0L;
  table.for_each_site([&](std::size_t cls, const SoftwareFaultSite& s) {
    const auto& c = table.classes()[cls];
    const double a = evaluator.accuracy(s);
    if (a > limit) return;
    const long double w = static_cast<long double>(c.per_var_per_bit) * (use_uf ? c.utilization : 1.0);
    fit += w;
    if (!evaluator.is_crash(s)) sdc += w;
  });
  // raw FIT is per megabyte; convert to the modeled FF population.
  long double mass = 0.0L;
  for (FFType t : kFFTypes) mass += static_cast<long double>(config.ff_count[t]) * config.raw_fit[t];
  mass /= 8.0L * 1024.0L * 1024.0L;
  return {threshold, static_cast<double>(fit * mass), static_cast<double>(sdc * mass)};
}

}  // namespace raest
