#include "raest/error.hpp"
#include "raest/estimator.hpp"
#include "raest/oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>

using namespace raest;

namespace {

// A(j) from a plain function; global control sites crash when asked to.
class FnEvaluator final : public SiteEvaluator {
 public:
  FnEvaluator(double sa, std::function<double(const SoftwareFaultSite&)> f, bool crash = false)
      : sa_(sa), f_(std::move(f)), crash_(crash) {}
  double sa() const override { return sa_; }
  double accuracy(const SoftwareFaultSite& s) const override {
    return crash_ && s.var_type == FFType::ControlGlobal ? 0.0 : f_(s);
  }
  bool is_crash(const SoftwareFaultSite& s) const override { return crash_ && s.var_type == FFType::ControlGlobal; }

 private:
  double sa_;
  std::function<double(const SoftwareFaultSite&)> f_;
  bool crash_;
};

LayerStats layer(int id, std::uint64_t macs, std::uint64_t ia, std::uint64_t w, std::uint64_t oa,
                 double util = 1.0) {
  LayerStats s;
  s.layer_id = id;
  s.mac_count = macs;
  s.var_count[FFType::InputActivation] = ia;
  s.var_count[FFType::Weight] = w;
  s.var_count[FFType::OutputActivation] = oa;
  s.utilization = util;
  return s;
}

AcceleratorConfig config(std::uint64_t ia, std::uint64_t w, std::uint64_t oa, std::uint64_t cg, std::uint64_t cl) {
  AcceleratorConfig c;
  c.ff_count[FFType::InputActivation] = ia;
  c.ff_count[FFType::Weight] = w;
  c.ff_count[FFType::OutputActivation] = oa;
  c.ff_count[FFType::ControlGlobal] = cg;
  c.ff_count[FFType::ControlLocal] = cl;
  for (FFType t : kFFTypes) c.raw_fit[t] = 600.0;
  return c;
}

// A small mixed system with crashing global control and under-utilized layers.
struct Mixed {
  NetworkProfile profile{{layer(0, 400, 12, 30, 6, 0.8), layer(1, 60, 6, 18, 3, 0.6)}, 3, 2};
  AcceleratorConfig accel = config(20, 20, 10, 3, 2);
  SiteProbabilityTable table = build_table(profile, accel);
};

// Accuracy between 0 and sa, depending on the bit and a site hash.
double pseudo_accuracy(const SoftwareFaultSite& s, double sa) {
  const double bit_penalty = s.bit_pos >= 10 ? 0.5 : 0.05;
  const double jitter = static_cast<double>(SiteHash{}(s) % 97) / 96.0;
  return std::max(0.0, sa * (1.0 - bit_penalty * jitter));
}

double exact_ra(const SiteProbabilityTable& t, const SiteEvaluator& e, bool use_uf) {
  return ra_expected(
             t, [&](const SoftwareFaultSite& s) { return e.accuracy(s); },
             use_uf ? table_utilization(t) : SiteUtilization{}, e.sa())
      .ra;
}

AccuracyArchive archive_of(const SiteProbabilityTable& t, const SiteEvaluator& e) {
  std::vector<AccuracyArchive::Entry> entries;
  for (const auto& c : t.classes()) {
    AccuracyArchive::Entry en{c.layer_id, c.type, c.var_count, {}};
    for (std::uint64_t v = 0; v < c.var_count; ++v) {
      for (int b = 0; b < t.bit_width(); ++b) en.accuracy.push_back(e.accuracy({c.layer_id, c.type, v, b}));
    }
    entries.push_back(std::move(en));
  }
  return AccuracyArchive(e.sa(), t.bit_width(), std::move(entries));
}

EstimateOptions fixed(std::uint64_t k, std::uint64_t seed, bool use_uf = false) {
  EstimateOptions o;
  o.samples = k;
  o.seed = seed;
  o.use_uf = use_uf;
  return o;
}

}  // namespace

TEST_CASE("strategy names") {
  for (Strategy s : kStrategies) CHECK(parse_strategy(to_string(s)) == s);
  CHECK(to_string(Strategy::ImportanceBP) == "is-b");
  CHECK_FALSE(parse_strategy("stratified"));
  CHECK(SamplingStrategy::make(Strategy::ImportanceBP).bp_model.has_value());
  CHECK_FALSE(SamplingStrategy::make(Strategy::Importance).bp_model.has_value());
}

TEST_CASE("standard bit heuristic") {
  const BpModel m = BpModel::standard();
  CHECK(m.drop_for(NumericFormat::FP16, 14) == 0.15);
  for (int b = 10; b <= 13; ++b) CHECK(m.drop_for(NumericFormat::FP16, b) == 0.08);
  CHECK(m.drop_for(NumericFormat::FP16, 15) == 0.0);
  CHECK(m.drop_for(NumericFormat::FP16, 3) == 0.0);
  CHECK(m.drop_for(NumericFormat::FP32, 30) == 0.15);
  CHECK(m.drop_for(NumericFormat::FP32, 25) == 0.0);
}

TEST_CASE("pdf shapes per strategy") {
  const Mixed m;
  const double sa = 0.9;
  SUBCASE("uniform gives every site the same mass") {
    const auto pdf = build_pdf(SamplingStrategy::make(Strategy::Uniform), m.table, m.profile, sa, NumericFormat::FP16);
    const double n = static_cast<double>(m.table.total_sites());
    for (std::size_t k = 0; k < pdf.cells().size(); ++k) CHECK(pdf.site_pdf(k) == doctest::Approx(1.0 / n));
  }
  SUBCASE("importance is proportional to p") {
    const auto pdf = build_pdf(SamplingStrategy::make(Strategy::Importance), m.table, m.profile, sa, NumericFormat::FP16);
    for (std::size_t k = 0; k < pdf.cells().size(); ++k) {
      CHECK(pdf.site_pdf(k) == doctest::Approx(m.table.classes()[pdf.cells()[k].cls].per_var_per_bit));
    }
  }
  SUBCASE("MAC weighting follows layer MACs") {
    const auto pdf = build_pdf(SamplingStrategy::make(Strategy::MacWeighted), m.table, m.profile, sa, NumericFormat::FP16);
    const auto masses = pdf.cell_masses();
    std::map<std::size_t, double> per_class;
    for (std::size_t k = 0; k < pdf.cells().size(); ++k) per_class[pdf.cells()[k].cls] += masses[static_cast<Eigen::Index>(k)];
    const auto w0 = m.table.find(0, FFType::Weight);
    const auto w1 = m.table.find(1, FFType::Weight);
    CHECK(per_class[*w0] / per_class[*w1] == doctest::Approx(400.0 / 60.0));
  }
  SUBCASE("is-b scales by the bit heuristic") {
    const auto pdf = build_pdf(SamplingStrategy::make(Strategy::ImportanceBP), m.table, m.profile, sa, NumericFormat::FP16);
    const auto& cells = pdf.cells();
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const double p = m.table.classes()[cells[k].cls].per_var_per_bit;
      const double expect = p * (sa - BpModel::standard().drop_for(NumericFormat::FP16, cells[k].bit));
      CHECK(cells[k].site_weight == doctest::Approx(expect));
    }
  }
  SUBCASE("degenerate and mismatched inputs") {
    SamplingStrategy bad{Strategy::ImportanceBP, std::nullopt};
    CHECK_THROWS_AS(build_pdf(bad, m.table, m.profile, sa, NumericFormat::FP16), ValidationError);
    SamplingStrategy over = SamplingStrategy::make(Strategy::ImportanceBP);
    over.bp_model->drop[0] = 1.5;
    CHECK_THROWS_AS(build_pdf(over, m.table, m.profile, sa, NumericFormat::FP16), ValidationError);
    CHECK_THROWS_AS(build_pdf(SamplingStrategy::make(Strategy::Uniform), m.table, m.profile, sa, NumericFormat::INT8),
                    ValidationError);
    SamplingStrategy all_dead{Strategy::ImportanceBP, BpModel{{1.0, 1.0, 1.0, 1.0, 1.0}}};
    CHECK_THROWS_AS(build_pdf(all_dead, m.table, m.profile, sa, NumericFormat::FP16), ValidationError);
  }
}

TEST_CASE("importance over two classes with mass 0.9 and 0.1") {
  const NetworkProfile p({layer(0, 9, 0, 4, 0), layer(1, 1, 0, 4, 0)}, 0, 0);
  const auto table = build_table(p, config(0, 8, 0, 0, 0));
  const auto pdf = build_pdf(SamplingStrategy::make(Strategy::Importance), table, p, 1.0, NumericFormat::FP16);
  const auto masses = pdf.cell_masses();
  double first = 0.0;
  for (std::size_t k = 0; k < pdf.cells().size(); ++k) {
    if (pdf.cells()[k].cls == 0) first += masses[static_cast<Eigen::Index>(k)];
  }
  CHECK(first == doctest::Approx(0.9));
}

TEST_CASE("draws") {
  SUBCASE("single class") {
    const NetworkProfile p({layer(0, 5, 0, 3, 0)}, 0, 0);
    const auto table = build_table(p, config(0, 4, 0, 0, 0));
    const auto pdf = build_pdf(SamplingStrategy::make(Strategy::Importance), table, p, 1.0, NumericFormat::FP16);
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
      const auto d = pdf.draw(rng);
      CHECK(d.site.layer_id == 0);
      CHECK(d.site.var_type == FFType::Weight);
      CHECK(d.site.var_index < 3);
    }
  }
  SUBCASE("0.75/0.25 split stays within 3 sigma") {
    const NetworkProfile p({layer(0, 3, 0, 2, 0), layer(1, 1, 0, 2, 0)}, 0, 0);
    const auto table = build_table(p, config(0, 4, 0, 0, 0));
    const auto pdf = build_pdf(SamplingStrategy::make(Strategy::Importance), table, p, 1.0, NumericFormat::FP16);
    Rng rng(12345);
    const int n = 100000;
    int first = 0;
    for (int i = 0; i < n; ++i) first += pdf.draw(rng).site.layer_id == 0;
    const double sigma = std::sqrt(n * 0.75 * 0.25);
    CHECK(std::abs(first - 0.75 * n) < 3.0 * sigma);
  }
  SUBCASE("same seed, same sequence; three outputs per draw") {
    const Mixed m;
    const auto pdf = build_pdf(SamplingStrategy::make(Strategy::Uniform), m.table, m.profile, 0.9, NumericFormat::FP16);
    Rng a(77), b(77), c(77);
    for (int i = 0; i < 500; ++i) {
      CHECK(pdf.draw(a).site == pdf.draw(b).site);
      c.next();
      c.next();
      c.next();
    }
    CHECK(a.next() == c.next());
  }
}

TEST_CASE("constant accuracy under importance sampling has zero variance") {
  const Mixed m;
  const FnEvaluator e(0.9, [](const SoftwareFaultSite&) { return 0.7; });
  const auto pdf = build_pdf(SamplingStrategy::make(Strategy::Importance), m.table, m.profile, 0.9, NumericFormat::FP16);
  const auto est = estimate_ra(pdf, m.table, e, fixed(2000, 3));
  CHECK(est.samples_drawn == 2000);
  CHECK(est.trace.size() == 2000);
  CHECK(est.variance < 1e-24);
  for (double x : est.trace) CHECK(x == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("the oracle pdf needs one sample") {
  const Mixed m;
  const FnEvaluator e(0.9, [](const SoftwareFaultSite& s) { return pseudo_accuracy(s, 0.9); }, true);
  for (bool use_uf : {false, true}) {
    const AccuracyArchive archive = archive_of(m.table, e);
    const ArchiveEvaluator ae(archive, true);
    const double truth = exact_ra(m.table, e, use_uf);
    const auto pdf = build_oracle_pdf(m.table, archive, use_uf);
    const auto one = estimate_ra(pdf, m.table, ae, fixed(1, 8, use_uf));
    CHECK(one.mean == doctest::Approx(truth).epsilon(1e-12));
    const auto many = estimate_ra(pdf, m.table, ae, fixed(3000, 9, use_uf));
    CHECK(many.variance < 1e-20);
    CHECK(archive_ra(m.table, archive, use_uf).ra == doctest::Approx(truth).epsilon(1e-12));
  }
}

TEST_CASE("importance with equal p reproduces uniform exactly") {
  // Two equal layers of four weights: every site has p = 2^-7.
  const NetworkProfile p({layer(0, 10, 0, 4, 0), layer(1, 10, 0, 4, 0)}, 0, 0);
  const auto table = build_table(p, config(0, 8, 0, 0, 0));
  const FnEvaluator e(0.9, [](const SoftwareFaultSite& s) { return pseudo_accuracy(s, 0.9); });
  const auto u = build_pdf(SamplingStrategy::make(Strategy::Uniform), table, p, 0.9, NumericFormat::FP16);
  const auto i = build_pdf(SamplingStrategy::make(Strategy::Importance), table, p, 0.9, NumericFormat::FP16);
  const auto a = estimate_ra(u, table, e, fixed(3000, 21));
  const auto b = estimate_ra(i, table, e, fixed(3000, 21));
  CHECK(a.trace == b.trace);
  CHECK(a.variance == b.variance);
}

TEST_CASE("is-b with a zero drop model matches importance") {
  const Mixed m;
  const double sa = 0.875;
  const FnEvaluator e(sa, [sa](const SoftwareFaultSite& s) { return pseudo_accuracy(s, sa); }, true);
  const auto is = build_pdf(SamplingStrategy::make(Strategy::Importance), m.table, m.profile, sa, NumericFormat::FP16);
  const auto isb = build_pdf(SamplingStrategy{Strategy::ImportanceBP, BpModel::zero()}, m.table, m.profile, sa,
                             NumericFormat::FP16);
  const Eigen::VectorXd diff = is.cell_masses() - isb.cell_masses();
  CHECK(diff.cwiseAbs().maxCoeff() < 1e-15);
  const auto a = estimate_ra(is, m.table, e, fixed(2000, 5));
  const auto b = estimate_ra(isb, m.table, e, fixed(2000, 5));
  CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-12));
}

TEST_CASE("a pdf that misses a live site is rejected") {
  const Mixed m;
  const FnEvaluator e(0.9, [](const SoftwareFaultSite&) { return 0.5; });
  BpModel kill_sign;
  kill_sign.drop[static_cast<std::size_t>(BitClass::Sign)] = 1.0;
  const auto pdf = build_pdf(SamplingStrategy{Strategy::ImportanceBP, kill_sign}, m.table, m.profile, 0.9,
                             NumericFormat::FP16);
  CHECK_THROWS_AS(estimate_ra(pdf, m.table, e, fixed(10, 1)), ValidationError);
  const auto ok = build_pdf(SamplingStrategy::make(Strategy::Importance), m.table, m.profile, 0.9, NumericFormat::FP16);
  CHECK_THROWS_AS(estimate_ra(ok, m.table, e, EstimateOptions{}), ValidationError);
}

TEST_CASE("estimates are unbiased and tighten as K grows") {
  const Mixed m;
  const FnEvaluator e(0.9, [](const SoftwareFaultSite& s) { return pseudo_accuracy(s, 0.9); }, true);
  const double truth = exact_ra(m.table, e, true);
  const auto pdf = build_pdf(SamplingStrategy::make(Strategy::Uniform), m.table, m.profile, 0.9, NumericFormat::FP16);
  double mse_small = 0.0, mse_large = 0.0, mean_large = 0.0;
  const int seeds = 60;
  for (int s = 0; s < seeds; ++s) {
    const auto est = estimate_ra(pdf, m.table, e, fixed(1600, 500 + static_cast<std::uint64_t>(s), true));
    const double at100 = est.trace[99];
    mse_small += (at100 - truth) * (at100 - truth);
    mse_large += (est.mean - truth) * (est.mean - truth);
    mean_large += est.mean;
  }
  CHECK(mse_large < mse_small);
  // Standard error of the seed mean is about sqrt(mse/seeds).
  mean_large /= seeds;
  CHECK(std::abs(mean_large - truth) < 4.0 * std::sqrt(mse_large / seeds / seeds));
}

TEST_CASE("worker count does not change the estimate") {
  const Mixed m;
  const FnEvaluator e(0.9, [](const SoftwareFaultSite& s) { return pseudo_accuracy(s, 0.9); }, true);
  const auto pdf = build_pdf(SamplingStrategy::make(Strategy::MacWeighted), m.table, m.profile, 0.9, NumericFormat::FP16);
  auto o = fixed(2500, 4, true);
  const auto one = estimate_ra(pdf, m.table, e, o);
  o.threads = 3;
  o.batch = 97;
  const auto three = estimate_ra(pdf, m.table, e, o);
  CHECK(one.trace == three.trace);
  CHECK(one.variance_trace == three.variance_trace);
}

TEST_CASE("running to convergence stops at the PoC") {
  const Mixed m;
  const FnEvaluator e(0.9, [](const SoftwareFaultSite& s) { return pseudo_accuracy(s, 0.9); }, true);
  const double truth = exact_ra(m.table, e, true);
  const auto pdf = build_pdf(SamplingStrategy::make(Strategy::Importance), m.table, m.profile, 0.9, NumericFormat::FP16);
  EstimateOptions o;
  o.ground_truth = truth;
  o.seed = 6;
  const auto est = estimate_ra(pdf, m.table, e, o);
  REQUIRE(est.samples_to_poc);
  CHECK(est.samples_drawn == *est.samples_to_poc);
  CHECK(detect_poc(est.trace, truth) == est.samples_to_poc);
}

TEST_CASE("detect_poc") {
  const std::vector<double> flat(1000, 0.8);
  CHECK(detect_poc(flat, 0.8) == 300);
  const std::vector<double> off(5000, 0.84);
  CHECK_FALSE(detect_poc(off, 0.8));
  CHECK_FALSE(detect_poc(std::vector<double>(299, 0.8), 0.8));

  // Noisy start, then settles: the PoC lands one window after settling.
  std::vector<double> late(200, 2.0);
  late.resize(900, 0.8);
  CHECK(detect_poc(late, 0.8) == 500);

  // Within tolerance on the mean but too noisy.
  std::vector<double> noisy;
  for (int i = 0; i < 2000; ++i) noisy.push_back(i % 2 ? 0.5 : 1.1);
  CHECK_FALSE(detect_poc(noisy, 0.8));

  PocCriteria bad;
  bad.window = 0;
  CHECK_THROWS_AS(detect_poc(flat, 0.8, bad), ValidationError);
}

TEST_CASE("methods study on a crashing configuration") {
  const Mixed m;
  const double sa = 0.9;
  const FnEvaluator hw(sa, [sa](const SoftwareFaultSite& s) { return pseudo_accuracy(s, sa); }, true);
  const FnEvaluator sw(sa, [sa](const SoftwareFaultSite& s) { return pseudo_accuracy(s, sa) + 0.01; });
  const auto r = methods_study(m.table, m.profile, hw, sw, true);
  CHECK(r.sa == sa);
  CHECK(r.ra_true == doctest::Approx(exact_ra(m.table, hw, true)).epsilon(1e-12));
  CHECK(r.ra_true_nc > r.ra_true);
  CHECK(r.ra_sw > r.ra_true);

  const auto sites = software_sites(m.profile, 16);
  // Inputs and weights of both layers plus the last layer's outputs.
  CHECK(sites.size() == (12 + 30 + 6 + 18 + 3) * 16u);
  double mean = 0.0;
  for (const auto& s : sites) mean += sw.accuracy(s);
  CHECK(r.ra_sw == doctest::Approx(mean / static_cast<double>(sites.size())));

  const FnEvaluator flat(sa, [](const SoftwareFaultSite&) { return 0.6; });
  const auto base = ra_sw_baseline(flat, sites, 500, 2);
  CHECK(base.mean == doctest::Approx(0.6));
  CHECK(base.samples_drawn == 500);
}

TEST_CASE("hardening study brackets and ranks") {
  const Mixed m;
  const double sa = 0.9;
  const FnEvaluator e(sa, [sa](const SoftwareFaultSite& s) { return pseudo_accuracy(s, sa); }, true);
  const auto rows = hardening_study(m.profile, m.accel, e, true);
  REQUIRE(rows.size() == 7);
  CHECK(rows.front().label == "none");
  CHECK(rows.back().label == "all");
  double best = -1.0;
  std::string best_label;
  for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
    CHECK(rows.front().ra <= rows[i].ra);
    CHECK(rows[i].ra <= rows.back().ra);
    if (rows[i].ra > best) {
      best = rows[i].ra;
      best_label = rows[i].label;
    }
  }
  // Global control crashes, so protecting it pays the most.
  CHECK(best_label == "control_global");

  AcceleratorConfig avf = m.accel;
  avf.avf_mode = true;
  CHECK_THROWS_AS(hardened_table(m.profile, avf, FFType::Weight), ValidationError);
}

TEST_CASE("FIT and SDC rates") {
  const Mixed m;
  const double sa = 0.8;
  // Weights of layer 0 fail completely, everything else is harmless.
  const FnEvaluator e(sa, [sa](const SoftwareFaultSite& s) {
    return s.layer_id == 0 && s.var_type == FFType::Weight ? 0.0 : sa;
  }, true);
  const FnEvaluator dead(sa, [](const SoftwareFaultSite&) { return 0.0; });
  // With every site failing the rate is the FIT mass itself.
  const double scale = fit_sdc_rates(m.table, dead, m.accel, 1.0, false).fit;
  CHECK(scale > 0.0);

  const auto r = fit_sdc_rates(m.table, e, m.accel, 1.0, false);
  const auto& w0 = m.table.classes()[*m.table.find(0, FFType::Weight)];
  const auto& cg = m.table.classes()[*m.table.find(kControlLayer, FFType::ControlGlobal)];
  CHECK(r.fit == doctest::Approx(scale * (w0.class_total + cg.class_total)));
  CHECK(r.sdc == doctest::Approx(scale * w0.class_total));

  const auto r20 = fit_sdc_rates(m.table, e, m.accel, kFitThresholds[0], false);
  const auto r40 = fit_sdc_rates(m.table, e, m.accel, kFitThresholds[1], false);
  CHECK(r20.fit == doctest::Approx(r.fit));
  CHECK(r40.fit == doctest::Approx(r.fit));
  CHECK_THROWS_AS(fit_sdc_rates(m.table, e, m.accel, 0.0, false), ValidationError);
}

TEST_CASE("profiled bit model") {
  const Mixed m;
  const double sa = 0.9;
  // Exponent-MSB flips lose 0.3 everywhere, the rest nothing.
  const FnEvaluator e(sa, [sa](const SoftwareFaultSite& s) { return s.bit_pos == 14 ? sa - 0.3 : sa; });
  const BpModel bp = profile_bp_model(m.table, e, NumericFormat::FP16, 200, 1);
  CHECK(bp.drop_for(NumericFormat::FP16, 14) == doctest::Approx(0.3));
  CHECK(bp.drop_for(NumericFormat::FP16, 12) == 0.0);
  CHECK(bp.drop_for(NumericFormat::FP16, 2) == 0.0);
  CHECK_THROWS_AS(profile_bp_model(m.table, e, NumericFormat::FP16, 0, 1), ValidationError);
}
