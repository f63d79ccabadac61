#pragma once

#include "raest/evaluator.hpp"
#include "raest/netprofile.hpp"
#include "raest/prob_transfer.hpp"
#include "raest/rng.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace raest {

class AccuracyArchive;

enum class Strategy : std::uint8_t { Uniform, MacWeighted, Importance, ImportanceBP };

inline constexpr std::array<Strategy, 4> kStrategies = {Strategy::Uniform, Strategy::MacWeighted,
                                                        Strategy::Importance, Strategy::ImportanceBP};

std::string_view to_string(Strategy s);  // uniform, mac, is, is-b
std::optional<Strategy> parse_strategy(std::string_view name);

// Assumed absolute accuracy drop per bit class.
struct BpModel {
  std::array<double, 5> drop{};  // indexed by BitClass

  static BpModel standard();  // 0.15 exponent MSB, 0.08 next four exponent bits
  static BpModel zero() { return {}; }
  double drop_for(NumericFormat format, int bit) const;
};

struct SamplingStrategy {
  Strategy tag = Strategy::Importance;
  std::optional<BpModel> bp_model;  // set iff tag is ImportanceBP

  static SamplingStrategy make(Strategy tag);
};

// A PDF over fault sites. Each cell covers `var_count` consecutive variables
// of one class at one bit position, all with the same per-site weight.
class DiscretePDF {
 public:
  struct Cell {
    std::size_t cls = 0;
    std::uint64_t var_begin = 0;
    std::uint64_t var_count = 0;
    int bit = 0;
    double site_weight = 0.0;
  };
  struct Draw {
    SoftwareFaultSite site;
    std::size_t cell = 0;
  };

  DiscretePDF(std::vector<Cell> cells, const SiteProbabilityTable& table);

  const std::vector<Cell>& cells() const { return cells_; }
  // Σ site_weight over every site: the normalization constant.
  double total() const { return total_; }
  // Probability of drawing one particular site of the cell.
  double site_pdf(std::size_t cell) const { return cells_[cell].site_weight / total_; }
  Eigen::VectorXd cell_masses() const;

  // Consumes exactly three RNG outputs: cell, variable, then a third reserved
  // so every strategy advances the stream identically.
  Draw draw(Rng& rng) const;

 private:
  std::vector<Cell> cells_;
  std::vector<double> cumulative_;
  double total_ = 0.0;
  std::vector<int> layer_of_cls_;
  std::vector<FFType> type_of_cls_;
};

// Measures the drop per bit class by random injection: `per_class` data
// sites per class, drawn in proportion to p(j) at bit positions of the class.
BpModel profile_bp_model(const SiteProbabilityTable& table, const SiteEvaluator& evaluator, NumericFormat format,
                         std::uint64_t per_class, std::uint64_t seed, unsigned threads = 1);

DiscretePDF build_pdf(const SamplingStrategy& strategy, const SiteProbabilityTable& table,
                      const NetworkProfile& profile, double sa, NumericFormat format);

// PDF ∝ p(j)·g(j) from exact accuracies: the zero-variance sampler.
DiscretePDF build_oracle_pdf(const SiteProbabilityTable& table, const AccuracyArchive& archive, bool use_uf);

struct PocCriteria {
  std::uint64_t window = 300;
  double mean_tol = 0.003;  // relative to the ground truth
  double var_thresh = 1e-2;
};

// Incremental point-of-convergence test over a running-mean trace.
class PocTracker {
 public:
  PocTracker(double truth, PocCriteria criteria);
  // Feeds the next running mean; true once the trailing window satisfies the
  // criteria at this sample.
  bool push(double running_mean);

 private:
  double truth_;
  PocCriteria c_;
  std::vector<double> ring_;
  std::uint64_t n_ = 0;
  long double sum_ = 0.0L;
  long double sumsq_ = 0.0L;
};

// 1-based sample count of the earliest convergence, if any.
std::optional<std::uint64_t> detect_poc(const std::vector<double>& trace, double truth,
                                        const PocCriteria& criteria = {});

struct EstimateOptions {
  std::uint64_t samples = 0;             // fixed K; 0 means run until PoC
  std::optional<double> ground_truth;    // enables samples_to_poc and PoC stopping
  PocCriteria poc;
  std::uint64_t max_samples = 200'000;   // cap for PoC mode
  std::uint64_t seed = 1;
  bool use_uf = true;
  unsigned threads = 1;
  std::uint64_t batch = 512;
};

struct RAEstimate {
  double mean = 0.0;
  double variance = 0.0;  // sample variance of the per-sample contributions
  std::uint64_t samples_drawn = 0;
  std::vector<double> trace;           // running mean after each sample
  std::vector<double> variance_trace;  // running variance after each sample
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> samples_to_poc;
  double max_running_mean = 0.0;
};

// Per-sample contribution is p(X)·g(X)/PDF(X) + masked·SA where
// g = UF·A + (1−UF)·SA.
RAEstimate estimate_ra(const DiscretePDF& pdf, const SiteProbabilityTable& table,
                       const SiteEvaluator& evaluator, const EstimateOptions& options);

// ---------------------------------------------------------------------------
// Comparative studies

// Sites of the software-level fault model: weights and input activations of
// every layer plus the output activations of the last layer.
std::vector<SoftwareFaultSite> software_sites(const NetworkProfile& profile, int bit_width);

// Uniform-sampling estimate over `sites` with the software evaluator.
RAEstimate ra_sw_baseline(const SiteEvaluator& evaluator, const std::vector<SoftwareFaultSite>& sites,
                          std::uint64_t samples, std::uint64_t seed, unsigned threads = 1);

struct MethodsResult {
  double sa = 0.0;
  double ra_true = 0.0;
  double ra_true_nc = 0.0;  // global control sites assumed fault free
  double ra_sw = 0.0;       // uniform over software sites, full corruption
  double ra_sw_ca = 0.0;    // uniform over all sites, hardware accuracies
};

// Exact values by enumeration of every site.
MethodsResult methods_study(const SiteProbabilityTable& table, const NetworkProfile& profile,
                            const SiteEvaluator& hardware, const SiteEvaluator& software,
                            bool use_uf, unsigned threads = 1);

struct HardenRow {
  std::string label;  // none, all, or an FF type name
  double ra = 0.0;
};

inline constexpr double kDiceFit = 200.0;

std::vector<HardenRow> hardening_study(const NetworkProfile& profile, const AcceleratorConfig& config,
                                       const SiteEvaluator& evaluator, bool use_uf,
                                       double hardened_fit = kDiceFit);

// Config with one type (or all types when t is empty) set to the hardened rate.
AcceleratorConfig hardened(const AcceleratorConfig& config, std::optional<FFType> t, double hardened_fit = kDiceFit);
// Table for a hardened config, normalized against the original.
SiteProbabilityTable hardened_table(const NetworkProfile& profile, const AcceleratorConfig& config,
                                    std::optional<FFType> t, double hardened_fit = kDiceFit);

struct FitRates {
  double threshold = 0.0;
  double fit = 0.0;  // includes crashes
  double sdc = 0.0;  // silent corruptions only
};

inline constexpr std::array<double, 2> kFitThresholds = {0.2, 0.4};

// A site fails when A(j) ≤ SA·(1−T). Rates are Σ p·UF over failing sites,
// scaled by the configured raw-FIT mass (FIT per MB converted per FF).
FitRates fit_sdc_rates(const SiteProbabilityTable& table, const SiteEvaluator& evaluator,
                       const AcceleratorConfig& config, double threshold, bool use_uf);

}  // namespace raest
