#pragma once

#include "raest/fault_site.hpp"
#include "raest/netprofile.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace raest {

// MAC share of a layer over the whole network.
double layer_prob(const NetworkProfile& profile, int layer_id);
// MAC share of a layer among the layers that hold variables of type t. This
// is the value used inside site probabilities: a type's FFs only ever hold
// variables of layers that have that type.
double layer_prob(const NetworkProfile& profile, int layer_id, FFType t);
double type_prob(const AcceleratorConfig& config, FFType t);
double var_prob(const NetworkProfile& profile, int layer_id, FFType t);
// Per-cell fault probability of a type-t FF given M cells in total.
double cell_fault_prob(const AcceleratorConfig& config, FFType t, double cell_count);
double site_prob(const NetworkProfile& profile, const AcceleratorConfig& config,
                 const SoftwareFaultSite& site);

// All sites sharing one (layer, type): same probability per site.
struct ProbClass {
  int layer_id = 0;
  FFType type = FFType::Weight;
  std::uint64_t var_count = 0;
  std::uint64_t mac_count = 0;  // the layer's MACs; 0 for control classes
  double per_var_per_bit = 0.0;
  double class_total = 0.0;     // per_var_per_bit * var_count * bit_width
  double utilization = 1.0;
};

struct TableOptions {
  // Raw-FIT weights are normalized against this config instead of the one
  // the table is built from. Used for hardening: lowering a type's FIT then
  // moves probability mass onto "no fault" instead of onto other types.
  std::optional<AcceleratorConfig> normalize_against;
  double cell_count = 1e6;
};

class SiteProbabilityTable {
 public:
  SiteProbabilityTable() = default;

  const std::vector<ProbClass>& classes() const { return classes_; }
  int bit_width() const { return bit_width_; }
  std::uint64_t total_sites() const { return total_sites_; }
  double cell_count() const { return cell_count_; }
  double normalization() const { return normalization_; }
  // Probability that the single fault strikes a cell that corrupts nothing.
  double masked_probability() const { return masked_; }

  std::optional<std::size_t> find(int layer_id, FFType t) const;
  const ProbClass& class_of(const SoftwareFaultSite& site) const;
  double site_prob(const SoftwareFaultSite& site) const;
  // Σ p(j) over every site plus the masked mass (compensated sum).
  double total_probability() const;
  Eigen::VectorXd class_totals() const;

  // Every site, class-major then variable then bit.
  void for_each_site(const std::function<void(std::size_t cls, const SoftwareFaultSite&)>& fn) const;

  void set_utilization(const std::vector<double>& per_layer);

 private:
  friend SiteProbabilityTable build_table(const NetworkProfile&, const AcceleratorConfig&,
                                          const TableOptions&);
  std::vector<ProbClass> classes_;
  int bit_width_ = 0;
  std::uint64_t total_sites_ = 0;
  double cell_count_ = 0.0;
  double normalization_ = 0.0;
  double masked_ = 0.0;
};

SiteProbabilityTable build_table(const NetworkProfile& profile, const AcceleratorConfig& config,
                                 const TableOptions& options = {});

struct RAResult {
  double ra = 0.0;
  double sa = 0.0;
  PerType<double> components{};  // Σ p·g per type
  double masked = 0.0;           // masked mass times SA
};

using SiteAccuracy = std::function<double(const SoftwareFaultSite&)>;
using SiteUtilization = std::function<double(const SoftwareFaultSite&)>;

// RA = Σ p(j)·(UF·A + (1−UF)·SA) + masked·SA. A null uf means UF ≡ 1.
RAResult ra_expected(const SiteProbabilityTable& table, const SiteAccuracy& accuracy,
                     const SiteUtilization& uf, double sa);

// UF taken from the table's per-class utilization.
SiteUtilization table_utilization(const SiteProbabilityTable& table);

}  // namespace raest
