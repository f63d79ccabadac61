#pragma once

#include "raest/fault_site.hpp"
#include "raest/microdnn.hpp"
#include "raest/netprofile.hpp"

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

namespace raest {

// Hardware: reuse-bounded data faults, crashing/benign global control,
// local control as a reuse-bounded datapath fault. Software: every fault
// corrupts all uses of the variable and control sites do not exist.
enum class FaultModel : std::uint8_t { Hardware, Software };

// Source of A(j). Implementations must be safe for concurrent calls.
class SiteEvaluator {
 public:
  virtual ~SiteEvaluator() = default;
  virtual double sa() const = 0;
  virtual double accuracy(const SoftwareFaultSite& site) const = 0;
  virtual bool is_crash(const SoftwareFaultSite& site) const = 0;
};

// Cost in single inferences of evaluating one site.
std::uint64_t inference_cost(const SoftwareFaultSite& site, const AcceleratorConfig& config,
                             std::size_t evalset_size);

// Runs the micro network, one faulty pass per evalset input, reusing cached
// fault-free activations so only the layers from the fault onward re-run.
class AccuracyEvaluator final : public SiteEvaluator {
 public:
  AccuracyEvaluator(MicroNetwork net, EvalSet evalset, AcceleratorConfig config,
                    FaultModel model = FaultModel::Hardware,
                    ReuseSchedule schedule = ReuseSchedule::Indexed);
  ~AccuracyEvaluator() override;

  double sa() const override { return sa_; }
  double accuracy(const SoftwareFaultSite& site) const override;
  bool is_crash(const SoftwareFaultSite& site) const override;

  FaultSpec fault_for(const SoftwareFaultSite& site) const;
  FaultModel model() const { return model_; }
  const MicroNetwork& network() const { return net_; }
  std::uint64_t inferences_run() const;

 private:
  struct Traces;
  double compute(const SoftwareFaultSite& site) const;

  MicroNetwork net_;
  EvalSet evalset_;
  AcceleratorConfig config_;
  FaultModel model_;
  ReuseSchedule schedule_;
  std::unique_ptr<Traces> traces_;
  double sa_ = 0.0;
  mutable std::mutex mutex_;
  mutable std::unordered_map<SoftwareFaultSite, double, SiteHash> memo_;
  mutable std::uint64_t inferences_ = 0;
};

// Evaluates sites on `threads` workers; results come back in input order.
std::vector<double> evaluate_all(const SiteEvaluator& evaluator, std::span<const SoftwareFaultSite> sites,
                                 unsigned threads);

}  // namespace raest
