#include "raest/evaluator.hpp"

#include "raest/error.hpp"

#include <atomic>
#include <exception>
#include <thread>

namespace raest {

std::uint64_t inference_cost(const SoftwareFaultSite& site, const AcceleratorConfig&, std::size_t evalset_size) {
  // A global control fault either crashes or does nothing; no inference runs.
  if (site.var_type == FFType::ControlGlobal) return 0;
  return evalset_size;
}

struct AccuracyEvaluator::Traces {
  template <class S>
  using PerInput = std::vector<std::vector<Tensor<S>>>;
  std::variant<PerInput<float>, PerInput<half>, PerInput<std::int8_t>> data;
};

AccuracyEvaluator::AccuracyEvaluator(MicroNetwork net, EvalSet evalset, AcceleratorConfig config,
                                     FaultModel model, ReuseSchedule schedule)
    : net_(std::move(net)),
      evalset_(std::move(evalset)),
      config_(std::move(config)),
      model_(model),
      schedule_(schedule),
      traces_(std::make_unique<Traces>()) {
  if (net_.format() != evalset_.format()) throw ValidationError("evalset format does not match network format");
  if (evalset_.size() == 0) throw ValidationError("evalset is empty");
  std::visit([&](const auto& n) {
    using S = typename std::decay_t<decltype(n.layers().front().weights)>::Scalar;
    const auto& d = std::get<EvalData<S>>(evalset_.variant());
    Traces::PerInput<S> all;
    all.reserve(d.inputs.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < d.inputs.size(); ++i) {
      all.push_back(forward_trace(n, d.inputs[i]));
      if (argmax(all.back().back()) == d.labels[i]) ++correct;
    }
    sa_ = static_cast<double>(correct) / static_cast<double>(d.inputs.size());
    traces_->data = std::move(all);
  }, net_.variant());
}

AccuracyEvaluator::~AccuracyEvaluator() = default;

FaultSpec AccuracyEvaluator::fault_for(const SoftwareFaultSite& site) const {
  FaultSpec f;
  f.site = site;
  f.local_control_count = config_.ff_count[FFType::ControlLocal];
  if (model_ == FaultModel::Software) {
    if (is_control(site.var_type)) {
      throw ValidationError("site " + to_string(site) + ": control sites do not exist in the software fault model");
    }
    f.mode = FaultMode::FullCorruption;
    return f;
  }
  if (site.var_type == FFType::ControlGlobal) {
    f.mode = config_.control_global_crash ? FaultMode::Crash : FaultMode::ReuseBounded;
    return f;
  }
  f.mode = FaultMode::ReuseBounded;
  f.reuse = config_.reuse[site.var_type];
  return f;
}

bool AccuracyEvaluator::is_crash(const SoftwareFaultSite& site) const {
  return model_ == FaultModel::Hardware && site.var_type == FFType::ControlGlobal &&
         config_.control_global_crash;
}

double AccuracyEvaluator::accuracy(const SoftwareFaultSite& site) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = memo_.find(site); it != memo_.end()) return it->second;
  }
  const double a = compute(site);
  std::lock_guard lock(mutex_);
  memo_.emplace(site, a);
  return a;
}

std::uint64_t AccuracyEvaluator::inferences_run() const {
  std::lock_guard lock(mutex_);
  return inferences_;
}

double AccuracyEvaluator::compute(const SoftwareFaultSite& site) const {
  const ResolvedFault fault = resolve_fault(net_, fault_for(site), schedule_);
  if (fault.kind == ResolvedFault::Kind::Crash) return 0.0;
  if (fault.kind == ResolvedFault::Kind::NoEffect) return sa_;
  const auto labels = evalset_.labels();
  std::size_t correct = 0;
  std::visit([&](const auto& n) {
    using S = typename std::decay_t<decltype(n.layers().front().weights)>::Scalar;
    const auto& traces = std::get<Traces::PerInput<S>>(traces_->data);
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const FaultyPrediction p = resume_faulty(n, traces[i], fault);
      if (const int* label = std::get_if<int>(&p); label && *label == labels[i]) ++correct;
    }
  }, net_.variant());
  {
    std::lock_guard lock(mutex_);
    inferences_ += labels.size();
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::vector<double> evaluate_all(const SiteEvaluator& evaluator, std::span<const SoftwareFaultSite> sites,
                                 unsigned threads) {
  std::vector<double> out(sites.size());
  if (threads <= 1 || sites.size() < 2) {
    for (std::size_t i = 0; i < sites.size(); ++i) out[i] = evaluator.accuracy(sites[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= sites.size()) return;
      try {
        out[i] = evaluator.accuracy(sites[i]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = sites.size();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned n = std::min<unsigned>(threads, static_cast<unsigned>(sites.size()));
  for (unsigned t = 0; t < n; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace raest
