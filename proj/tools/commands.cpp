#include "commands.hpp"

#include "raest/csv.hpp"
#include "raest/error.hpp"
#include "raest/evaluator.hpp"
#include "raest/toy.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace raest::cli {

namespace {

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string str(double v) { return format_double(v); }
std::string str(std::uint64_t v) { return std::to_string(v); }
std::string str(int v) { return std::to_string(v); }

std::string network_name(const Context& ctx, const GlobalOptions& g) {
  return ctx.config.name.empty() ? g.config.stem().string() : ctx.config.name;
}

// Files written by one command. Unless commit() runs, the destructor deletes
// them so a failed run leaves no partial outputs behind.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;
  ~Outputs() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& f : files_) fs::remove(f, ec);
  }

  fs::path add(const std::string& name) {
    files_.push_back(dir_ / name);
    return files_.back();
  }
  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
  bool committed_ = false;
};

CsvMeta meta(const std::string& schema, const std::string& hash, std::uint64_t seed,
             std::map<std::string, std::string> extra = {}) {
  return CsvMeta{schema, 1, hash, seed, std::move(extra)};
}

bool parse_uf(const std::string& uf) {
  if (uf == "actual") return true;
  if (uf == "one") return false;
  throw ValidationError("--uf must be 'one' or 'actual', got '" + uf + "'");
}

Strategy strategy_or_throw(const std::string& name) {
  const auto s = parse_strategy(name);
  if (!s) throw ValidationError("unknown strategy '" + name + "' (uniform, mac, is, is-b)");
  return *s;
}

// Source of A(j) for sampling runs: an archive when one is given or had to
// be computed for the ground truth, the live network otherwise.
struct Accuracies {
  std::optional<AccuracyArchive> archive;
  std::unique_ptr<SiteEvaluator> evaluator;
};

AccuracyArchive compute_archive(const Context& ctx, std::uint64_t max_inferences, unsigned threads) {
  ctx.require_network("exhaustive oracle");
  const SiteProbabilityTable table = build_table(ctx.profile, ctx.accel());
  const AccuracyEvaluator hw(*ctx.net, *ctx.evalset, ctx.accel(), FaultModel::Hardware);
  return exhaustive_ra(table, ctx.accel(), hw, ctx.evalset->size(), {max_inferences, threads}).archive;
}

Accuracies accuracies(const Context& ctx, const fs::path& archive_path, bool need_archive,
                      std::uint64_t max_inferences, unsigned threads) {
  Accuracies a;
  if (!archive_path.empty()) {
    a.archive = AccuracyArchive::load(archive_path);
  } else if (need_archive) {
    a.archive = compute_archive(ctx, max_inferences, threads);
  }
  if (a.archive) {
    if (a.archive->bit_width() != ctx.accel().bit_width) {
      throw ValidationError("archive bit width does not match the config");
    }
    a.evaluator = std::make_unique<ArchiveEvaluator>(*a.archive, ctx.accel().control_global_crash);
  } else {
    ctx.require_network("sampling without --archive");
    a.evaluator = std::make_unique<AccuracyEvaluator>(*ctx.net, *ctx.evalset, ctx.accel(), FaultModel::Hardware);
  }
  return a;
}

struct SamplingSetup {
  SiteProbabilityTable table;
  Accuracies acc;
  std::optional<double> truth;
  bool use_uf = true;
};

SamplingSetup sampling_setup(const Context& ctx, const GlobalOptions& g, const SamplingOptions& s,
                             bool truth_required) {
  if (s.samples == 0 && !s.poc) throw ValidationError("give either --samples K or --poc");
  if (!(s.threshold > 0.0)) throw ValidationError("--threshold must be positive");
  SamplingSetup out;
  out.use_uf = parse_uf(s.uf);
  out.table = table_for(ctx, parse_harden(s.harden));
  const bool need_truth = (s.poc || truth_required) && !s.truth;
  out.acc = accuracies(ctx, s.archive, need_truth, s.max_inferences, g.threads);
  if (s.truth) {
    out.truth = s.truth;
  } else if (out.acc.archive) {
    out.truth = archive_ra(out.table, *out.acc.archive, out.use_uf).ra;
  }
  return out;
}

SamplingStrategy strategy_for(Strategy tag, const SamplingSetup& setup, const Context& ctx, const SamplingOptions& s,
                              std::uint64_t seed, unsigned threads) {
  SamplingStrategy st = SamplingStrategy::make(tag);
  if (tag == Strategy::ImportanceBP && s.bp_profile > 0) {
    st.bp_model = profile_bp_model(setup.table, *setup.acc.evaluator, ctx.accel().numeric_format, s.bp_profile,
                                   seed, threads);
  }
  return st;
}

EstimateOptions estimate_options(const SamplingSetup& setup, const SamplingOptions& s, std::uint64_t seed,
                                 unsigned threads) {
  EstimateOptions o;
  o.samples = s.poc && s.samples == 0 ? 0 : s.samples;
  o.ground_truth = setup.truth;
  o.poc.mean_tol = s.threshold;
  o.max_samples = s.max_samples;
  o.seed = seed;
  o.use_uf = setup.use_uf;
  o.threads = threads;
  return o;
}

std::string sampling_key(const SamplingOptions& s) {
  std::ostringstream os;
  os << "samples=" << s.samples << ";poc=" << s.poc << ";threshold=" << format_double(s.threshold)
     << ";max=" << s.max_samples << ";harden=" << s.harden << ";uf=" << s.uf << ";bp=" << s.bp_profile;
  if (s.truth) os << ";truth=" << format_double(*s.truth);
  if (!s.archive.empty()) os << ";archive=" << hex64(fnv1a64(read_bytes(s.archive)));
  return os.str();
}

void write_trace(const fs::path& path, const RAEstimate& e, const std::string& hash, Strategy s,
                 const SamplingOptions& o) {
  CsvWriter w(path, meta("trace", hash, e.seed, {{"strategy", std::string(to_string(s))}, {"uf", o.uf},
                                                  {"harden", o.harden}}),
              {"sample_index", "running_mean", "running_variance"});
  for (std::size_t i = 0; i < e.trace.size(); ++i) {
    w.row({std::to_string(i + 1), str(e.trace[i]), str(e.variance_trace[i])});
  }
  w.close();
}

std::string poc_text(const RAEstimate& e) {
  return e.samples_to_poc ? std::to_string(*e.samples_to_poc) : std::string("none");
}

}  // namespace

// ---------------------------------------------------------------------------

void Context::require_network(const char* command) const {
  if (!net || !evalset) {
    throw ValidationError(std::string(command) + " needs 'network' and 'evalset' in the config");
  }
}

Context load_context(const fs::path& config_path) {
  if (config_path.empty()) throw ValidationError("--config is required");
  Context ctx;
  ctx.config = load_config(config_path);
  if (!ctx.config.network.empty() || !ctx.config.evalset.empty()) {
    if (ctx.config.network.empty() || ctx.config.evalset.empty()) {
      throw ValidationError("config must name both 'network' and 'evalset', or neither");
    }
    ctx.net = load_network(ctx.config.network);
    ctx.evalset = load_evalset(ctx.config.evalset);
    if (ctx.net->format() != ctx.evalset->format()) throw ValidationError("network and evalset formats differ");
    ctx.profile = derive_profile(*ctx.net, ctx.config.accel);
    apply_overrides(ctx.profile, ctx.config);
  } else {
    ctx.profile = profile_from_overrides(ctx.config);
  }
  require_valid(ctx.profile, ctx.config.accel);

  ConfigFile canonical = ctx.config;
  canonical.network.clear();
  canonical.evalset.clear();
  std::uint64_t h = fnv1a64(format_config(canonical));
  if (ctx.net) {
    h = fnv1a64(read_bytes(ctx.config.network), h);
    h = fnv1a64(read_bytes(ctx.config.evalset), h);
  }
  ctx.input_hash = h;
  return ctx;
}

HardenChoice parse_harden(const std::string& text) {
  if (text == "none" || text.empty()) return {};
  if (text == "all") return {true, std::nullopt};
  const auto t = parse_ff_type(text);
  if (!t) throw ValidationError("--harden takes none, all or an FF type name, got '" + text + "'");
  return {true, *t};
}

SiteProbabilityTable table_for(const Context& ctx, const HardenChoice& harden) {
  if (!harden.active) return build_table(ctx.profile, ctx.accel());
  return hardened_table(ctx.profile, ctx.accel(), harden.type);
}

std::string spec_hash(const Context& ctx, const std::string& command) {
  return hex64(fnv1a64(command, ctx.input_hash));
}

// ---------------------------------------------------------------------------

int run_make_toy(const GlobalOptions& g, const MakeToyOptions& o, std::ostream& log) {
  const auto fmt = parse_numeric_format(o.format);
  if (!fmt) throw ValidationError("unknown numeric format '" + o.format + "'");
  ToyOptions opt;
  opt.format = *fmt;
  opt.evalset_size = o.evalset_size;
  opt.min_margin = o.min_margin;
  ToyBundle toy = make_toy(o.preset, g.seed, opt);

  Outputs out(g.out);
  const fs::path net_path = out.add(o.preset + ".net");
  const fs::path evl_path = out.add(o.preset + ".evl");
  const fs::path cfg_path = out.add(o.preset + ".cfg");
  save_network(toy.net, net_path);
  save_evalset(toy.evalset, evl_path);
  toy.config.network = net_path.filename();
  toy.config.evalset = evl_path.filename();
  std::ofstream cfg(cfg_path, std::ios::binary | std::ios::trunc);
  cfg << "# toy preset " << o.preset << ", seed " << g.seed << "\n" << format_config(toy.config);
  cfg.close();
  if (!cfg) throw Error("cannot write " + cfg_path.string());
  out.commit();
  log << "wrote " << cfg_path.string() << "\n";
  return 0;
}

int run_profile(const GlobalOptions& g, std::ostream& log) {
  const Context ctx = load_context(g.config);
  const std::string hash = spec_hash(ctx, "profile");
  Outputs out(g.out);
  CsvWriter w(out.add("profile.csv"), meta("profile", hash, g.seed),
              {"layer_id", "var_type", "var_count", "mac_count", "utilization"});
  for (const auto& l : ctx.profile.layers()) {
    for (FFType t : kDataTypes) {
      if (l.var_count[t] == 0) continue;
      w.row({str(l.layer_id), std::string(to_string(t)), str(l.var_count[t]), str(l.mac_count), str(l.utilization)});
    }
  }
  for (FFType t : {FFType::ControlGlobal, FFType::ControlLocal}) {
    w.row({str(kControlLayer), std::string(to_string(t)), str(ctx.profile.control_var_count(t)), "0", "1"});
  }
  w.close();
  out.commit();
  log << "layers " << ctx.profile.layers().size() << ", MACs " << ctx.profile.total_macs() << "\n";
  return 0;
}

int run_probs(const GlobalOptions& g, const ProbsOptions& o, std::ostream& log) {
  const Context ctx = load_context(g.config);
  const SiteProbabilityTable table = table_for(ctx, parse_harden(o.harden));
  const std::string hash = spec_hash(ctx, "probs;harden=" + o.harden);
  Outputs out(g.out);
  CsvWriter w(out.add("probs.csv"),
              meta("probs", hash, g.seed,
                   {{"harden", o.harden}, {"bit_width", str(table.bit_width())},
                    {"masked", str(table.masked_probability())}}),
              {"layer_id", "var_type", "per_var_per_bit_prob", "class_total_prob"});
  for (const auto& c : table.classes()) {
    w.row({str(c.layer_id), std::string(to_string(c.type)), str(c.per_var_per_bit), str(c.class_total)});
  }
  w.close();
  out.commit();
  log << "classes " << table.classes().size() << ", sites " << table.total_sites() << ", total probability "
      << format_double(table.total_probability()) << "\n";
  return 0;
}

int run_oracle(const GlobalOptions& g, const OracleCmdOptions& o, std::ostream& log) {
  const Context ctx = load_context(g.config);
  ctx.require_network("oracle");
  const SiteProbabilityTable table = build_table(ctx.profile, ctx.accel());
  const AccuracyEvaluator hw(*ctx.net, *ctx.evalset, ctx.accel(), FaultModel::Hardware);
  const OracleResult r = exhaustive_ra(table, ctx.accel(), hw, ctx.evalset->size(), {o.max_inferences, g.threads});
  const double ra_one = archive_ra(table, r.archive, false).ra;
  const std::string hash = spec_hash(ctx, "oracle");

  Outputs out(g.out);
  r.archive.save(out.add("archive.csv"), hash, g.seed);
  // Class-level view: mean A(j) over the variables of each (class, bit).
  CsvWriter cw(out.add("class_accuracy.csv"), meta("class_accuracy", hash, g.seed),
               {"layer_id", "var_type", "bit_pos", "accuracy"});
  for (std::size_t e = 0; e < r.archive.entries().size(); ++e) {
    const auto& en = r.archive.entries()[e];
    for (int b = 0; b < r.archive.bit_width(); ++b) {
      cw.row({str(en.layer_id), std::string(to_string(en.type)), str(b), str(r.archive.class_bit_mean(e, b))});
    }
  }
  cw.close();
  std::vector<std::string> cols = {"ra", "ra_uf_one", "sa", "masked"};
  std::vector<std::string> row = {str(r.result.ra), str(ra_one), str(r.result.sa), str(r.result.masked)};
  for (FFType t : kFFTypes) {
    cols.push_back(std::string(to_string(t)));
    row.push_back(str(r.result.components[t]));
  }
  CsvWriter w(out.add("oracle.csv"), meta("oracle", hash, g.seed), cols);
  w.row(row);
  w.close();
  out.commit();
  log << "RA " << format_double(r.result.ra) << " (UF=1: " << format_double(ra_one) << "), SA "
      << format_double(r.result.sa) << ", " << hw.inferences_run() << " inferences\n";
  return 0;
}

int run_estimate(const GlobalOptions& g, const EstimateCmdOptions& o, std::ostream& log) {
  const Context ctx = load_context(g.config);
  const Strategy tag = strategy_or_throw(o.strategy);
  const SamplingSetup setup = sampling_setup(ctx, g, o.sampling, false);
  const SamplingStrategy st = strategy_for(tag, setup, ctx, o.sampling, g.seed, g.threads);
  const DiscretePDF pdf =
      build_pdf(st, setup.table, ctx.profile, setup.acc.evaluator->sa(), ctx.accel().numeric_format);
  const RAEstimate e =
      estimate_ra(pdf, setup.table, *setup.acc.evaluator, estimate_options(setup, o.sampling, g.seed, g.threads));

  const std::string hash = spec_hash(ctx, "estimate;strategy=" + o.strategy + ";" + sampling_key(o.sampling));
  Outputs out(g.out);
  write_trace(out.add("estimate_" + o.strategy + "_seed" + std::to_string(g.seed) + ".csv"), e, hash, tag,
              o.sampling);
  out.commit();
  log << "strategy,seed,ra,samples_to_poc\n"
      << o.strategy << "," << g.seed << "," << format_double(e.mean) << "," << poc_text(e) << "\n";
  return 0;
}

int run_compare(const GlobalOptions& g, const CompareOptions& o, std::ostream& log) {
  const Context ctx = load_context(g.config);
  std::vector<Strategy> strategies;
  std::vector<std::string> names = o.strategies;
  if (names.empty()) {
    for (Strategy s : kStrategies) names.emplace_back(to_string(s));
  }
  for (const auto& n : names) strategies.push_back(strategy_or_throw(n));
  std::vector<std::uint64_t> seeds = o.seeds;
  if (seeds.empty()) {
    if (o.runs == 0) throw ValidationError("seed list is empty");
    for (std::uint64_t k = 0; k < o.runs; ++k) seeds.push_back(g.seed + k);
  }
  const SamplingSetup setup = sampling_setup(ctx, g, o.sampling, true);

  // One PDF per strategy, built before any run so the runs only read shared state.
  std::vector<DiscretePDF> pdfs;
  for (Strategy s : strategies) {
    const SamplingStrategy st = strategy_for(s, setup, ctx, o.sampling, g.seed, 1);
    pdfs.push_back(build_pdf(st, setup.table, ctx.profile, setup.acc.evaluator->sa(), ctx.accel().numeric_format));
  }

  struct Job {
    std::size_t strategy;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    for (std::uint64_t sd : seeds) jobs.push_back({i, sd});
  }
  std::vector<RAEstimate> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      try {
        results[k] = estimate_ra(pdfs[jobs[k].strategy], setup.table, *setup.acc.evaluator,
                                 estimate_options(setup, o.sampling, jobs[k].seed, 1));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(g.threads, static_cast<unsigned>(jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::ostringstream key;
  key << "compare;strategies=";
  for (const auto& n : names) key << n << ",";
  key << ";seeds=";
  for (auto sd : seeds) key << sd << ",";
  key << ";" << sampling_key(o.sampling);
  const std::string hash = spec_hash(ctx, key.str());

  Outputs out(g.out);
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    write_trace(out.add("trace_" + names[jobs[k].strategy] + "_seed" + std::to_string(jobs[k].seed) + ".csv"),
                results[k], hash, strategies[jobs[k].strategy], o.sampling);
  }
  std::map<std::string, std::string> extra = {{"uf", o.sampling.uf}, {"harden", o.sampling.harden}};
  if (setup.truth) extra["truth"] = str(*setup.truth);
  CsvWriter w(out.add("summary.csv"), meta("summary", hash, g.seed, extra),
              {"strategy", "seed", "ra", "variance", "samples_drawn", "samples_to_poc", "max_running_mean"});
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    const auto& e = results[k];
    w.row({names[jobs[k].strategy], str(jobs[k].seed), str(e.mean), str(e.variance), str(e.samples_drawn),
           poc_text(e), str(e.max_running_mean)});
  }
  w.close();
  out.commit();

  log << "strategy,runs,converged,median_samples_to_poc\n";
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    std::vector<double> pocs;
    std::size_t converged = 0;
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      if (jobs[k].strategy != i) continue;
      const auto& p = results[k].samples_to_poc;
      if (p) ++converged;
      pocs.push_back(p ? static_cast<double>(*p) : INFINITY);
    }
    std::sort(pocs.begin(), pocs.end());
    const std::size_t m = pocs.size();
    const double median = m % 2 ? pocs[m / 2] : 0.5 * (pocs[m / 2 - 1] + pocs[m / 2]);
    log << names[i] << "," << m << "," << converged << "," << (std::isfinite(median) ? str(median) : "none")
        << "\n";
  }
  return 0;
}

int run_gridsim(const GlobalOptions& g, const GridsimOptions& o, std::ostream& log) {
  const Context ctx = load_context(g.config);
  if (o.pins == 0) throw ValidationError("--pins must be positive");
  const GridModel grid(ctx.profile, ctx.accel(), {o.columns, GridOptions{}.max_cells, g.seed});
  const GridTally tally = grid_simulate(grid, ctx.accel(), o.pins, g.seed, g.threads);
  const SiteProbabilityTable table = build_table(ctx.profile, ctx.accel());
  const std::vector<double> uf = measured_uf(grid);

  const auto n = static_cast<Eigen::Index>(grid.classes().size());
  Eigen::VectorXd analytical(n), empirical(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = grid.classes()[static_cast<std::size_t>(i)];
    const auto ti = table.find(c.layer_id, c.type);
    if (!ti) throw Error("grid class missing from the probability table");
    const double u = c.layer_id == kControlLayer ? 1.0 : uf[static_cast<std::size_t>(c.layer_id)];
    analytical[i] = table.classes()[*ti].class_total * u;
    empirical[i] = static_cast<double>(tally.class_hits[static_cast<std::size_t>(i)]) / static_cast<double>(o.pins);
  }
  const Eigen::VectorXd da = analytical.array() - analytical.mean();
  const Eigen::VectorXd de = empirical.array() - empirical.mean();
  const double pearson = da.dot(de) / std::sqrt(da.squaredNorm() * de.squaredNorm());

  std::ostringstream key;
  key << "gridsim;pins=" << o.pins << ";columns=" << o.columns;
  const std::string hash = spec_hash(ctx, key.str());
  Outputs out(g.out);
  CsvWriter w(out.add("gridsim.csv"),
              meta("gridsim", hash, g.seed,
                   {{"pins", str(o.pins)}, {"rows", str(grid.rows())}, {"columns", str(grid.columns())},
                    {"pearson", str(pearson)}}),
              {"layer_id", "var_type", "analytical_p", "empirical_p", "pins"});
  std::size_t outside = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = grid.classes()[static_cast<std::size_t>(i)];
    const double q = analytical[i];
    const double sd = std::sqrt(q * (1.0 - q) / static_cast<double>(o.pins));
    const double z = sd > 0.0 ? (empirical[i] - q) / sd : 0.0;
    if (std::fabs(z) > 3.0) ++outside;
    w.row({str(c.layer_id), std::string(to_string(c.type)), str(q), str(empirical[i]),
           str(tally.class_hits[static_cast<std::size_t>(i)])});
  }
  w.close();
  CsvWriter u(out.add("grid_uf.csv"), meta("grid_uf", hash, g.seed),
              {"layer_id", "configured_utilization", "measured_utilization", "idle_hits"});
  for (std::size_t l = 0; l < uf.size(); ++l) {
    u.row({str(static_cast<int>(l)), str(ctx.profile.layers()[l].utilization), str(uf[l]),
           str(tally.idle_hits_per_layer[l])});
  }
  u.close();
  out.commit();
  log << "grid " << grid.rows() << "x" << grid.columns() << ", pins " << o.pins << ", pearson "
      << format_double(pearson) << ", classes outside 3 sigma " << outside << "\n";
  return 0;
}

int run_study(const GlobalOptions& g, const StudyOptions& o, std::ostream& log) {
  const Context ctx = load_context(g.config);
  const bool use_uf = parse_uf(o.uf);
  if (o.study != "methods" && o.study != "harden" && o.study != "fitrate") {
    throw ValidationError("unknown study '" + o.study + "' (methods, harden, fitrate)");
  }
  if (o.study == "methods") ctx.require_network("study methods");
  const AccuracyArchive archive =
      o.archive.empty() ? compute_archive(ctx, o.max_inferences, g.threads) : AccuracyArchive::load(o.archive);
  if (archive.bit_width() != ctx.accel().bit_width) throw ValidationError("archive bit width does not match the config");
  const ArchiveEvaluator hw(archive, ctx.accel().control_global_crash);
  const SiteProbabilityTable table = build_table(ctx.profile, ctx.accel());
  const std::string name = network_name(ctx, g);
  std::string key = "study;" + o.study + ";uf=" + o.uf;
  if (!o.archive.empty()) key += ";archive=" + hex64(fnv1a64(read_bytes(o.archive)));
  const std::string hash = spec_hash(ctx, key);

  Outputs out(g.out);
  const fs::path path = out.add("study_" + o.study + ".csv");
  if (o.study == "methods") {
    const AccuracyEvaluator sw(*ctx.net, *ctx.evalset, ctx.accel(), FaultModel::Software);
    const MethodsResult m = methods_study(table, ctx.profile, hw, sw, use_uf, g.threads);
    CsvWriter w(path, meta("study_methods", hash, g.seed, {{"uf", o.uf}}),
                {"network", "sa", "ra_true", "ra_true_nc", "ra_sw", "ra_sw_ca"});
    w.row({name, str(m.sa), str(m.ra_true), str(m.ra_true_nc), str(m.ra_sw), str(m.ra_sw_ca)});
    w.close();
    log << "RA_True " << format_double(m.ra_true) << ", RA_True-nc " << format_double(m.ra_true_nc) << ", RA_SW "
        << format_double(m.ra_sw) << ", RA_SW-cA " << format_double(m.ra_sw_ca) << "\n";
  } else if (o.study == "harden") {
    const auto rows = hardening_study(ctx.profile, ctx.accel(), hw, use_uf);
    CsvWriter w(path, meta("study_harden", hash, g.seed, {{"uf", o.uf}, {"hardened_fit", str(kDiceFit)}}),
                {"network", "hardened", "ra", "gain"});
    const double base = rows.front().ra;
    for (const auto& r : rows) {
      w.row({name, r.label, str(r.ra), str(r.ra - base)});
      log << r.label << " " << format_double(r.ra) << "\n";
    }
    w.close();
  } else {
    // One row per network, a FIT and an SDC column per threshold.
    std::vector<std::string> cols = {"network"}, fit_cols, sdc_cols;
    std::vector<std::string> row = {name}, fit_vals, sdc_vals;
    for (double t : kFitThresholds) {
      const FitRates r = fit_sdc_rates(table, hw, ctx.accel(), t, use_uf);
      const std::string pct = str(static_cast<int>(std::lround(t * 100.0)));
      fit_cols.push_back("fit_t" + pct);
      sdc_cols.push_back("sdc_t" + pct);
      fit_vals.push_back(str(r.fit));
      sdc_vals.push_back(str(r.sdc));
      log << "T=" << format_double(t) << " FIT " << format_double(r.fit) << " SDC " << format_double(r.sdc) << "\n";
    }
    cols.insert(cols.end(), fit_cols.begin(), fit_cols.end());
    cols.insert(cols.end(), sdc_cols.begin(), sdc_cols.end());
    row.insert(row.end(), fit_vals.begin(), fit_vals.end());
    row.insert(row.end(), sdc_vals.begin(), sdc_vals.end());
    CsvWriter w(path, meta("study_fitrate", hash, g.seed, {{"uf", o.uf}}), cols);
    w.row(row);
    w.close();
  }
  out.commit();
  return 0;
}

}  // namespace raest::cli
