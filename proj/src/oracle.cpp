#include "raest/oracle.hpp"

#include "raest/csv.hpp"
#include "raest/error.hpp"
#include "raest/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace raest {

// ---------------------------------------------------------------------------
// Archive

AccuracyArchive::AccuracyArchive(double sa, int bit_width, std::vector<Entry> entries)
    : sa_(sa), bit_width_(bit_width), entries_(std::move(entries)) {
  for (const auto& e : entries_) {
    if (e.accuracy.size() != e.var_count * static_cast<std::uint64_t>(bit_width_)) {
      throw ValidationError("archive entry size does not match var_count * bit_width");
    }
  }
}

const AccuracyArchive::Entry* AccuracyArchive::entry_for(int layer_id, FFType t) const {
  for (const auto& e : entries_) {
    if (e.layer_id == layer_id && e.type == t) return &e;
  }
  return nullptr;
}

bool AccuracyArchive::contains(const SoftwareFaultSite& s) const {
  const Entry* e = entry_for(s.layer_id, s.var_type);
  return e && s.var_index < e->var_count && s.bit_pos >= 0 && s.bit_pos < bit_width_;
}

double AccuracyArchive::at(const SoftwareFaultSite& s) const {
  const Entry* e = entry_for(s.layer_id, s.var_type);
  if (!e || s.var_index >= e->var_count || s.bit_pos < 0 || s.bit_pos >= bit_width_) {
    throw ValidationError("archive has no entry for site " + to_string(s));
  }
  return e->accuracy[s.var_index * static_cast<std::uint64_t>(bit_width_) + static_cast<std::uint64_t>(s.bit_pos)];
}

double AccuracyArchive::class_bit_mean(std::size_t entry, int bit) const {
  const auto& e = entries_.at(entry);
  long double sum = 0;
  for (std::uint64_t v = 0; v < e.var_count; ++v) sum += e.accuracy[v * static_cast<std::uint64_t>(bit_width_) + static_cast<std::uint64_t>(bit)];
  return static_cast<double>(sum / static_cast<long double>(e.var_count));
}

namespace {
const std::vector<std::string> kArchiveColumns = {"layer_id", "var_type", "var_index", "bit_pos", "accuracy"};
}

void AccuracyArchive::save(const std::filesystem::path& path, const std::string& spec_hash, std::uint64_t seed) const {
  CsvMeta meta{"archive", 1, spec_hash, seed, {{"sa", format_double(sa_)}, {"bit_width", std::to_string(bit_width_)}}};
  CsvWriter w(path, meta, kArchiveColumns);
  for (const auto& e : entries_) {
    for (std::uint64_t v = 0; v < e.var_count; ++v) {
      for (int b = 0; b < bit_width_; ++b) {
        w.row({std::to_string(e.layer_id), std::string(to_string(e.type)), std::to_string(v), std::to_string(b),
               format_double(e.accuracy[v * static_cast<std::uint64_t>(bit_width_) + static_cast<std::uint64_t>(b)])});
      }
    }
  }
  w.close();
}

AccuracyArchive AccuracyArchive::load(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path, "archive", 1, kArchiveColumns);
  if (!t.meta.extra.count("sa") || !t.meta.extra.count("bit_width")) {
    throw ValidationError(path.string() + ": archive metadata lacks sa/bit_width");
  }
  const double sa = std::stod(t.meta.extra.at("sa"));
  const int bw = std::stoi(t.meta.extra.at("bit_width"));
  std::vector<Entry> entries;
  std::uint64_t expect_var = 0;
  int expect_bit = 0;
  for (const auto& r : t.rows) {
    const int layer = std::stoi(r[0]);
    const auto type = parse_ff_type(r[1]);
    if (!type) throw ValidationError(path.string() + ": unknown var_type " + r[1]);
    const std::uint64_t var = std::stoull(r[2]);
    const int bit = std::stoi(r[3]);
    if (entries.empty() || entries.back().layer_id != layer || entries.back().type != *type) {
      if (!entries.empty() && expect_bit != 0) throw ValidationError(path.string() + ": incomplete class");
      entries.push_back({layer, *type, 0, {}});
      expect_var = 0;
      expect_bit = 0;
    }
    if (var != expect_var || bit != expect_bit) throw ValidationError(path.string() + ": rows out of order");
    entries.back().accuracy.push_back(std::stod(r[4]));
    if (++expect_bit == bw) {
      expect_bit = 0;
      ++expect_var;
      entries.back().var_count = expect_var;
    }
  }
  if (expect_bit != 0) throw ValidationError(path.string() + ": incomplete class");
  return AccuracyArchive(sa, bw, std::move(entries));
}

ArchiveEvaluator::ArchiveEvaluator(AccuracyArchive archive, bool global_control_crashes)
    : archive_(std::move(archive)), global_crashes_(global_control_crashes) {}

bool ArchiveEvaluator::is_crash(const SoftwareFaultSite& site) const {
  return global_crashes_ && site.var_type == FFType::ControlGlobal;
}

// ---------------------------------------------------------------------------
// Exhaustive RA

std::uint64_t exhaustive_cost(const SiteProbabilityTable& table, const AcceleratorConfig& config,
                              std::size_t evalset_size) {
  std::uint64_t cost = 0;
  for (const auto& c : table.classes()) {
    const SoftwareFaultSite probe{c.layer_id, c.type, 0, 0};
    cost += c.var_count * static_cast<std::uint64_t>(table.bit_width()) * inference_cost(probe, config, evalset_size);
  }
  return cost;
}

OracleResult exhaustive_ra(const SiteProbabilityTable& table, const AcceleratorConfig& config,
                           const AccuracyEvaluator& evaluator, std::size_t evalset_size,
                           const OracleOptions& options) {
  const std::uint64_t cost = exhaustive_cost(table, config, evalset_size);
  if (cost > options.max_inferences) {
    throw ScaleGuardError("exhaustive evaluation needs " + std::to_string(cost) + " inferences, guard is " +
                          std::to_string(options.max_inferences));
  }
  std::vector<SoftwareFaultSite> sites;
  sites.reserve(table.total_sites());
  table.for_each_site([&](std::size_t, const SoftwareFaultSite& s) { sites.push_back(s); });
  const std::vector<double> acc = evaluate_all(evaluator, sites, options.threads);

  std::vector<AccuracyArchive::Entry> entries;
  std::size_t k = 0;
  for (const auto& c : table.classes()) {
    AccuracyArchive::Entry e{c.layer_id, c.type, c.var_count, {}};
    const std::size_t n = c.var_count * static_cast<std::uint64_t>(table.bit_width());
    e.accuracy.assign(acc.begin() + static_cast<std::ptrdiff_t>(k), acc.begin() + static_cast<std::ptrdiff_t>(k + n));
    k += n;
    entries.push_back(std::move(e));
  }
  OracleResult out{{}, AccuracyArchive(evaluator.sa(), table.bit_width(), std::move(entries))};
  out.result = archive_ra(table, out.archive, true);
  return out;
}

OracleResult exhaustive_ra(const NetworkProfile& profile, const AcceleratorConfig& config,
                           const MicroNetwork& net, const EvalSet& evalset, FaultModel model,
                           const OracleOptions& options) {
  const SiteProbabilityTable table = build_table(profile, config);
  if (exhaustive_cost(table, config, evalset.size()) > options.max_inferences) {
    throw ScaleGuardError("exhaustive evaluation needs " + std::to_string(exhaustive_cost(table, config, evalset.size())) +
                          " inferences, guard is " + std::to_string(options.max_inferences));
  }
  const AccuracyEvaluator evaluator(net, evalset, config, model);
  return exhaustive_ra(table, config, evaluator, evalset.size(), options);
}

RAResult archive_ra(const SiteProbabilityTable& table, const AccuracyArchive& archive, bool use_uf) {
  return ra_expected(
      table, [&](const SoftwareFaultSite& s) { return archive.at(s); },
      use_uf ? table_utilization(table) : SiteUtilization{}, archive.sa());
}

// ---------------------------------------------------------------------------
// Grid

namespace {

// Largest-remainder split of `total` into parts proportional to `weights`.
std::vector<std::uint64_t> apportion(std::uint64_t total, const std::vector<std::uint64_t>& weights) {
  const long double sum = std::accumulate(weights.begin(), weights.end(), 0.0L);
  std::vector<std::uint64_t> out(weights.size());
  std::vector<std::pair<long double, std::size_t>> rem;
  std::uint64_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const long double exact = static_cast<long double>(total) * weights[i] / sum;
    out[i] = static_cast<std::uint64_t>(exact);
    used += out[i];
    rem.emplace_back(exact - out[i], i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < total; ++k, ++used) ++out[rem[k % rem.size()].second];
  return out;
}

}  // namespace

GridModel::GridModel(const NetworkProfile& profile, const AcceleratorConfig& config, const GridOptions& options) {
  require_valid(profile, config);
  layer_count_ = profile.layers().size();
  const std::uint64_t nrows = config.total_ff();
  for (FFType t : kFFTypes) {
    row_begin_[t] = row_type_.size();
    for (std::uint64_t i = 0; i < config.ff_count[t]; ++i) row_type_.push_back(t);
    row_end_[t] = row_type_.size();
  }
  columns_ = options.columns;
  if (columns_ == 0) columns_ = std::max<std::uint64_t>(1, options.max_cells / nrows);
  if (nrows * columns_ > options.max_cells) {
    throw ScaleGuardError("grid of " + std::to_string(nrows) + "x" + std::to_string(columns_) + " cells exceeds " +
                          std::to_string(options.max_cells));
  }

  // Classes in the same order as the probability table.
  for (FFType t : kDataTypes) {
    if (config.ff_count[t] == 0) continue;
    for (const auto& l : profile.layers()) {
      if (l.var_count[t] > 0 && l.mac_count > 0) classes_.push_back({l.layer_id, t, l.var_count[t]});
    }
  }
  for (FFType t : {FFType::ControlGlobal, FFType::ControlLocal}) {
    if (config.ff_count[t] > 0 && profile.control_var_count(t) > 0) {
      classes_.push_back({kControlLayer, t, profile.control_var_count(t)});
    }
  }

  Rng rng(options.seed, 0x6772696400ULL);
  for (FFType t : kDataTypes) {
    const std::uint64_t rows_t = config.ff_count[t];
    if (rows_t == 0) continue;
    std::vector<const LayerStats*> typed;
    std::vector<std::uint64_t> macs;
    for (const auto& l : profile.layers()) {
      if (l.var_count[t] > 0 && l.mac_count > 0) {
        typed.push_back(&l);
        macs.push_back(l.mac_count);
      }
    }
    const auto widths = apportion(columns_, macs);
    std::uint64_t col = 0;
    for (std::size_t i = 0; i < typed.size(); ++i) {
      const LayerStats& l = *typed[i];
      Block b{l.layer_id, t, *find(l.layer_id, t), col, col + widths[i], row_begin_[t], row_end_[t], {}};
      col += widths[i];
      const std::uint64_t cells = rows_t * widths[i];
      if (cells == 0) {
        throw ValidationError("grid too narrow: layer " + std::to_string(l.layer_id) + " gets no columns");
      }
      const auto idle = static_cast<std::uint64_t>(std::llround((1.0 - l.utilization) * static_cast<double>(cells)));
      std::vector<char> is_idle(cells, 0);
      if (idle > 0) {
        // Partial Fisher-Yates over cell indices.
        std::vector<std::uint64_t> idx(cells);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::uint64_t k = 0; k < idle; ++k) {
          const std::uint64_t j = k + rng.below(cells - k);
          std::swap(idx[k], idx[j]);
          is_idle[idx[k]] = 1;
        }
      }
      const std::uint64_t occupied = cells - idle;
      if (occupied < l.var_count[t]) {
        throw ValidationError("grid too small: layer " + std::to_string(l.layer_id) + " " + std::string(to_string(t)) +
                              " has fewer occupied cells than variables");
      }
      b.vars.resize(cells);
      std::uint64_t k = 0;
      const auto vars = static_cast<unsigned __int128>(l.var_count[t]);
      for (std::uint64_t c = 0; c < cells; ++c) {
        if (is_idle[c]) {
          b.vars[c] = kIdle;
        } else {
          b.vars[c] = static_cast<std::int64_t>(static_cast<unsigned __int128>(k) * vars / occupied);
          ++k;
        }
      }
      blocks_.push_back(std::move(b));
    }
  }
}

std::optional<std::size_t> GridModel::find(int layer_id, FFType t) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].layer_id == layer_id && classes_[i].type == t) return i;
  }
  return std::nullopt;
}

const GridModel::Block* GridModel::block_at(std::uint64_t row, std::uint64_t col) const {
  for (const auto& b : blocks_) {
    if (row >= b.row_begin && row < b.row_end && col >= b.col_begin && col < b.col_end) return &b;
  }
  return nullptr;
}

std::int64_t GridModel::cell_class(std::uint64_t row, std::uint64_t col) const {
  const FFType t = row_type_.at(row);
  if (is_control(t)) {
    const auto c = find(kControlLayer, t);
    return c ? static_cast<std::int64_t>(*c) : kIdle;
  }
  const Block* b = block_at(row, col);
  if (!b) return kIdle;
  const std::uint64_t w = b->col_end - b->col_begin;
  const std::int64_t v = b->vars[(row - b->row_begin) * w + (col - b->col_begin)];
  return v == kIdle ? kIdle : static_cast<std::int64_t>(b->cls);
}

int GridModel::cell_layer(std::uint64_t row, std::uint64_t col) const {
  const Block* b = block_at(row, col);
  return b ? b->layer : kControlLayer;
}

std::uint64_t GridModel::cell_var(std::uint64_t row, std::uint64_t col) const {
  const FFType t = row_type_.at(row);
  if (is_control(t)) return row - row_begin_[t];
  const Block* b = block_at(row, col);
  if (!b) throw Error("cell_var: cell outside every block");
  const std::uint64_t w = b->col_end - b->col_begin;
  const std::int64_t v = b->vars[(row - b->row_begin) * w + (col - b->col_begin)];
  if (v == kIdle) throw Error("cell_var: idle cell");
  return static_cast<std::uint64_t>(v);
}

std::vector<std::uint64_t> GridModel::occupancy(std::size_t cls) const {
  const Class& c = classes_.at(cls);
  std::vector<std::uint64_t> out(c.var_count, 0);
  if (is_control(c.type)) {
    std::fill(out.begin(), out.end(), columns_);
    return out;
  }
  for (const auto& b : blocks_) {
    if (b.cls != cls) continue;
    for (const std::int64_t v : b.vars) {
      if (v != kIdle) ++out[static_cast<std::size_t>(v)];
    }
  }
  return out;
}

std::vector<double> GridModel::layer_utilization() const {
  std::vector<std::uint64_t> occ(layer_count_, 0), total(layer_count_, 0);
  for (const auto& b : blocks_) {
    const auto l = static_cast<std::size_t>(b.layer);
    total[l] += b.vars.size();
    for (const std::int64_t v : b.vars) occ[l] += v != kIdle ? 1 : 0;
  }
  std::vector<double> out(layer_count_, 1.0);
  for (std::size_t l = 0; l < layer_count_; ++l) {
    if (total[l] > 0) out[l] = static_cast<double>(occ[l]) / static_cast<double>(total[l]);
  }
  return out;
}

std::vector<double> measured_uf(const GridModel& grid) { return grid.layer_utilization(); }

namespace {

double row_weight(const AcceleratorConfig& config, FFType t) {
  return config.avf_mode ? 1.0 : config.raw_fit[t];
}

}  // namespace

GridTally grid_simulate(const GridModel& grid, const AcceleratorConfig& config, std::uint64_t pins,
                        std::uint64_t seed, unsigned threads) {
  if (grid.rows() == 0 || grid.columns() == 0) throw ValidationError("grid is empty");
  if (pins == 0) throw ValidationError("pin count must be at least 1");

  // Cumulative type weights ∝ rows·rawFIT.
  std::vector<FFType> types;
  std::vector<double> cumulative;
  std::vector<std::uint64_t> first_row, row_count;
  double acc = 0.0;
  std::uint64_t r = 0;
  for (FFType t : kFFTypes) {
    const std::uint64_t n = config.ff_count[t];
    if (n > 0 && row_weight(config, t) > 0) {
      types.push_back(t);
      acc += static_cast<double>(n) * row_weight(config, t);
      cumulative.push_back(acc);
      first_row.push_back(r);
      row_count.push_back(n);
    }
    r += n;
  }
  if (types.empty()) throw ValidationError("grid has no row with positive raw FIT");

  constexpr std::uint64_t kChunk = 1 << 16;
  const std::uint64_t chunks = (pins + kChunk - 1) / kChunk;
  const std::size_t ncls = grid.classes().size();

  auto fresh = [&] {
    GridTally t;
    t.class_hits.assign(ncls, 0);
    t.var_hits.resize(ncls);
    for (std::size_t c = 0; c < ncls; ++c) t.var_hits[c].assign(grid.classes()[c].var_count, 0);
    t.idle_hits_per_layer.assign(grid.layer_count(), 0);
    return t;
  };

  auto run_chunk = [&](std::uint64_t chunk, GridTally& tally) {
    Rng rng(seed, chunk);
    const std::uint64_t n = std::min(kChunk, pins - chunk * kChunk);
    for (std::uint64_t i = 0; i < n; ++i) {
      const double u = rng.uniform() * acc;
      std::size_t k = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
      k = std::min(k, types.size() - 1);
      const std::uint64_t row = first_row[k] + rng.below(row_count[k]);
      const std::uint64_t col = rng.below(grid.columns());
      ++tally.pins;
      const std::int64_t cls = grid.cell_class(row, col);
      if (cls == GridModel::kIdle) {
        ++tally.idle_hits;
        const int layer = grid.cell_layer(row, col);
        if (layer >= 0) ++tally.idle_hits_per_layer[static_cast<std::size_t>(layer)];
        continue;
      }
      ++tally.class_hits[static_cast<std::size_t>(cls)];
      ++tally.var_hits[static_cast<std::size_t>(cls)][grid.cell_var(row, col)];
    }
  };

  std::vector<GridTally> partial(chunks);
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(chunks)));
  if (workers == 1) {
    for (std::uint64_t c = 0; c < chunks; ++c) {
      partial[c] = fresh();
      run_chunk(c, partial[c]);
    }
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::uint64_t c = w; c < chunks; c += workers) {
          partial[c] = fresh();
          run_chunk(c, partial[c]);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  GridTally total = fresh();
  for (const auto& p : partial) {
    total.pins += p.pins;
    total.idle_hits += p.idle_hits;
    for (std::size_t l = 0; l < p.idle_hits_per_layer.size(); ++l) total.idle_hits_per_layer[l] += p.idle_hits_per_layer[l];
    for (std::size_t c = 0; c < ncls; ++c) {
      total.class_hits[c] += p.class_hits[c];
      for (std::size_t v = 0; v < p.var_hits[c].size(); ++v) total.var_hits[c][v] += p.var_hits[c][v];
    }
  }
  return total;
}

double grid_ra(const GridModel& grid, const AcceleratorConfig& config, const AccuracyArchive& archive) {
  const int bw = archive.bit_width();
  long double weighted = 0.0L;
  long double weight_total = 0.0L;
  // Occupied cells.
  for (std::size_t c = 0; c < grid.classes().size(); ++c) {
    const auto& gc = grid.classes()[c];
    const double w = row_weight(config, gc.type);
    const auto occ = grid.occupancy(c);
    for (std::uint64_t v = 0; v < gc.var_count; ++v) {
      long double mean = 0.0L;
      for (int b = 0; b < bw; ++b) mean += archive.at({gc.layer_id, gc.type, v, b});
      mean /= bw;
      weighted += static_cast<long double>(w) * occ[v] * mean;
    }
  }
  // All cells, for the normalization; idle cells contribute SA.
  std::uint64_t occupied_by_type[kNumFFTypes] = {};
  for (std::size_t c = 0; c < grid.classes().size(); ++c) {
    const auto occ = grid.occupancy(c);
    occupied_by_type[index_of(grid.classes()[c].type)] += std::accumulate(occ.begin(), occ.end(), std::uint64_t{0});
  }
  for (FFType t : kFFTypes) {
    const std::uint64_t cells = config.ff_count[t] * grid.columns();
    const double w = row_weight(config, t);
    weight_total += static_cast<long double>(w) * cells;
    weighted += static_cast<long double>(w) * (cells - occupied_by_type[index_of(t)]) * archive.sa();
  }
  return static_cast<double>(weighted / weight_total);
}

}  // namespace raest
