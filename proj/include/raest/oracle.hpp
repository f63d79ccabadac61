#pragma once

#include "raest/evaluator.hpp"
#include "raest/netprofile.hpp"
#include "raest/prob_transfer.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace raest {

// A(j) for every site of a table, stored per class as var-major
// [var * bit_width + bit].
class AccuracyArchive {
 public:
  struct Entry {
    int layer_id = 0;
    FFType type = FFType::Weight;
    std::uint64_t var_count = 0;
    std::vector<double> accuracy;
  };

  AccuracyArchive() = default;
  AccuracyArchive(double sa, int bit_width, std::vector<Entry> entries);

  double sa() const { return sa_; }
  int bit_width() const { return bit_width_; }
  const std::vector<Entry>& entries() const { return entries_; }
  double at(const SoftwareFaultSite& site) const;
  bool contains(const SoftwareFaultSite& site) const;
  // Mean accuracy over the variables of one (class, bit).
  double class_bit_mean(std::size_t entry, int bit) const;

  // Full per-site CSV (schema "archive").
  void save(const std::filesystem::path& path, const std::string& spec_hash, std::uint64_t seed) const;
  static AccuracyArchive load(const std::filesystem::path& path);

 private:
  const Entry* entry_for(int layer_id, FFType t) const;
  double sa_ = 0.0;
  int bit_width_ = 0;
  std::vector<Entry> entries_;
};

// Evaluator backed by an archive lookup.
class ArchiveEvaluator final : public SiteEvaluator {
 public:
  ArchiveEvaluator(AccuracyArchive archive, bool global_control_crashes);
  double sa() const override { return archive_.sa(); }
  double accuracy(const SoftwareFaultSite& site) const override { return archive_.at(site); }
  bool is_crash(const SoftwareFaultSite& site) const override;
  const AccuracyArchive& archive() const { return archive_; }

 private:
  AccuracyArchive archive_;
  bool global_crashes_ = false;
};

struct OracleOptions {
  std::uint64_t max_inferences = 1'000'000;
  unsigned threads = 1;
};

struct OracleResult {
  RAResult result;
  AccuracyArchive archive;
};

// Total single inferences an exhaustive run would cost.
std::uint64_t exhaustive_cost(const SiteProbabilityTable& table, const AcceleratorConfig& config,
                              std::size_t evalset_size);

// Evaluates every site of the table. Throws ScaleGuardError past the guard.
OracleResult exhaustive_ra(const SiteProbabilityTable& table, const AcceleratorConfig& config,
                           const AccuracyEvaluator& evaluator, std::size_t evalset_size,
                           const OracleOptions& options = {});

OracleResult exhaustive_ra(const NetworkProfile& profile, const AcceleratorConfig& config,
                           const MicroNetwork& net, const EvalSet& evalset,
                           FaultModel model = FaultModel::Hardware, const OracleOptions& options = {});

// RA from an archive without re-running inference.
RAResult archive_ra(const SiteProbabilityTable& table, const AccuracyArchive& archive, bool use_uf);

// ---------------------------------------------------------------------------
// Cycle x FF grid

struct GridOptions {
  std::uint64_t columns = 0;  // 0 picks a width automatically
  std::uint64_t max_cells = 10'000'000;
  std::uint64_t seed = 1;
};

// Rows are FFs grouped by type; columns are time. Each layer owns a run of
// columns for each data type, and every occupied cell belongs to exactly one
// variable. Control rows hold one control variable for the whole run.
class GridModel {
 public:
  static constexpr std::int64_t kIdle = -1;

  GridModel(const NetworkProfile& profile, const AcceleratorConfig& config, const GridOptions& options = {});

  std::uint64_t rows() const { return row_type_.size(); }
  std::uint64_t columns() const { return columns_; }
  FFType row_type(std::uint64_t row) const { return row_type_[row]; }
  // Class (per the table order of `classes()`) and variable held by a cell,
  // or kIdle.
  std::int64_t cell_class(std::uint64_t row, std::uint64_t col) const;
  std::uint64_t cell_var(std::uint64_t row, std::uint64_t col) const;
  // Layer owning a data cell; -1 for control rows.
  int cell_layer(std::uint64_t row, std::uint64_t col) const;

  struct Class {
    int layer_id;
    FFType type;
    std::uint64_t var_count;
  };
  const std::vector<Class>& classes() const { return classes_; }
  std::optional<std::size_t> find(int layer_id, FFType t) const;

  // Per class: cells occupied by each variable.
  std::vector<std::uint64_t> occupancy(std::size_t cls) const;
  // Occupied/total cell ratio per layer (data rows only).
  std::vector<double> layer_utilization() const;
  std::size_t layer_count() const { return layer_count_; }

 private:
  struct Block {
    int layer;
    FFType type;
    std::size_t cls;
    std::uint64_t col_begin;
    std::uint64_t col_end;
    std::uint64_t row_begin;
    std::uint64_t row_end;
    std::vector<std::int64_t> vars;  // row-major over the block, kIdle for idle cells
  };
  const Block* block_at(std::uint64_t row, std::uint64_t col) const;

  std::vector<FFType> row_type_;
  std::uint64_t columns_ = 0;
  std::size_t layer_count_ = 0;
  std::vector<Class> classes_;
  std::vector<Block> blocks_;
  PerType<std::uint64_t> row_begin_{};
  PerType<std::uint64_t> row_end_{};
};

struct GridTally {
  std::uint64_t pins = 0;
  std::vector<std::uint64_t> class_hits;               // per GridModel class
  std::vector<std::vector<std::uint64_t>> var_hits;    // per class, per variable
  std::vector<std::uint64_t> idle_hits_per_layer;
  std::uint64_t idle_hits = 0;
};

// Drops pins on the grid: the row's type is chosen with probability
// ∝ rows·rawFIT, then a row and column uniformly. Deterministic for a seed
// regardless of `threads`.
GridTally grid_simulate(const GridModel& grid, const AcceleratorConfig& config, std::uint64_t pins,
                        std::uint64_t seed, unsigned threads = 1);

std::vector<double> measured_uf(const GridModel& grid);

// Cell-level RA: every occupied cell contributes the mean A(j) over the bits
// of its variable, idle cells contribute SA, weighted by the row's raw FIT.
double grid_ra(const GridModel& grid, const AcceleratorConfig& config, const AccuracyArchive& archive);

}  // namespace raest
