#pragma once

#include "raest/estimator.hpp"
#include "raest/microdnn.hpp"
#include "raest/netprofile.hpp"
#include "raest/oracle.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace raest::cli {

struct GlobalOptions {
  std::filesystem::path config;
  std::filesystem::path out = ".";
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

// Everything a run needs from the config file: the parsed config, the
// network and evalset when the config names them, and the profile.
struct Context {
  ConfigFile config;
  std::optional<MicroNetwork> net;
  std::optional<EvalSet> evalset;
  NetworkProfile profile;
  // Hash of the canonical config plus the bytes of the network and evalset.
  std::uint64_t input_hash = 0;

  const AcceleratorConfig& accel() const { return config.accel; }
  void require_network(const char* command) const;
};

Context load_context(const std::filesystem::path& config_path);

// "none", "all" or an FF type name.
struct HardenChoice {
  bool active = false;
  std::optional<FFType> type;  // nullopt with active means all types
};
HardenChoice parse_harden(const std::string& text);
SiteProbabilityTable table_for(const Context& ctx, const HardenChoice& harden);

std::string spec_hash(const Context& ctx, const std::string& command);

struct MakeToyOptions {
  std::string preset = "conv";
  std::string format = "fp16";
  std::size_t evalset_size = 100;
  double min_margin = 0.05;
};
int run_make_toy(const GlobalOptions& g, const MakeToyOptions& o, std::ostream& log);

int run_profile(const GlobalOptions& g, std::ostream& log);

struct ProbsOptions {
  std::string harden = "none";
};
int run_probs(const GlobalOptions& g, const ProbsOptions& o, std::ostream& log);

struct OracleCmdOptions {
  std::uint64_t max_inferences = 1'000'000;
};
int run_oracle(const GlobalOptions& g, const OracleCmdOptions& o, std::ostream& log);

// Options shared by estimate and compare.
struct SamplingOptions {
  std::uint64_t samples = 0;  // 0 with poc set means run to PoC
  bool poc = false;
  double threshold = 0.003;
  std::uint64_t max_samples = 200'000;
  std::string harden = "none";
  std::string uf = "actual";
  std::optional<double> truth;
  std::filesystem::path archive;
  std::uint64_t bp_profile = 0;  // injections per bit class; 0 keeps the default model
  std::uint64_t max_inferences = 1'000'000;
};

struct EstimateCmdOptions {
  std::string strategy = "is-b";
  SamplingOptions sampling;
};
int run_estimate(const GlobalOptions& g, const EstimateCmdOptions& o, std::ostream& log);

struct CompareOptions {
  std::vector<std::string> strategies;  // empty means all four
  std::vector<std::uint64_t> seeds;     // empty means --runs seeds from --seed
  std::uint64_t runs = 10;
  SamplingOptions sampling;
};
int run_compare(const GlobalOptions& g, const CompareOptions& o, std::ostream& log);

struct GridsimOptions {
  std::uint64_t pins = 1'000'000;
  std::uint64_t columns = 0;
};
int run_gridsim(const GlobalOptions& g, const GridsimOptions& o, std::ostream& log);

struct StudyOptions {
  std::string study;  // methods, harden, fitrate
  std::string uf = "actual";
  std::filesystem::path archive;
  std::uint64_t max_inferences = 1'000'000;
};
int run_study(const GlobalOptions& g, const StudyOptions& o, std::ostream& log);

}  // namespace raest::cli
