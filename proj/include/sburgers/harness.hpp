#pragma once

// Experiment registry: configuration I/O, subcommand dispatch, result files.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sburgers/dynamics.hpp"
#include "sburgers/estimators.hpp"

namespace sburgers {

/// Bad configuration or command line; maps to exit status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitStatus : int {
  kExitSuccess = 0,
  kExitPropertyFailure = 1,
  kExitUsage = 2,
  kExitBlowUp = 3,
};

struct EstimatorParams {
  std::int64_t paths = 1000;
  std::int64_t repetitions = 100000;  // ou-check single-step draws
  std::uint64_t path_index = 0;       // simulate, invariant

  std::string functional = "terminal_l2_sq";
  double lambda = 0.5;
  std::vector<double> lambdas = {0.0, 0.5, 1.0, 2.0};
  double functional_alpha = 1.0;
  std::string phi = "gaussian_energy";

  InitialCondition x0;
  InitialCondition x_prime{"e_1", 0.1, {}};
  InitialCondition direction{"e_1", 1.0, {}};

  double t = 0.5;
  std::vector<double> times = {0.05, 0.1, 0.2, 0.5, 1.0};
  double eps = 1e-2;

  double shift_alpha = 0.0;  // ou-check
  std::vector<double> alphas = {1, 2, 4, 8, 16, 32, 64};
  double kappa = 0.0;
  double eps1 = 0.05;
  double eps_prime = 1.0;

  double burn_in = 10.0;
  double sample_horizon = 190.0;
  double thinning = 0.1;

  std::vector<int> mode_counts = {8, 16, 32, 64};
  double fine_dt = 0x1.0p-13;
  std::vector<double> dt_levels = {0x1.0p-9, 0x1.0p-10, 0x1.0p-11, 0x1.0p-12};

  bool dump_coefficients = false;

  friend bool operator==(const EstimatorParams&, const EstimatorParams&) = default;
};

struct ExperimentSpec {
  std::string name = "experiment";
  std::string subcommand = "selftest";
  SimConfig sim;
  EstimatorParams estimator;
  std::string output_dir = "out";
  std::uint64_t master_seed = 20240101;
  int workers = 1;

  friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;
};

const std::vector<std::string>& subcommands();

/// Desk-scale defaults for a subcommand.
ExperimentSpec default_spec(const std::string& subcommand);

nlohmann::json to_json(const ExperimentSpec& spec);
/// Fields absent from `j` keep the values already in `base`; unknown or
/// mistyped fields raise UsageError naming the field path.
ExperimentSpec from_json(const nlohmann::json& j, ExperimentSpec base = {});

std::string serialize(const ExperimentSpec& spec);
ExperimentSpec parse_spec(const std::string& text, ExperimentSpec base = {});
ExperimentSpec load_spec(const std::string& path, ExperimentSpec base = {});

/// FNV-1a 64 of the serialized spec, as 16 hex digits.
std::string spec_hash(const ExperimentSpec& spec);

std::string build_version();

struct CsvTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

/// 17 significant digits.
std::string format_number(double value);
std::string format_number(std::int64_t value);

struct ResultBundle {
  nlohmann::json summary;
  std::vector<CsvTable> tables;
  int exit_status = kExitSuccess;
  std::map<std::string, double> timings;  // seconds per phase
};

ResultBundle run(const std::string& subcommand, const ExperimentSpec& spec);

/// Writes summary.json and <table>.csv into spec.output_dir.
void write_bundle(const ResultBundle& bundle, const ExperimentSpec& spec);

std::string to_csv(const CsvTable& table, const ExperimentSpec& spec);

}  // namespace sburgers
