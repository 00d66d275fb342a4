// Command-line front end: one subcommand per experiment.
//
//   sburgers <subcommand> [--config FILE] [--seed N] [--workers N] [--out DIR] [--quiet]
//   sburgers <subcommand> --print-config
//
// Exit status: 0 success, 1 a property check failed, 2 usage error, 3 blow-up.

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "sburgers/harness.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
  bool quiet = false;
  bool print_config = false;
};

int execute(const std::string& subcommand, const Options& opt) {
  using namespace sburgers;
  ExperimentSpec spec = default_spec(subcommand);
  if (!opt.config.empty()) spec = load_spec(opt.config, spec);
  if (opt.seed) spec.master_seed = *opt.seed;
  if (opt.workers) spec.workers = *opt.workers;
  if (opt.out) spec.output_dir = *opt.out;
  spec.subcommand = subcommand;
  spec.sim.seed = spec.master_seed;
  if (opt.print_config) {
    std::cout << serialize(spec);
    return kExitSuccess;
  }
  const ResultBundle bundle = run(subcommand, spec);
  write_bundle(bundle, spec);
  if (!opt.quiet) {
    std::cout << subcommand << " seed=" << spec.master_seed << " spec_hash=" << spec_hash(spec)
              << "\n";
    for (const auto& [name, ok] : bundle.summary["verdicts"].items())
      std::cout << "  " << (ok.get<bool>() ? "PASS " : "FAIL ") << name << "\n";
    std::cout << "  results in " << spec.output_dir << "/summary.json\n";
  }
  return bundle.exit_status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic Burgers spectral Galerkin and Monte Carlo experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", sburgers::build_version());

  Options opt;
  std::string chosen;
  for (const auto& name : sburgers::subcommands()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", opt.config, "JSON experiment file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "master seed");
    sub->add_option("--workers", opt.workers, "worker threads (SBURGERS_WORKERS overrides)");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_flag("--quiet", opt.quiet, "suppress console output");
    sub->add_flag("--print-config", opt.print_config, "print the effective configuration and exit");
    sub->callback([&chosen, name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sburgers::kExitUsage;
  }

  try {
    return execute(chosen, opt);
  } catch (const sburgers::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sburgers::kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sburgers::kExitUsage;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sburgers::kExitUsage;
  }
}
