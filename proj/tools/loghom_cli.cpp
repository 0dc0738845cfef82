#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "loghom/loghom.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::map<std::string, std::string> overrides;
  bool plot = false;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "key = value config file");
  struct Key {
    const char* flag;
    const char* key;
    const char* help;
  };
  static const Key keys[] = {
      {"--dim", "dim", "spatial dimension 1, 2 or 3"},
      {"--n", "n", "sites per side (power of two)"},
      {"--length", "length", "torus side length"},
      {"--cov-family", "cov_family", "gaussian_kernel, exponential_kernel or spherical_cutoff"},
      {"--amplitude", "amplitude", "C(0)"},
      {"--corr-length", "corr_length", "covariance correlation length"},
      {"--trunc-M", "trunc_M", "truncation level M, e^k or none"},
      {"--replicas", "replicas", "number of replicas"},
      {"--seed", "seed", "master seed"},
      {"--out", "out", "output directory"},
      {"--threads", "threads", "worker threads"},
      {"--scales", "scales", "comma separated R, |x| or eps list (1/k allowed)"},
      {"--edge-rule", "edge_rule", "geometric or harmonic"},
      {"--tol", "tol", "relative CG tolerance"},
      {"--C-d", "C_d", "r_diamond comparison constant"},
      {"--C-star", "C_star", "r_star constant"},
      {"--C-spade", "C_spade", "r_spade constant"},
      {"--eps-club", "eps_club", "exponent eps in r_club"},
      {"--center-stride", "center_stride", "stride of r_star and r_spade centres"},
      {"--outer-radius", "outer_radius", "outer radius R for hole-filling and mean-value"},
      {"--pilot-replicas", "pilot_replicas", "pilot replicas for the pooled ahom"},
      {"--write-fields", "write_fields", "write per-replica fields (true/false)"},
  };
  for (const auto& [flag, key, help] : keys) {
    const std::string k = key;
    sub->add_option_function<std::string>(flag, [&f, k](const std::string& v) { f.overrides[k] = v; }, help);
  }
  sub->add_flag("--plot", f.plot, "also write plot tables into <out>/plots");
}

void print_summary(const loghom::RunSummary& s) {
  std::cout << "experiment " << s.experiment << "  config_hash " << s.config_hash << "\n";
  std::cout << "replicas " << s.replicas_ok << "/" << s.replicas_requested << " ok, " << s.failures.size()
            << " failed, " << s.wall_seconds << " s\n";
  for (const auto& [k, v] : s.metrics) std::cout << "  " << k << " = " << v << "\n";
  for (const auto& f : s.fits) {
    std::cout << "  fit " << f.kind << (f.params.empty() ? "" : " " + f.params) << ": estimate " << f.estimate
              << " stderr " << f.stderr_ << " r2 " << f.r_squared << " n " << f.n << "\n";
  }
  for (const auto& c : s.checks) {
    std::cout << "  [" << (c.passed ? "ok" : "FAIL") << "] " << c.name << (c.detail.empty() ? "" : "  (" + c.detail + ")")
              << "\n";
  }
  for (const auto& f : s.failures) std::cout << "  replica " << f.replica << " failed: " << f.error_kind << ": " << f.message << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo experiments for log-normal stochastic homogenization"};
  app.require_subcommand(1);
  CommonFlags flags;
  for (const auto& kind : loghom::experiment_kinds()) add_common(app.add_subcommand(kind, "run the " + kind + " experiment"), flags);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string kind = app.get_subcommands().front()->get_name();
  loghom::ExperimentConfig cfg;
  try {
    if (!flags.config.empty()) cfg = loghom::load_config(flags.config, cfg);
    cfg.kind = kind;
    for (const auto& [k, v] : flags.overrides) loghom::set_config_value(cfg, k, v);
    loghom::validate_config(cfg);
  } catch (const loghom::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  try {
    const loghom::RunSummary s = loghom::run_experiment(cfg);
    if (flags.plot && !cfg.out.empty()) loghom::emit_plot_data(s.records, cfg.kind, std::filesystem::path(cfg.out) / "plots");
    print_summary(s);
    if (s.failure_threshold_exceeded) {
      std::cerr << "more than 5% of replicas failed\n";
      return 3;
    }
  } catch (const loghom::Error& e) {
    std::cerr << loghom::to_string(e.kind()) << ": " << e.what() << "\n";
    return e.kind() == loghom::ErrorKind::ConfigError ? 2 : 1;
  }
  return 0;
}
