#include "jcl/cli.hpp"

#include "jcl/errors.hpp"
#include "jcl/parallel.hpp"
#include "jcl/theory.hpp"
#include "jcl/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>

#ifndef JCL_LAB_VERSION
#define JCL_LAB_VERSION "dev"
#endif

namespace jcl::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> instances;
  std::string gamma_sweep;
};

std::string load_config_text(const Options& o) {
  return o.config_path.empty() ? std::string("{}") : config::read_file(o.config_path);
}

void prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir);
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

config::RunManifest manifest_for(const std::string& command, const Options& o, std::uint64_t seed,
                                 std::string resolved) {
  return {command, o.config_path, o.out_dir, seed, JCL_LAB_VERSION, std::move(resolved)};
}

info::CheckRow make_row(std::string name, double statistic, double bound, double tolerance) {
  const double slack = bound - statistic;
  return {std::move(name), statistic, bound, slack, slack >= -tolerance};
}

int cmd_verify_bounds(const Options& o, std::ostream& out) {
  auto cfg = config::parse_bounds_config(load_config_text(o));
  if (o.seed) cfg.seed = *o.seed;
  if (o.instances) {
    if (*o.instances == 0) throw ConfigError("--instances must be positive");
    cfg.instances = *o.instances;
  }
  prepare_out_dir(o.out_dir);
  const auto result = theory::run_bound_suite(cfg.suite_options(thread_cap_from_env()));

  std::ostringstream csv;
  theory::write_bound_csv(csv, result.rows);
  config::write_file_atomic(join(o.out_dir, "bounds.csv"), csv.str());
  config::write_file_atomic(join(o.out_dir, "manifest.json"),
                            config::manifest_json(manifest_for("verify-bounds", o, cfg.seed, config::to_json(cfg))) + "\n");
  out << "verify-bounds: " << cfg.instances << " instances, " << result.rows.size() << " checks, "
      << result.violations << " violations, min slack " << result.min_slack << '\n';
  return result.violations == 0 ? kExitOk : kExitFailure;
}

int cmd_verify_info(const Options& o, std::ostream& out) {
  auto cfg = config::parse_info_config(load_config_text(o));
  if (o.seed) cfg.seed = *o.seed;
  if (o.instances) {
    if (*o.instances == 0) throw ConfigError("--instances must be positive");
    cfg.js_instances = *o.instances;
  }
  prepare_out_dir(o.out_dir);
  const auto result = run_info_suite(cfg);

  std::ostringstream csv;
  info::write_check_csv(csv, result.rows);
  config::write_file_atomic(join(o.out_dir, "checks.csv"), csv.str());
  config::write_file_atomic(join(o.out_dir, "manifest.json"),
                            config::manifest_json(manifest_for("verify-info", o, cfg.seed, config::to_json(cfg))) + "\n");
  out << "verify-info: " << result.rows.size() << " checks, " << result.failures << " failures\n";
  return result.failures == 0 ? kExitOk : kExitFailure;
}

std::vector<std::pair<std::string, double>> parse_gammas(const std::string& text) {
  std::vector<std::pair<std::string, double>> out;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    const auto first = token.find_first_not_of(" \t");
    const auto last = token.find_last_not_of(" \t");
    if (first == std::string::npos) throw ConfigError("empty value in --gamma-sweep");
    token = token.substr(first, last - first + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      throw ConfigError("bad gamma value '" + token + "'");
    }
    if (used != token.size() || !(v >= 0.0) || !std::isfinite(v)) throw ConfigError("bad gamma value '" + token + "'");
    out.emplace_back(token, v);
  }
  if (out.empty()) throw ConfigError("--gamma-sweep needs at least one value");
  return out;
}

int cmd_train(const Options& o, std::ostream& out) {
  const std::string text = load_config_text(o);
  auto cfg = config::parse_train_config(text);
  std::string sweep_text = o.gamma_sweep;
  // A manifest from a sweep run carries its gamma list.
  if (sweep_text.empty()) {
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_object() && j.contains("gamma_sweep") && j["gamma_sweep"].is_string()) {
      sweep_text = j["gamma_sweep"].get<std::string>();
    }
  }
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.task.seed = *o.seed;
  }
  const auto gammas = sweep_text.empty() ? std::vector<std::pair<std::string, double>>{} : parse_gammas(sweep_text);
  prepare_out_dir(o.out_dir);

  auto manifest = nlohmann::ordered_json::parse(
      config::manifest_json(manifest_for("train", o, cfg.seed, config::to_json(cfg))));
  if (!sweep_text.empty()) manifest["gamma_sweep"] = sweep_text;
  const std::string manifest_text = manifest.dump(2) + "\n";

  bool failed = false;
  if (gammas.empty()) {
    const auto result = trainer::train_jcl(cfg);
    std::ostringstream metrics, features;
    trainer::write_metrics_csv(metrics, result.metrics);
    config::write_file_atomic(join(o.out_dir, "metrics.csv"), metrics.str());
    if (result.abort_reason) {
      failed = true;
    } else {
      trainer::write_features_csv(features, cfg, result);
      config::write_file_atomic(join(o.out_dir, "features.csv"), features.str());
      config::write_file_atomic(join(o.out_dir, "checkpoint.json"), config::checkpoint_json(result.state) + "\n");
    }
  } else {
    trainer::SweepResult sweep;
    for (const auto& [label, g] : gammas) {
      trainer::TrainConfig run = cfg;
      run.gamma = g;
      auto result = trainer::train_jcl(run);
      std::ostringstream metrics;
      trainer::write_metrics_csv(metrics, result.metrics);
      config::write_file_atomic(join(o.out_dir, "metrics_gamma_" + label + ".csv"), metrics.str());
      failed = failed || result.abort_reason.has_value();
      sweep.rows.push_back({g, result.target_accuracy, result.probe_error});
    }
    std::ostringstream table;
    trainer::write_sweep_csv(table, sweep);
    config::write_file_atomic(join(o.out_dir, "gamma_sweep.csv"), table.str());
  }
  config::write_file_atomic(join(o.out_dir, "manifest.json"), manifest_text);
  out << manifest_text;
  return failed ? kExitFailure : kExitOk;
}

}  // namespace

InfoSuiteResult run_info_suite(const config::InfoConfig& cfg) {
  InfoSuiteResult result;
  auto push = [&](info::CheckRow row) {
    if (!row.pass) ++result.failures;
    result.rows.push_back(std::move(row));
  };

  Rng js_rng = make_rng(cfg.seed, "js");
  for (std::size_t i = 0; i < cfg.js_instances; ++i) {
    std::vector<info::DiscreteDistribution> dists;
    for (std::size_t c = 0; c < cfg.js_components; ++c) {
      dists.push_back(info::random_distribution(js_rng, cfg.js_alphabet));
    }
    const auto weights = info::random_distribution(js_rng, cfg.js_components, 0.0);
    const double js = info::generalized_js(dists, weights.pmf()) + cfg.js_perturbation;
    const double mi = info::mutual_information(info::label_mixture_joint(dists, weights.pmf()));
    push(make_row("js_mi_identity", std::abs(js - mi), info::kIdentityTolerance, 0.0));
  }

  Rng dpi_rng = make_rng(cfg.seed, "dpi");
  for (std::size_t i = 0; i < cfg.dpi_chains; ++i) {
    const auto report = info::check_dpi_chain(info::random_chain(dpi_rng, cfg.dpi_max_alphabet));
    push(make_row("dpi_channel", report.i_y_z, report.i_y_x, info::kIdentityTolerance));
    push(make_row("dpi_branches", report.i_z1_z2, report.i_y_z1, info::kIdentityTolerance));
    push(make_row("dpi_pair", report.i_y_z1, report.i_y_z1z2, info::kIdentityTolerance));
  }

  Rng nce_rng = make_rng(cfg.seed, "infonce");
  for (std::size_t i = 0; i < cfg.infonce_joints; ++i) {
    const auto joint = info::random_joint(nce_rng, cfg.infonce_alphabet, cfg.infonce_alphabet);
    const std::uint64_t joint_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    for (std::size_t k : cfg.infonce_k) {
      const auto report = info::check_infonce_bound(joint, k, cfg.infonce_trials, joint_seed);
      push(make_row("infonce_k" + std::to_string(k), report.mean, report.bound, 0.0));
      if (k == 1) push(make_row("infonce_k1_zero", std::abs(report.mean), 0.0, 0.0));
    }
  }
  return result;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Domain-adaptation bound checks and joint contrastive training"};
  app.set_version_flag("--version", JCL_LAB_VERSION);
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  std::size_t instances = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config or a previous run's manifest")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "root seed (overrides the config)");
  };
  auto* bounds = app.add_subcommand("verify-bounds", "check the target-error bounds on random finite instances");
  add_common(bounds);
  bounds->add_option("--instances", instances, "number of random instances");
  auto* infos = app.add_subcommand("verify-info", "check the entropy identities and the InfoNCE bound");
  add_common(infos);
  infos->add_option("--instances", instances, "number of JS identity instances");
  auto* train = app.add_subcommand("train", "run joint contrastive training on the synthetic task");
  add_common(train);
  train->add_option("--gamma-sweep", o.gamma_sweep, "comma-separated gamma values, one run each");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (app.get_subcommands().front()->count("--seed")) o.seed = seed;
  auto* sub = app.get_subcommands().front();
  if (sub->get_option_no_throw("--instances") && sub->count("--instances")) o.instances = instances;

  try {
    if (sub == bounds) return cmd_verify_bounds(o, out);
    if (sub == infos) return cmd_verify_info(o, out);
    return cmd_train(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace jcl::cli
