#include "jcl/cli.hpp"
#include "jcl/config.hpp"
#include "jcl/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace jcl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("jcl_lab_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { config::write_file_atomic(p.string(), text); }

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "jcl_lab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  return code;
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(JCL_LAB_BINARY) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmallTrain = R"({"epochs": 3, "iterations_per_epoch": 10, "task": {"samples_per_class": 40}})";

}  // namespace

TEST(ConfigParse, DefaultsAndRoundTrip) {
  const auto t = config::parse_train_config("{}");
  EXPECT_EQ(t.gamma, 1.0);
  EXPECT_EQ(t.queue_capacity, 512u);
  EXPECT_EQ(config::parse_train_config(config::to_json(t)).seed, t.seed);
  EXPECT_EQ(config::to_json(config::parse_train_config(config::to_json(t))), config::to_json(t));

  const auto b = config::parse_bounds_config("{\"instances\": 7}");
  EXPECT_EQ(b.instances, 7u);
  EXPECT_EQ(config::to_json(config::parse_bounds_config(config::to_json(b))), config::to_json(b));
  const auto i = config::parse_info_config("{\"infonce_k\": [2, 4]}");
  EXPECT_EQ(i.infonce_k, (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(config::to_json(config::parse_info_config(config::to_json(i))), config::to_json(i));
}

TEST(ConfigParse, ArchitectureFollowsTask) {
  const auto t = config::parse_train_config(R"({"task": {"num_classes": 4, "class_angles_deg": [], "input_dim": 3}})");
  EXPECT_EQ(t.arch.num_classes, 4);
  EXPECT_EQ(t.arch.input_dim, 3);
}

TEST(ConfigParse, Rejections) {
  EXPECT_THROW(config::parse_train_config("{"), ConfigError);
  EXPECT_THROW(config::parse_train_config("[1]"), ConfigError);
  EXPECT_THROW(config::parse_train_config(R"({"gama": 1})"), ConfigError);
  EXPECT_THROW(config::parse_train_config(R"({"task": {"noise": 1}})"), ConfigError);
  EXPECT_THROW(config::parse_train_config(R"({"epochs": "ten"})"), ConfigError);
  EXPECT_THROW(config::parse_train_config(R"({"epochs": 2.5})"), ConfigError);
  EXPECT_THROW(config::parse_train_config(R"({"queue_capacity": -1})"), ConfigError);
  EXPECT_THROW(config::parse_train_config(R"({"tau": 0})"), ConfigError);
  EXPECT_THROW(config::parse_train_config(R"({"arch": {"activation": "gelu"}})"), ConfigError);
  EXPECT_THROW(config::parse_bounds_config(R"({"values": "real"})"), ConfigError);
  EXPECT_THROW(config::parse_info_config(R"({"js_alphabet": "x"})"), ConfigError);
}

TEST(ConfigParse, ManifestIsAcceptedAsConfig) {
  auto t = config::parse_train_config(R"({"gamma": 0.5})");
  const auto m = config::manifest_json({"train", "c.json", "out", t.seed, "0", config::to_json(t)});
  EXPECT_EQ(config::parse_train_config(m).gamma, 0.5);
}

TEST(Checkpoint, ContainsEveryTensor) {
  Rng rng(1);
  nn::Architecture a;
  const auto state = nn::init_state(a, rng);
  const auto text = config::checkpoint_json(state);
  nn::for_each_tensor(state.params, [&](const std::string& name, std::span<const double>) {
    EXPECT_NE(text.find("\"" + name + "\""), std::string::npos) << name;
  });
  EXPECT_NE(text.find("target.1.var"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}), cli::kExitUsage);
  EXPECT_EQ(run_cli({"frobnicate"}), cli::kExitUsage);
  EXPECT_EQ(run_cli({"train", "--config", "/nonexistent/x.json"}), cli::kExitUsage);
  const auto dir = scratch("usage");
  write(dir / "bad.json", "{ not json");
  EXPECT_EQ(run_cli({"train", "--config", (dir / "bad.json").string(), "--out", (dir / "o").string()}),
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"verify-bounds", "--instances", "0", "--out", (dir / "o").string()}), cli::kExitUsage);
  EXPECT_EQ(run_cli({"train", "--gamma-sweep", "1,x", "--out", (dir / "o").string()}), cli::kExitUsage);
  EXPECT_EQ(run_cli({"--version"}), cli::kExitOk);
}

TEST(Cli, BinaryExitCodes) {
  const auto dir = scratch("binary");
  write(dir / "bad.json", "{ not json");
  EXPECT_EQ(run_binary("verify-bounds --instances 5 --out " + (dir / "b").string()), 0);
  EXPECT_EQ(run_binary("verify-bounds --instances 0 --out " + (dir / "b").string()), 2);
  EXPECT_EQ(run_binary("train --config " + (dir / "bad.json").string() + " --out " + (dir / "t").string()), 2);
  write(dir / "fault.json", R"({"js_instances": 3, "dpi_chains": 3, "infonce_joints": 1, "js_perturbation": 0.001})");
  EXPECT_EQ(run_binary("verify-info --config " + (dir / "fault.json").string() + " --out " + (dir / "i").string()), 1);
  EXPECT_EQ(run_binary("--help"), 0);
}

TEST(Cli, VerifyCommandsWriteOutputs) {
  const auto dir = scratch("verify");
  EXPECT_EQ(run_cli({"verify-bounds", "--instances", "20", "--out", (dir / "b").string()}), cli::kExitOk);
  EXPECT_TRUE(fs::exists(dir / "b" / "bounds.csv"));
  EXPECT_TRUE(fs::exists(dir / "b" / "manifest.json"));
  write(dir / "info.json", R"({"js_instances": 10, "dpi_chains": 10, "infonce_joints": 2, "infonce_trials": 20})");
  EXPECT_EQ(run_cli({"verify-info", "--config", (dir / "info.json").string(), "--out", (dir / "i").string()}),
            cli::kExitOk);
  const auto checks = config::read_file((dir / "i" / "checks.csv").string());
  EXPECT_EQ(checks.substr(0, checks.find('\n')), "check_name,statistic,bound,slack,pass");
  EXPECT_NE(checks.find("infonce_k1_zero"), std::string::npos);
}

TEST(Cli, FaultInjectionFailsInfoSuite) {
  config::InfoConfig cfg;
  cfg.js_instances = 5;
  cfg.dpi_chains = 5;
  cfg.infonce_joints = 1;
  cfg.infonce_trials = 10;
  EXPECT_EQ(cli::run_info_suite(cfg).failures, 0u);
  cfg.js_perturbation = 1e-6;
  EXPECT_EQ(cli::run_info_suite(cfg).failures, 5u);
}

TEST(Cli, TrainManifestReplayIsByteIdentical) {
  const auto dir = scratch("replay");
  write(dir / "cfg.json", kSmallTrain);
  std::string echoed;
  ASSERT_EQ(run_cli({"train", "--config", (dir / "cfg.json").string(), "--seed", "5", "--out", (dir / "a").string()},
                    &echoed),
            cli::kExitOk);
  for (const char* f : {"metrics.csv", "features.csv", "checkpoint.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
  }
  EXPECT_EQ(echoed, config::read_file((dir / "a" / "manifest.json").string()));
  ASSERT_EQ(run_cli({"train", "--config", (dir / "a" / "manifest.json").string(), "--out", (dir / "b").string()}),
            cli::kExitOk);
  for (const char* f : {"metrics.csv", "features.csv", "checkpoint.json"}) {
    EXPECT_EQ(config::read_file((dir / "a" / f).string()), config::read_file((dir / "b" / f).string())) << f;
  }
}

TEST(Cli, GammaSweepWritesOneFilePerValueAndReplays) {
  const auto dir = scratch("sweep");
  write(dir / "cfg.json", kSmallTrain);
  ASSERT_EQ(run_cli({"train", "--config", (dir / "cfg.json").string(), "--gamma-sweep", "0.1,1",
                     "--out", (dir / "a").string()}),
            cli::kExitOk);
  std::size_t metric_files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    if (e.path().filename().string().rfind("metrics_gamma_", 0) == 0) ++metric_files;
  }
  EXPECT_EQ(metric_files, 2u);
  const auto table = config::read_file((dir / "a" / "gamma_sweep.csv").string());
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);

  ASSERT_EQ(run_cli({"train", "--config", (dir / "a" / "manifest.json").string(), "--out", (dir / "b").string()}),
            cli::kExitOk);
  EXPECT_EQ(table, config::read_file((dir / "b" / "gamma_sweep.csv").string()));
}
