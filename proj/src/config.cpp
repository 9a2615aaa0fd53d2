#include "jcl/config.hpp"

#include "jcl/errors.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace jcl::config {
namespace {

using json = nlohmann::ordered_json;

// Reads known keys with defaults and rejects anything else.
class Reader {
 public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_unsigned()) throw ConfigError(where_ + "." + key + ": expected a non-negative integer");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_integer()) throw ConfigError(where_ + "." + key + ": expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError(where_ + "." + key + ": expected a number");
      }
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

json parse_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  if (j.is_null()) j = json::object();
  // A manifest carries the resolved config under "config".
  if (j.is_object() && j.contains("command") && j.contains("config")) return j["config"];
  return j;
}

theory::ValueMode parse_mode(const std::string& s) {
  if (s == "binary") return theory::ValueMode::binary;
  if (s == "grid") return theory::ValueMode::grid;
  if (s == "mixed") return theory::ValueMode::mixed;
  throw ConfigError("values must be binary, grid or mixed");
}

json task_json(const data::SyntheticTaskConfig& t) {
  json j;
  j["num_classes"] = t.num_classes;
  j["samples_per_class"] = t.samples_per_class;
  j["radius"] = t.radius;
  j["class_angles_deg"] = t.class_angles_deg;
  j["noise_std"] = t.noise_std;
  j["rotation_deg"] = t.rotation_deg;
  j["translation"] = t.translation;
  j["input_dim"] = t.input_dim;
  j["seed"] = t.seed;
  return j;
}

json arch_json(const nn::Architecture& a) {
  json j;
  j["input_dim"] = a.input_dim;
  j["hidden"] = a.hidden;
  j["feature_dim"] = a.feature_dim;
  j["projection_dim"] = a.projection_dim;
  j["num_classes"] = a.num_classes;
  j["activation"] = nn::activation_name(a.activation);
  return j;
}

json train_json(const TrainConfig& c) {
  json j;
  j["task"] = task_json(c.task);
  j["arch"] = arch_json(c.arch);
  j["gamma"] = c.gamma;
  j["tau"] = c.tau;
  j["d"] = c.d;
  j["queue_capacity"] = c.queue_capacity;
  j["key_momentum"] = c.key_momentum;
  j["eta0"] = c.eta0;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["sgd_momentum"] = c.sgd_momentum;
  j["batch_source"] = c.batch_source;
  j["batch_certain"] = c.batch_certain;
  j["batch_uncertain"] = c.batch_uncertain;
  j["epochs"] = c.epochs;
  j["iterations_per_epoch"] = c.iterations_per_epoch;
  j["warmup_epochs"] = c.warmup_epochs;
  j["augment_scale"] = c.augment_scale;
  j["enqueue_before_loss"] = c.enqueue_before_loss;
  j["warm_start_clusters"] = c.warm_start_clusters;
  j["baseline_target_stats"] = c.baseline_target_stats;
  j["infonce_samples"] = c.infonce_samples;
  j["seed"] = c.seed;
  return j;
}

}  // namespace

theory::BoundSuiteOptions BoundsConfig::suite_options(unsigned threads) const {
  theory::BoundSuiteOptions o;
  o.instances = instances;
  o.hypotheses_per_instance = hypotheses_per_instance;
  o.seed = seed;
  o.generator.max_points = max_points;
  o.generator.max_hypotheses = max_hypotheses;
  o.generator.mode = parse_mode(values);
  o.generator.grid_steps = grid_steps;
  o.threads = threads;
  return o;
}

BoundsConfig parse_bounds_config(const std::string& text) {
  const json j = parse_text(text);
  BoundsConfig c;
  Reader r(j, "bounds");
  r.get("instances", c.instances);
  r.get("hypotheses_per_instance", c.hypotheses_per_instance);
  r.get("max_points", c.max_points);
  r.get("max_hypotheses", c.max_hypotheses);
  r.get("values", c.values);
  r.get("grid_steps", c.grid_steps);
  r.get("seed", c.seed);
  r.finish();
  if (c.instances == 0) throw ConfigError("instances must be positive");
  if (c.hypotheses_per_instance == 0) throw ConfigError("hypotheses_per_instance must be positive");
  if (c.max_points == 0) throw ConfigError("max_points must be positive");
  if (c.max_hypotheses == 0) throw ConfigError("max_hypotheses must be positive");
  if (c.grid_steps < 1) throw ConfigError("grid_steps must be positive");
  parse_mode(c.values);
  return c;
}

InfoConfig parse_info_config(const std::string& text) {
  const json j = parse_text(text);
  InfoConfig c;
  Reader r(j, "info");
  r.get("js_instances", c.js_instances);
  r.get("js_components", c.js_components);
  r.get("js_alphabet", c.js_alphabet);
  r.get("dpi_chains", c.dpi_chains);
  r.get("dpi_max_alphabet", c.dpi_max_alphabet);
  r.get("infonce_joints", c.infonce_joints);
  r.get("infonce_alphabet", c.infonce_alphabet);
  r.get("infonce_trials", c.infonce_trials);
  r.get("infonce_k", c.infonce_k);
  r.get("js_perturbation", c.js_perturbation);
  r.get("seed", c.seed);
  r.finish();
  if (c.js_instances + c.dpi_chains + c.infonce_joints == 0) throw ConfigError("nothing to check");
  if (c.js_components == 0 || c.js_alphabet == 0) throw ConfigError("js sizes must be positive");
  if (c.dpi_max_alphabet == 0 || c.infonce_alphabet == 0) throw ConfigError("alphabet sizes must be positive");
  if (c.infonce_joints > 0 && (c.infonce_trials == 0 || c.infonce_k.empty())) {
    throw ConfigError("infonce checks need trials and at least one K");
  }
  for (std::size_t k : c.infonce_k) {
    if (k == 0) throw ConfigError("infonce_k values must be positive");
  }
  return c;
}

TrainConfig parse_train_config(const std::string& text) {
  const json j = parse_text(text);
  TrainConfig c;
  Reader r(j, "train");
  if (const json* t = r.child("task")) {
    Reader rt(*t, "train.task");
    rt.get("num_classes", c.task.num_classes);
    rt.get("samples_per_class", c.task.samples_per_class);
    rt.get("radius", c.task.radius);
    rt.get("class_angles_deg", c.task.class_angles_deg);
    rt.get("noise_std", c.task.noise_std);
    rt.get("rotation_deg", c.task.rotation_deg);
    rt.get("translation", c.task.translation);
    rt.get("input_dim", c.task.input_dim);
    rt.get("seed", c.task.seed);
    rt.finish();
  }
  // Architecture widths follow the task unless set explicitly.
  c.arch.input_dim = c.task.input_dim;
  c.arch.num_classes = c.task.num_classes;
  if (const json* a = r.child("arch")) {
    Reader ra(*a, "train.arch");
    std::string activation = nn::activation_name(c.arch.activation);
    ra.get("input_dim", c.arch.input_dim);
    ra.get("hidden", c.arch.hidden);
    ra.get("feature_dim", c.arch.feature_dim);
    ra.get("projection_dim", c.arch.projection_dim);
    ra.get("num_classes", c.arch.num_classes);
    ra.get("activation", activation);
    ra.finish();
    try {
      c.arch.activation = nn::parse_activation(activation);
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
  }
  r.get("gamma", c.gamma);
  r.get("tau", c.tau);
  r.get("d", c.d);
  r.get("queue_capacity", c.queue_capacity);
  r.get("key_momentum", c.key_momentum);
  r.get("eta0", c.eta0);
  r.get("alpha", c.alpha);
  r.get("beta", c.beta);
  r.get("sgd_momentum", c.sgd_momentum);
  r.get("batch_source", c.batch_source);
  r.get("batch_certain", c.batch_certain);
  r.get("batch_uncertain", c.batch_uncertain);
  r.get("epochs", c.epochs);
  r.get("iterations_per_epoch", c.iterations_per_epoch);
  r.get("warmup_epochs", c.warmup_epochs);
  r.get("augment_scale", c.augment_scale);
  r.get("enqueue_before_loss", c.enqueue_before_loss);
  r.get("warm_start_clusters", c.warm_start_clusters);
  r.get("baseline_target_stats", c.baseline_target_stats);
  r.get("infonce_samples", c.infonce_samples);
  r.get("seed", c.seed);
  r.finish();
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

std::string to_json(const BoundsConfig& c) {
  json j;
  j["instances"] = c.instances;
  j["hypotheses_per_instance"] = c.hypotheses_per_instance;
  j["max_points"] = c.max_points;
  j["max_hypotheses"] = c.max_hypotheses;
  j["values"] = c.values;
  j["grid_steps"] = c.grid_steps;
  j["seed"] = c.seed;
  return j.dump(2);
}

std::string to_json(const InfoConfig& c) {
  json j;
  j["js_instances"] = c.js_instances;
  j["js_components"] = c.js_components;
  j["js_alphabet"] = c.js_alphabet;
  j["dpi_chains"] = c.dpi_chains;
  j["dpi_max_alphabet"] = c.dpi_max_alphabet;
  j["infonce_joints"] = c.infonce_joints;
  j["infonce_alphabet"] = c.infonce_alphabet;
  j["infonce_trials"] = c.infonce_trials;
  j["infonce_k"] = c.infonce_k;
  j["js_perturbation"] = c.js_perturbation;
  j["seed"] = c.seed;
  return j.dump(2);
}

std::string to_json(const TrainConfig& c) { return train_json(c).dump(2); }

std::string manifest_json(const RunManifest& m) {
  json j;
  j["command"] = m.command;
  j["config_path"] = m.config_path;
  j["out_dir"] = m.out_dir;
  j["seed"] = m.seed;
  j["version"] = m.version;
  j["config"] = json::parse(m.resolved_config);
  return j.dump(2);
}

std::string checkpoint_json(const nn::MlpState& state) {
  json j;
  j["architecture"] = arch_json(state.arch);
  json params = json::object();
  nn::for_each_tensor(state.params, [&](const std::string& name, std::span<const double> s) {
    params[name] = std::vector<double>(s.begin(), s.end());
  });
  j["parameters"] = params;
  json stats = json::object();
  for (std::size_t d = 0; d < nn::kDomainCount; ++d) {
    const auto domain = static_cast<nn::Domain>(d);
    const auto& layers = state.stats_for(domain);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string prefix = std::string(nn::domain_name(domain)) + "." + std::to_string(l) + ".";
      stats[prefix + "mean"] = std::vector<double>(layers[l].mean.data(), layers[l].mean.data() + layers[l].mean.size());
      stats[prefix + "var"] = std::vector<double>(layers[l].var.data(), layers[l].var.data() + layers[l].var.size());
    }
  }
  j["running_stats"] = stats;
  return j.dump(2);
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace jcl::config
