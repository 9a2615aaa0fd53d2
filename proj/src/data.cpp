#include "jcl/data.hpp"

#include "jcl/csv.hpp"
#include "jcl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>

namespace jcl::data {

void DomainDataset::validate(int num_classes) const {
  require_same_size(static_cast<std::size_t>(features.rows()), labels.size(), "dataset labels");
  if (pseudo_labels) require_same_size(pseudo_labels->size(), labels.size(), "dataset pseudo-labels");
  if (certainty) require_same_size(certainty->size(), labels.size(), "dataset certainty");
  for (int y : labels) {
    if (y != kUnlabeled && (y < 0 || y >= num_classes)) {
      throw ContractError("dataset label " + std::to_string(y) + " out of range");
    }
  }
}

DomainDataset subset(const DomainDataset& ds, std::span<const std::size_t> rows) {
  DomainDataset out;
  out.domain = ds.domain;
  out.features = take_rows(ds.features, rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(ds.labels.at(r));
  if (ds.pseudo_labels) {
    out.pseudo_labels.emplace();
    for (std::size_t r : rows) out.pseudo_labels->push_back(ds.pseudo_labels->at(r));
  }
  if (ds.certainty) {
    out.certainty.emplace();
    for (std::size_t r : rows) out.certainty->push_back(ds.certainty->at(r));
  }
  return out;
}

std::vector<std::size_t> label_histogram(std::span<const int> labels, int num_classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    if (y >= 0 && y < num_classes) ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

void SyntheticTaskConfig::validate() const {
  if (num_classes < 2) throw ConfigError("task: num_classes must be at least 2");
  if (samples_per_class < 1) throw ConfigError("task: samples_per_class must be positive");
  if (!(noise_std > 0.0)) throw ConfigError("task: noise_std must be positive");
  if (!(radius > 0.0)) throw ConfigError("task: radius must be positive");
  if (input_dim < 2) throw ConfigError("task: input_dim must be at least 2");
  if (!class_angles_deg.empty() && static_cast<int>(class_angles_deg.size()) != num_classes) {
    throw ConfigError("task: class_angles_deg needs one angle per class");
  }
  if (translation.size() != 2) throw ConfigError("task: translation must have two components");
}

std::vector<double> SyntheticTaskConfig::angles() const {
  if (!class_angles_deg.empty()) return class_angles_deg;
  std::vector<double> out;
  for (int c = 0; c < num_classes; ++c) out.push_back(360.0 * c / num_classes);
  return out;
}

namespace {

DomainDataset draw_domain(const SyntheticTaskConfig& cfg, nn::Domain domain, double rotation_deg,
                          const std::vector<double>& shift, Rng& rng) {
  const double to_rad = std::numbers::pi / 180.0;
  const auto angles = cfg.angles();
  const int n = cfg.num_classes * cfg.samples_per_class;
  DomainDataset ds;
  ds.domain = domain;
  ds.features = Matrix::Zero(n, cfg.input_dim);
  ds.labels.resize(static_cast<std::size_t>(n));
  std::normal_distribution<double> noise(0.0, cfg.noise_std);
  int row = 0;
  for (int c = 0; c < cfg.num_classes; ++c) {
    const double a = (angles[static_cast<std::size_t>(c)] + rotation_deg) * to_rad;
    const double mx = cfg.radius * std::cos(a) + shift[0];
    const double my = cfg.radius * std::sin(a) + shift[1];
    for (int s = 0; s < cfg.samples_per_class; ++s, ++row) {
      for (int j = 0; j < cfg.input_dim; ++j) ds.features(row, j) = noise(rng);
      ds.features(row, 0) += mx;
      ds.features(row, 1) += my;
      ds.labels[static_cast<std::size_t>(row)] = c;
    }
  }
  std::vector<std::size_t> perm(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  return subset(ds, perm);
}

}  // namespace

SyntheticPair gen_synthetic_pair(const SyntheticTaskConfig& cfg) {
  cfg.validate();
  Rng source_rng = make_rng(cfg.seed, "data.source");
  Rng target_rng = make_rng(cfg.seed, "data.target");
  SyntheticPair pair;
  pair.source = draw_domain(cfg, nn::Domain::source, 0.0, {0.0, 0.0}, source_rng);
  DomainDataset target = draw_domain(cfg, nn::Domain::target, cfg.rotation_deg, cfg.translation, target_rng);
  pair.truth = TargetTruth(target.labels);
  std::fill(target.labels.begin(), target.labels.end(), kUnlabeled);
  pair.target = std::move(target);
  return pair;
}

double Evaluator::accuracy(std::span<const int> predictions) const {
  require_same_size(predictions.size(), truth_.labels_.size(), "evaluator predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == truth_.labels_[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double Evaluator::masked_accuracy(std::span<const int> predictions, const std::vector<bool>& mask) const {
  require_same_size(predictions.size(), truth_.labels_.size(), "evaluator predictions");
  require_same_size(mask.size(), truth_.labels_.size(), "evaluator mask");
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!mask[i]) continue;
    ++total;
    hits += predictions[i] == truth_.labels_[i];
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : std::nan("");
}

DomainDataset Evaluator::labelled(const DomainDataset& target) const {
  require_same_size(target.size(), truth_.labels_.size(), "evaluator dataset");
  DomainDataset out = target;
  out.labels = truth_.labels_;
  return out;
}

Views augment(const Matrix& batch, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ContractError("augment: sigma must be non-negative");
  Views v{batch, batch};
  if (sigma == 0.0) return v;
  std::normal_distribution<double> noise(0.0, sigma);
  for (Eigen::Index i = 0; i < v.first.size(); ++i) v.first.data()[i] += noise(rng);
  for (Eigen::Index i = 0; i < v.second.size(); ++i) v.second.data()[i] += noise(rng);
  return v;
}

Views augment(const Matrix& batch, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  return augment(batch, sigma, rng);
}

void write_dataset_csv(std::ostream& out, const DomainDataset& ds) {
  for (Eigen::Index j = 0; j < ds.features.cols(); ++j) out << 'x' << (j + 1) << ',';
  out << "label,domain\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
      out << csv::num(ds.features(static_cast<Eigen::Index>(i), j)) << ',';
    }
    out << ds.labels[i] << ',' << nn::domain_name(ds.domain) << '\n';
  }
}

}  // namespace jcl::data
