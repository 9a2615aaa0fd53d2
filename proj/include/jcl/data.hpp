#pragma once

// Dataset containers and the synthetic shifted-Gaussian task.

#include "jcl/linalg.hpp"
#include "jcl/nn.hpp"
#include "jcl/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace jcl::data {

inline constexpr int kUnlabeled = -1;

struct DomainDataset {
  Matrix features;
  std::vector<int> labels;  // kUnlabeled where unknown
  nn::Domain domain = nn::Domain::source;
  std::optional<std::vector<int>> pseudo_labels;
  std::optional<std::vector<bool>> certainty;

  std::size_t size() const { return labels.size(); }
  // Row counts agree and labels lie in {-1} or [0, num_classes).
  void validate(int num_classes) const;
};

DomainDataset subset(const DomainDataset& ds, std::span<const std::size_t> rows);

// Per-class counts over labels in [0, num_classes); unlabeled rows are ignored.
std::vector<std::size_t> label_histogram(std::span<const int> labels, int num_classes);

struct SyntheticTaskConfig {
  int num_classes = 3;
  int samples_per_class = 100;
  double radius = 1.0;
  std::vector<double> class_angles_deg = {0.0, 65.0, 130.0};  // empty: evenly spaced
  double noise_std = 0.2;
  double rotation_deg = 30.0;
  std::vector<double> translation = {0.0, 0.0};
  int input_dim = 2;
  std::uint64_t seed = 7;

  void validate() const;
  std::vector<double> angles() const;
};

// Target labels, readable only by the evaluator.
class TargetTruth {
 public:
  TargetTruth() = default;
  std::size_t size() const { return labels_.size(); }

 private:
  explicit TargetTruth(std::vector<int> labels) : labels_(std::move(labels)) {}
  std::vector<int> labels_;

  friend struct SyntheticPair gen_synthetic_pair(const SyntheticTaskConfig& cfg);
  friend class Evaluator;
};

struct SyntheticPair {
  DomainDataset source;
  DomainDataset target;  // all labels kUnlabeled
  TargetTruth truth;
};

// Class means on a circle of the configured radius; the target rotates the
// means about the origin and translates them. Same config, same data.
SyntheticPair gen_synthetic_pair(const SyntheticTaskConfig& cfg);

// Accuracy on the target against the withheld labels.
class Evaluator {
 public:
  explicit Evaluator(TargetTruth truth) : truth_(std::move(truth)) {}

  std::size_t size() const { return truth_.size(); }
  double accuracy(std::span<const int> predictions) const;
  // Accuracy of pseudo-labels restricted to rows where mask is true; NaN if none.
  double masked_accuracy(std::span<const int> predictions, const std::vector<bool>& mask) const;
  // Target dataset with its true labels filled in, for the linear probe.
  DomainDataset labelled(const DomainDataset& target) const;

 private:
  TargetTruth truth_;
};

struct Views {
  Matrix first;
  Matrix second;
};

// Two views with independent additive Gaussian jitter of standard deviation sigma.
Views augment(const Matrix& batch, double sigma, Rng& rng);
Views augment(const Matrix& batch, double sigma, std::uint64_t seed);

// x1..xd,label,domain
void write_dataset_csv(std::ostream& out, const DomainDataset& ds);

}  // namespace jcl::data
