#include "jcl/cluster.hpp"

#include "jcl/csv.hpp"
#include "jcl/errors.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace jcl::cluster {
namespace {

constexpr double kUnit = 1e-9;

double assign(const Matrix& features, const Matrix& centers, ClusterModel& model) {
  const Matrix sims = features * centers.transpose();
  model.assignment.resize(static_cast<std::size_t>(features.rows()));
  model.dissimilarity.resize(static_cast<std::size_t>(features.rows()));
  double total = 0.0;
  for (Eigen::Index i = 0; i < sims.rows(); ++i) {
    Eigen::Index best = 0;
    const double s = sims.row(i).maxCoeff(&best);
    model.assignment[static_cast<std::size_t>(i)] = static_cast<int>(best);
    model.dissimilarity[static_cast<std::size_t>(i)] = 1.0 - s;
    total += 1.0 - s;
  }
  return total / static_cast<double>(features.rows());
}

}  // namespace

ClusterModel spherical_kmeans(const Matrix& features, const Matrix& init_centers,
                              const KMeansOptions& options) {
  if (features.rows() == 0) throw ContractError("spherical_kmeans: no features");
  if (init_centers.rows() == 0) throw ContractError("spherical_kmeans: k must be at least 1");
  if (init_centers.cols() != features.cols()) throw DimensionError("spherical_kmeans: center width");
  if (!rows_unit_norm(features, kUnit)) throw ContractError("spherical_kmeans: features must be unit norm");
  if (!rows_unit_norm(init_centers, kUnit)) throw ContractError("spherical_kmeans: centers must be unit norm");
  if (options.max_iters < 0 || options.tol < 0.0) throw ContractError("spherical_kmeans: bad options");

  ClusterModel model;
  model.centers = init_centers;
  model.objective.push_back(assign(features, model.centers, model));

  const Eigen::Index k = model.centers.rows();
  for (int it = 0; it < options.max_iters; ++it) {
    Matrix sums = Matrix::Zero(k, features.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      const int c = model.assignment[static_cast<std::size_t>(i)];
      sums.row(c) += features.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    // Farthest points first, each used at most once for re-seeding.
    std::vector<std::size_t> order(static_cast<std::size_t>(features.rows()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return model.dissimilarity[a] > model.dissimilarity[b];
    });
    std::size_t next_seed = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const double norm = sums.row(c).norm();
      if (counts[static_cast<std::size_t>(c)] > 0 && norm > 1e-12) {
        model.centers.row(c) = sums.row(c) / norm;
      } else {
        const std::size_t pick = order[std::min(next_seed++, order.size() - 1)];
        model.centers.row(c) = features.row(static_cast<Eigen::Index>(pick));
      }
    }
    const double prev = model.objective.back();
    const double now = assign(features, model.centers, model);
    if (now > prev + 1e-12) {
      throw std::logic_error("spherical_kmeans: objective increased from " + csv::num(prev) + " to " +
                             csv::num(now));
    }
    model.objective.push_back(now);
    model.iterations = it + 1;
    if (prev <= 0.0 || (prev - now) < options.tol * prev) break;
  }
  return model;
}

CertainSplit split_certain(const ClusterModel& model, double d) {
  if (!(d >= 0.0 && d <= 2.0)) throw ContractError("split_certain: d must lie in [0,2]");
  CertainSplit split;
  for (std::size_t i = 0; i < model.assignment.size(); ++i) {
    if (model.dissimilarity[i] <= d) {
      split.certain.push_back(i);
      split.pseudo_labels.push_back(model.assignment[i]);
    } else {
      split.uncertain.push_back(i);
    }
  }
  return split;
}

std::vector<std::size_t> rebalance_indices(std::span<const int> labels, int num_classes, Rng& rng) {
  if (num_classes < 1) throw ContractError("rebalance: num_classes must be positive");
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes) throw ContractError("rebalance: label " + std::to_string(y) + " out of range");
    members[static_cast<std::size_t>(y)].push_back(i);
  }
  std::size_t target = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (members[static_cast<std::size_t>(c)].empty()) {
      throw ContractError("rebalance: class " + std::to_string(c) + " has no samples");
    }
    target = std::max(target, members[static_cast<std::size_t>(c)].size());
  }
  std::vector<std::size_t> out(labels.size());
  std::iota(out.begin(), out.end(), std::size_t{0});
  for (const auto& m : members) {
    std::uniform_int_distribution<std::size_t> pick(0, m.size() - 1);
    for (std::size_t n = m.size(); n < target; ++n) out.push_back(m[pick(rng)]);
  }
  return out;
}

data::DomainDataset rebalance_classes(const data::DomainDataset& ds, int num_classes, Rng& rng) {
  const auto rows = rebalance_indices(ds.labels, num_classes, rng);
  return data::subset(ds, rows);
}

void write_cluster_csv(std::ostream& out, const ClusterModel& model, double d) {
  out << "point_id,cluster,dissimilarity,certain\n";
  for (std::size_t i = 0; i < model.assignment.size(); ++i) {
    out << i << ',' << model.assignment[i] << ',' << csv::num(model.dissimilarity[i]) << ','
        << csv::flag(model.dissimilarity[i] <= d) << '\n';
  }
}

}  // namespace jcl::cluster
