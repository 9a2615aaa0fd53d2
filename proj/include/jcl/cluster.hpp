#pragma once

// Spherical k-means on unit features, certain/uncertain splitting by cosine
// dissimilarity, and class-uniform oversampling.

#include "jcl/data.hpp"
#include "jcl/linalg.hpp"
#include "jcl/rng.hpp"

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace jcl::cluster {

struct KMeansOptions {
  int max_iters = 100;
  double tol = 1e-6;
};

struct ClusterModel {
  Matrix centers;                    // k x dim, unit rows
  std::vector<int> assignment;       // per point, in [0, k)
  std::vector<double> dissimilarity; // 1 - cos to the assigned center
  std::vector<double> objective;     // mean dissimilarity, one entry per assignment pass
  int iterations = 0;

  std::size_t k() const { return static_cast<std::size_t>(centers.rows()); }
};

// Lloyd iterations with cosine similarity. Each center becomes the normalized
// mean of its points; an empty cluster or a zero mean takes the point farthest
// from its current center. Throws if the objective ever increases.
ClusterModel spherical_kmeans(const Matrix& features, const Matrix& init_centers,
                              const KMeansOptions& options = {});

struct CertainSplit {
  std::vector<std::size_t> certain;
  std::vector<int> pseudo_labels;  // parallel to certain
  std::vector<std::size_t> uncertain;
};

// Points with dissimilarity <= d are certain and take their cluster index.
CertainSplit split_certain(const ClusterModel& model, double d);

// Row indices that keep every sample and top up each class to the largest
// class count by drawing from that class with replacement.
std::vector<std::size_t> rebalance_indices(std::span<const int> labels, int num_classes, Rng& rng);

// rebalance_indices applied to ds.labels.
data::DomainDataset rebalance_classes(const data::DomainDataset& ds, int num_classes, Rng& rng);

// point_id,cluster,dissimilarity,certain
void write_cluster_csv(std::ostream& out, const ClusterModel& model, double d);

}  // namespace jcl::cluster
