#include "jcl/moco.hpp"

#include "jcl/csv.hpp"
#include "jcl/errors.hpp"

#include <cmath>
#include <ostream>
#include <string>

namespace jcl::moco {

KeyQueue::KeyQueue(std::size_t capacity, int dim) : capacity_(capacity), dim_(dim) {
  if (capacity == 0) throw ContractError("KeyQueue: capacity must be positive");
  if (dim < 1) throw ContractError("KeyQueue: key dimension must be positive");
}

void KeyQueue::enqueue_batch(const Matrix& keys, std::span<const int> labels) {
  require_same_size(static_cast<std::size_t>(keys.rows()), labels.size(), "enqueue_batch labels");
  if (keys.rows() > 0 && keys.cols() != dim_) {
    throw DimensionError("enqueue_batch: key width " + std::to_string(keys.cols()) + " != " +
                         std::to_string(dim_));
  }
  if (static_cast<std::size_t>(keys.rows()) > capacity_) {
    throw ContractError("enqueue_batch: batch of " + std::to_string(keys.rows()) +
                        " exceeds capacity " + std::to_string(capacity_));
  }
  if (!rows_unit_norm(keys, kUnitTolerance)) throw ContractError("enqueue_batch: keys must be unit norm");
  for (Eigen::Index i = 0; i < keys.rows(); ++i) {
    keys_.push_back(keys.row(i));
    labels_.push_back(labels[static_cast<std::size_t>(i)]);
    order_.push_back(next_++);
  }
  while (labels_.size() > capacity_) {
    keys_.pop_front();
    labels_.pop_front();
    order_.pop_front();
  }
}

Matrix KeyQueue::key_matrix() const {
  Matrix m(static_cast<Eigen::Index>(keys_.size()), dim_);
  for (std::size_t i = 0; i < keys_.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = keys_[i];
  return m;
}

std::vector<int> KeyQueue::label_vector() const { return {labels_.begin(), labels_.end()}; }

Partition partition_by_label(const KeyQueue& queue, int query_label) {
  std::size_t pos = 0;
  for (int l : queue.labels()) pos += (l == query_label);
  Partition p{Matrix(static_cast<Eigen::Index>(pos), queue.dim()),
              Matrix(static_cast<Eigen::Index>(queue.size() - pos), queue.dim())};
  Eigen::Index ip = 0, in = 0;
  for (std::size_t i = 0; i < queue.size(); ++i) {
    if (queue.labels()[i] == query_label) {
      p.positives.row(ip++) = queue.keys()[i];
    } else {
      p.negatives.row(in++) = queue.keys()[i];
    }
  }
  return p;
}

void momentum_update(std::span<double> key, std::span<const double> query, double m) {
  if (!(m >= 0.0 && m < 1.0)) throw ContractError("momentum coefficient outside [0,1)");
  require_same_size(key.size(), query.size(), "momentum_update");
  for (std::size_t i = 0; i < key.size(); ++i) key[i] = m * key[i] + (1.0 - m) * query[i];
}

void momentum_update(nn::MlpParams& key, const nn::MlpParams& query, double m) {
  if (!(m >= 0.0 && m < 1.0)) throw ContractError("momentum coefficient outside [0,1)");
  nn::zip_tensors(key, query, [m](std::span<double> k, std::span<const double> q) {
    momentum_update(k, q, m);
  });
}

MomentumPair::MomentumPair(nn::MlpState query, double m) : query_(std::move(query)), key_(query_), m_(m) {
  if (!(m >= 0.0 && m < 1.0)) throw ContractError("momentum coefficient outside [0,1)");
}

void MomentumPair::update() { momentum_update(key_.params, query_.params, m_); }

void write_queue_csv(std::ostream& out, const KeyQueue& queue) {
  out << "index,label";
  for (int j = 0; j < queue.dim(); ++j) out << ",k" << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < queue.size(); ++i) {
    out << queue.order()[i] << ',' << queue.labels()[i];
    for (Eigen::Index j = 0; j < queue.dim(); ++j) out << ',' << csv::num(queue.keys()[i](j));
    out << '\n';
  }
}

}  // namespace jcl::moco
