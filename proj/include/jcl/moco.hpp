#pragma once

// FIFO key dictionary with labels and the moving-average key encoder.

#include "jcl/linalg.hpp"
#include "jcl/nn.hpp"

#include <cstddef>
#include <deque>
#include <iosfwd>
#include <span>
#include <vector>

namespace jcl::moco {

inline constexpr double kUnitTolerance = 1e-9;
inline constexpr std::size_t kDefaultCapacity = 512;

class KeyQueue {
 public:
  KeyQueue(std::size_t capacity, int dim);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return labels_.size(); }
  bool full() const { return size() == capacity_; }
  int dim() const { return dim_; }

  // Oldest first.
  const std::deque<RowVector>& keys() const { return keys_; }
  const std::deque<int>& labels() const { return labels_; }
  // Sequence number of each stored key, counting every key ever enqueued.
  const std::deque<std::size_t>& order() const { return order_; }

  // Appends a batch of unit keys and evicts the oldest entries past capacity.
  void enqueue_batch(const Matrix& keys, std::span<const int> labels);

  // Contents as a matrix plus labels, oldest first.
  Matrix key_matrix() const;
  std::vector<int> label_vector() const;

 private:
  std::size_t capacity_;
  int dim_;
  std::size_t next_ = 0;
  std::deque<RowVector> keys_;
  std::deque<int> labels_;
  std::deque<std::size_t> order_;
};

struct Partition {
  Matrix positives;
  Matrix negatives;
};

Partition partition_by_label(const KeyQueue& queue, int query_label);

// theta_k <- m theta_k + (1 - m) theta_q, element-wise.
void momentum_update(std::span<double> key, std::span<const double> query, double m);
void momentum_update(nn::MlpParams& key, const nn::MlpParams& query, double m);

// Query network, its moving-average key copy and the coefficient m.
class MomentumPair {
 public:
  MomentumPair(nn::MlpState query, double m);

  nn::MlpState& query() { return query_; }
  const nn::MlpState& query() const { return query_; }
  nn::MlpState& key() { return key_; }
  const nn::MlpState& key() const { return key_; }
  double coefficient() const { return m_; }

  // Moves the key parameters toward the query parameters. Normalization
  // statistics of the key network are its own and are not averaged.
  void update();

 private:
  nn::MlpState query_;
  nn::MlpState key_;
  double m_;
};

// index,label,k1..kd
void write_queue_csv(std::ostream& out, const KeyQueue& queue);

}  // namespace jcl::moco
