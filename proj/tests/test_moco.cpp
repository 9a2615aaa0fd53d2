#include "jcl/errors.hpp"
#include "jcl/moco.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <sstream>

using namespace jcl;
using namespace jcl::moco;

namespace {

Matrix unit_batch(Rng& rng, Eigen::Index rows, int dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(rows, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  normalize_rows(m);
  return m;
}

double param_distance(const nn::MlpParams& a, const nn::MlpParams& b) {
  double s = 0.0;
  nn::zip_tensors(a, b, [&](std::span<const double> x, std::span<const double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  });
  return std::sqrt(s);
}

nn::Architecture tiny_arch() {
  nn::Architecture a;
  a.input_dim = 2;
  a.hidden = {6};
  a.feature_dim = 4;
  a.projection_dim = 3;
  a.num_classes = 2;
  return a;
}

}  // namespace

TEST(KeyQueue, FifoEviction) {
  KeyQueue q(3, 2);
  Matrix k(2, 2);
  k << 1, 0, 0, 1;
  q.enqueue_batch(k, std::vector<int>{0, 1});
  EXPECT_EQ(q.size(), 2u);
  EXPECT_FALSE(q.full());
  Matrix k2(2, 2);
  k2 << -1, 0, 0, -1;
  q.enqueue_batch(k2, std::vector<int>{2, 3});
  EXPECT_TRUE(q.full());
  EXPECT_EQ(q.label_vector(), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(q.order(), (std::deque<std::size_t>{1, 2, 3}));
  EXPECT_EQ(q.key_matrix().row(0), k.row(1));
}

TEST(KeyQueue, Contracts) {
  EXPECT_THROW(KeyQueue(0, 2), ContractError);
  EXPECT_THROW(KeyQueue(4, 0), ContractError);
  KeyQueue q(2, 2);
  Matrix not_unit(1, 2);
  not_unit << 1, 1;
  EXPECT_THROW(q.enqueue_batch(not_unit, std::vector<int>{0}), ContractError);
  Matrix wide = Matrix::Zero(1, 3);
  wide(0, 0) = 1;
  EXPECT_THROW(q.enqueue_batch(wide, std::vector<int>{0}), DimensionError);
  Rng rng(1);
  EXPECT_THROW(q.enqueue_batch(unit_batch(rng, 3, 2), std::vector<int>{0, 0, 0}), ContractError);
  EXPECT_THROW(q.enqueue_batch(unit_batch(rng, 2, 2), std::vector<int>{0}), DimensionError);
  EXPECT_EQ(q.size(), 0u);
}

TEST(KeyQueue, LargeCapacities) {
  for (std::size_t cap : {4096u, 32768u}) {
    KeyQueue q(cap, 8);
    Rng rng(cap);
    std::size_t pushed = 0;
    while (pushed < cap + 1000) {
      const Matrix b = unit_batch(rng, 256, 8);
      std::vector<int> labels(256);
      for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>((pushed + i) % 5);
      q.enqueue_batch(b, labels);
      pushed += 256;
      ASSERT_EQ(q.size(), std::min(pushed, cap));
    }
    EXPECT_TRUE(q.full());
    EXPECT_EQ(q.order().front(), pushed - cap);
    EXPECT_EQ(q.order().back(), pushed - 1);
    EXPECT_EQ(q.labels().front(), static_cast<int>((pushed - cap) % 5));
    EXPECT_TRUE(rows_unit_norm(q.key_matrix(), 1e-9));
  }
}

// Random interleavings checked against a plain deque model.
TEST(KeyQueue, RandomSequencesMatchModel) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<std::size_t> cap_d(1, 40);
    const std::size_t cap = cap_d(rng);
    KeyQueue q(cap, 3);
    std::deque<std::pair<int, std::size_t>> model;
    std::size_t seq = 0;
    for (int op = 0; op < 60; ++op) {
      std::uniform_int_distribution<std::size_t> batch_d(1, cap);
      const std::size_t b = batch_d(rng);
      std::vector<int> labels(b);
      for (auto& y : labels) y = std::uniform_int_distribution<int>(0, 3)(rng);
      q.enqueue_batch(unit_batch(rng, static_cast<Eigen::Index>(b), 3), labels);
      for (int y : labels) model.emplace_back(y, seq++);
      while (model.size() > cap) model.pop_front();
      ASSERT_EQ(q.size(), model.size());
      for (std::size_t i = 0; i < model.size(); ++i) {
        ASSERT_EQ(q.labels()[i], model[i].first);
        ASSERT_EQ(q.order()[i], model[i].second);
      }
      for (std::size_t i = 1; i < q.order().size(); ++i) ASSERT_LT(q.order()[i - 1], q.order()[i]);
    }
  }
}

TEST(Partition, SplitsByLabel) {
  Rng rng(3);
  KeyQueue q(10, 4);
  std::vector<int> labels = {0, 1, 2, 1, 1, 0};
  const Matrix k = unit_batch(rng, 6, 4);
  q.enqueue_batch(k, labels);
  const auto p = partition_by_label(q, 1);
  EXPECT_EQ(p.positives.rows(), 3);
  EXPECT_EQ(p.negatives.rows(), 3);
  EXPECT_EQ(p.positives.row(0), k.row(1));
  EXPECT_EQ(p.negatives.row(2), k.row(5));
  const auto none = partition_by_label(q, 7);
  EXPECT_EQ(none.positives.rows(), 0);
  EXPECT_EQ(none.negatives.rows(), 6);
}

TEST(MomentumUpdate, ElementwiseValues) {
  std::vector<double> key = {1.0, 0.0}, query = {0.0, 2.0};
  momentum_update(key, query, 0.75);
  EXPECT_DOUBLE_EQ(key[0], 0.75);
  EXPECT_DOUBLE_EQ(key[1], 0.5);
  momentum_update(key, query, 0.0);
  EXPECT_EQ(key, query);
  EXPECT_THROW(momentum_update(key, query, 1.0), ContractError);
  EXPECT_THROW(momentum_update(key, query, -0.1), ContractError);
}

TEST(MomentumUpdate, ContractsTowardQuery) {
  Rng rng(5);
  for (double m : {0.5, 0.9, 0.99, 0.999}) {
    auto q = nn::init_state(tiny_arch(), rng);
    MomentumPair pair(q, m);
    EXPECT_EQ(param_distance(pair.key().params, pair.query().params), 0.0);
    pair.query() = nn::init_state(tiny_arch(), rng);
    // Rounding in the update is about eps |theta|, so the gap is kept well above it.
    for (int step = 0; step < 5; ++step) {
      const double before = param_distance(pair.key().params, pair.query().params);
      pair.update();
      const double after = param_distance(pair.key().params, pair.query().params);
      EXPECT_NEAR(after, m * before, 1e-12 * before);
    }
  }
}

TEST(MomentumUpdate, KeyStatisticsAreNotAveraged) {
  Rng rng(6);
  MomentumPair pair(nn::init_state(tiny_arch(), rng), 0.9);
  Matrix x(4, 2);
  x << 1, 2, 3, 4, 5, 6, 7, 8;
  nn::forward(pair.query(), x, nn::Domain::source, nn::Mode::train);
  const auto key_stats = nn::stats_hash(pair.key(), nn::Domain::source);
  pair.update();
  EXPECT_EQ(nn::stats_hash(pair.key(), nn::Domain::source), key_stats);
}

TEST(QueueCsv, HeaderAndRows) {
  KeyQueue q(4, 2);
  Matrix k(1, 2);
  k << 0, 1;
  q.enqueue_batch(k, std::vector<int>{3});
  std::ostringstream os;
  write_queue_csv(os, q);
  const auto text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "index,label,k1,k2");
  EXPECT_NE(text.find("\n0,3,"), std::string::npos);
}
