#include "jcl/errors.hpp"
#include "jcl/nn.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace jcl;
using namespace jcl::nn;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

Matrix unit_rows(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m = random_matrix(rng, rows, cols);
  normalize_rows(m);
  return m;
}

Architecture small_arch() {
  Architecture a;
  a.input_dim = 3;
  a.hidden = {8, 6};
  a.feature_dim = 5;
  a.projection_dim = 4;
  a.num_classes = 3;
  return a;
}

}  // namespace

TEST(Architecture, RejectsNonPositiveWidths) {
  Architecture a = small_arch();
  a.feature_dim = 0;
  EXPECT_THROW(a.validate(), ContractError);
  a = small_arch();
  a.hidden = {4, 0};
  EXPECT_THROW(a.validate(), ContractError);
  EXPECT_THROW(parse_activation("gelu"), ContractError);
  EXPECT_EQ(parse_activation("tanh"), Activation::tanh);
}

TEST(Forward, ShapesAndUnitNorms) {
  Rng rng(1);
  auto state = init_state(small_arch(), rng);
  const Matrix x = random_matrix(rng, 10, 3, 5.0);
  for (Mode mode : {Mode::train, Mode::eval}) {
    const auto c = run_forward(state, x, Domain::source, mode);
    EXPECT_EQ(c.z.rows(), 10);
    EXPECT_EQ(c.z.cols(), 5);
    EXPECT_EQ(c.w.cols(), 4);
    EXPECT_EQ(c.logits.cols(), 3);
    for (Eigen::Index i = 0; i < c.z.rows(); ++i) {
      if (c.feature_norm[i] == 0.0) {
        EXPECT_EQ(c.z.row(i).norm(), 0.0);
      } else {
        EXPECT_NEAR(c.z.row(i).norm(), 1.0, 1e-12);
      }
      if (c.projection_norm[i] > 0.0) EXPECT_NEAR(c.w.row(i).norm(), 1.0, 1e-12);
    }
  }
}

TEST(Backward, DeadRowPassesNoGradient) {
  Architecture a = small_arch();
  a.hidden = {2};
  Rng rng(14);
  auto state = init_state(a, rng);
  state.params.norm[0].beta.setConstant(-100.0);  // every hidden unit dead
  const Matrix x = random_matrix(rng, 4, 3);
  const auto c = run_forward(state, x, Domain::source, Mode::eval);
  EXPECT_EQ(c.feature_norm.maxCoeff(), 0.0);
  Upstream up;
  up.dz = Matrix::Ones(4, a.feature_dim);
  const auto g = backward(state, c, up);
  bool finite = true;
  for_each_tensor(g, [&](const std::string&, std::span<const double> s) {
    for (double v : s) finite = finite && std::isfinite(v);
  });
  EXPECT_TRUE(finite);
}

TEST(Forward, RejectsBadBatches) {
  Rng rng(1);
  auto state = init_state(small_arch(), rng);
  EXPECT_THROW(run_forward(state, Matrix(0, 3), Domain::source, Mode::eval), ContractError);
  EXPECT_THROW(run_forward(state, Matrix::Zero(4, 2), Domain::source, Mode::eval), DimensionError);
}

TEST(Forward, EvalIsDeterministicAndRowIndependent) {
  Rng rng(2);
  auto state = init_state(small_arch(), rng);
  const Matrix x = random_matrix(rng, 12, 3);
  const auto a = run_forward(state, x, Domain::target, Mode::eval);
  const auto b = run_forward(state, x, Domain::target, Mode::eval);
  EXPECT_TRUE((a.z.array() == b.z.array()).all());
  EXPECT_TRUE((a.logits.array() == b.logits.array()).all());
  const auto one = run_forward(state, Matrix(x.row(4)), Domain::target, Mode::eval);
  EXPECT_LT((one.z.row(0) - a.z.row(4)).norm(), 1e-14);
}

TEST(Forward, TrainModeStandardizesBatch) {
  Rng rng(3);
  auto state = init_state(small_arch(), rng);
  const Matrix x = random_matrix(rng, 64, 3, 4.0);
  const auto c = run_forward(state, x, Domain::source, Mode::train);
  for (const auto& layer : c.layers) {
    const RowVector mean = layer.normalized.colwise().mean();
    EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(DomainStats, TrainPassOnlyTouchesItsDomain) {
  Rng rng(4);
  auto state = init_state(small_arch(), rng);
  const auto src_before = stats_hash(state, Domain::source);
  const auto tgt_before = stats_hash(state, Domain::target);
  const auto params_before = parameter_hash(state.params);
  forward(state, random_matrix(rng, 16, 3, 3.0), Domain::source, Mode::train);
  EXPECT_NE(stats_hash(state, Domain::source), src_before);
  EXPECT_EQ(stats_hash(state, Domain::target), tgt_before);
  EXPECT_EQ(parameter_hash(state.params), params_before);

  const auto src_mid = stats_hash(state, Domain::source);
  forward(state, random_matrix(rng, 16, 3), Domain::target, Mode::eval);
  EXPECT_EQ(stats_hash(state, Domain::target), tgt_before);
  forward(state, random_matrix(rng, 16, 3), Domain::target, Mode::train);
  EXPECT_EQ(stats_hash(state, Domain::source), src_mid);
  EXPECT_NE(stats_hash(state, Domain::target), tgt_before);
}

TEST(DomainStats, RunningAverageUpdate) {
  Rng rng(5);
  auto state = init_state(small_arch(), rng);
  const Vector mean0 = state.stats_for(Domain::source)[0].mean;
  const auto c = forward(state, random_matrix(rng, 8, 3), Domain::source, Mode::train);
  const Vector expected = kStatsMomentum * mean0 + (1.0 - kStatsMomentum) * c.layers[0].mean;
  EXPECT_LT((state.stats_for(Domain::source)[0].mean - expected).norm(), 1e-15);
}

TEST(DomainStats, DifferentStatisticsGiveDifferentOutputs) {
  Rng rng(6);
  auto state = init_state(small_arch(), rng);
  for (int i = 0; i < 20; ++i) {
    forward(state, random_matrix(rng, 32, 3), Domain::source, Mode::train);
    Matrix shifted = random_matrix(rng, 32, 3);
    shifted.array() += 3.0;
    forward(state, shifted, Domain::target, Mode::train);
  }
  const Matrix x = random_matrix(rng, 4, 3);
  const auto s = run_forward(state, x, Domain::source, Mode::eval);
  const auto t = run_forward(state, x, Domain::target, Mode::eval);
  EXPECT_GT((s.z - t.z).norm(), 1e-3);
}

TEST(Params, CongruenceAndAxpy) {
  Rng rng(7);
  auto a = init_state(small_arch(), rng);
  auto b = init_state(small_arch(), rng);
  EXPECT_EQ(parameter_count(a.params), parameter_count(b.params));
  auto sum = a.params;
  axpy(sum, b.params, 2.0);
  EXPECT_DOUBLE_EQ(sum.feature.weight(1, 2), a.params.feature.weight(1, 2) + 2.0 * b.params.feature.weight(1, 2));
  Architecture other = small_arch();
  other.hidden = {8};
  auto c = init_state(other, rng);
  EXPECT_THROW(check_congruent(a.params, c.params), DimensionError);
  auto z = zeros_like(a.params);
  EXPECT_EQ(parameter_count(z), parameter_count(a.params));
  double total = 0.0;
  for_each_tensor(z, [&](const std::string&, std::span<double> s) {
    for (double v : s) total += std::fabs(v);
  });
  EXPECT_EQ(total, 0.0);
}

TEST(CrossEntropy, Examples) {
  Matrix logits(1, 2);
  logits << 1.0, 0.0;
  std::vector<int> y = {0};
  const auto r = cross_entropy_loss(logits, y);
  EXPECT_NEAR(r.loss, std::log1p(std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(r.loss, 0.3133, 1e-4);
  const double p = 1.0 / (1.0 + std::exp(-1.0));
  EXPECT_NEAR(r.grad(0, 0), p - 1.0, 1e-15);
  EXPECT_NEAR(r.grad(0, 1), 1.0 - p, 1e-15);

  Matrix uniform = Matrix::Zero(3, 4);
  std::vector<int> labels = {0, 2, 3};
  EXPECT_NEAR(cross_entropy_loss(uniform, labels).loss, std::log(4.0), 1e-15);

  std::vector<int> bad = {0, 4, 1};
  EXPECT_THROW(cross_entropy_loss(uniform, bad), ContractError);
  EXPECT_THROW(cross_entropy_loss(uniform, std::vector<int>{0}), DimensionError);
}

TEST(CrossEntropy, NonNegativeAndStableForLargeLogits) {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const Matrix logits = random_matrix(rng, 5, 4, 300.0);
    std::vector<int> y = {0, 1, 2, 3, 0};
    const auto r = cross_entropy_loss(logits, y);
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_GE(r.loss, 0.0);
    EXPECT_LT(r.grad.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Contrastive, SinglePositiveSingleNegative) {
  Matrix q(1, 2), k(2, 2);
  q << 1, 0;
  k << 1, 0, 0, 1;
  std::vector<int> ql = {0}, kl = {0, 1};
  const auto r = contrastive_loss(q, ql, k, kl, 1.0);
  EXPECT_NEAR(r.loss, std::log1p(std::exp(-1.0)), 1e-15);

  // Without negatives the loss vanishes.
  std::vector<int> same = {0, 0};
  EXPECT_NEAR(contrastive_loss(q, ql, k, same, 1.0).loss, 0.0, 1e-300);
}

TEST(Contrastive, ContractErrors) {
  Matrix q(1, 2), k(1, 2);
  q << 1, 0;
  k << 0, 1;
  std::vector<int> ql = {0}, kl = {1};
  EXPECT_THROW(contrastive_loss(q, ql, k, kl, 1.0), ContractError);
  EXPECT_THROW(contrastive_loss(q, ql, k, ql, 0.0), ContractError);
  EXPECT_THROW(contrastive_loss(q, ql, k, ql, -1.0), ContractError);
  // The own key supplies a positive.
  EXPECT_NO_THROW(contrastive_loss(q, ql, k, kl, 1.0, &q));
}

TEST(Contrastive, InvariantToKeyOrderAndNonNegative) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix q = unit_rows(rng, 6, 4);
    const Matrix k = unit_rows(rng, 20, 4);
    std::vector<int> ql(6), kl(20);
    for (std::size_t i = 0; i < ql.size(); ++i) ql[i] = static_cast<int>(i % 3);
    for (std::size_t i = 0; i < kl.size(); ++i) kl[i] = static_cast<int>(i % 3);
    const auto base = contrastive_loss(q, ql, k, kl, 0.1);
    EXPECT_GE(base.loss, 0.0);

    std::vector<std::size_t> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Matrix kp = take_rows(k, perm);
    std::vector<int> klp(20);
    for (std::size_t i = 0; i < perm.size(); ++i) klp[i] = kl[perm[i]];
    const auto shuffled = contrastive_loss(q, ql, kp, klp, 0.1);
    EXPECT_NEAR(base.loss, shuffled.loss, 1e-12 * std::max(1.0, base.loss));
    EXPECT_LT((base.grad - shuffled.grad).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Contrastive, AlignedKeysGiveSmallLoss) {
  Matrix q(2, 2), k(4, 2);
  q << 1, 0, 0, 1;
  k << 1, 0, 1, 0, 0, 1, 0, 1;
  std::vector<int> ql = {0, 1}, kl = {0, 0, 1, 1};
  EXPECT_LT(contrastive_loss(q, ql, k, kl, 0.05).loss, 1e-7);
  std::vector<int> swapped = {1, 0};
  EXPECT_GT(contrastive_loss(q, swapped, k, kl, 0.05).loss, 10.0);
}

TEST(LrSchedule, Values) {
  EXPECT_DOUBLE_EQ(lr_schedule(0.0, 0.01, 10.0, 0.75), 0.01);
  EXPECT_NEAR(lr_schedule(1.0, 0.01, 10.0, 0.75), 0.01 * std::pow(11.0, -0.75), 1e-18);
  EXPECT_NEAR(lr_schedule(1.0, 0.01, 10.0, 0.75), 1.6556e-3, 1e-7);
  double prev = lr_schedule(0.0, 0.01, 10.0, 0.75);
  for (int i = 1; i <= 100; ++i) {
    const double lr = lr_schedule(i / 100.0, 0.01, 10.0, 0.75);
    EXPECT_LT(lr, prev);
    EXPECT_GT(lr, 0.0);
    prev = lr;
  }
  EXPECT_THROW(lr_schedule(-0.01, 0.01, 10.0, 0.75), ContractError);
  EXPECT_THROW(lr_schedule(1.01, 0.01, 10.0, 0.75), ContractError);
  EXPECT_THROW(lr_schedule(0.5, 0.0, 10.0, 0.75), ContractError);
}

TEST(Sgd, MomentumDisplacement) {
  Architecture a;
  a.input_dim = 1;
  a.hidden = {};
  a.feature_dim = 1;
  a.projection_dim = 1;
  a.num_classes = 1;
  Rng rng(10);
  auto state = init_state(a, rng);
  auto opt = make_optimizer(state.params, 0.9, 1.0, 0.0, 0.75);
  auto g = zeros_like(state.params);
  g.classifier.bias[0] = 1.0;
  const double start = state.params.classifier.bias[0];
  sgd_step(state.params, g, opt);
  EXPECT_DOUBLE_EQ(state.params.classifier.bias[0], start - 1.0);
  sgd_step(state.params, g, opt);
  EXPECT_NEAR(state.params.classifier.bias[0], start - 2.9, 1e-14);
  EXPECT_THROW(make_optimizer(state.params, 1.0, 1.0, 0.0, 0.75), ContractError);
}

TEST(Sgd, ZeroGradientWithoutMomentumLeavesParams) {
  Rng rng(11);
  auto state = init_state(small_arch(), rng);
  const auto before = parameter_hash(state.params);
  auto opt = make_optimizer(state.params, 0.0, 0.1, 10.0, 0.75);
  sgd_step(state.params, zeros_like(state.params), opt);
  EXPECT_EQ(parameter_hash(state.params), before);
}

TEST(Backward, ClassifierGradientClosedForm) {
  Rng rng(12);
  auto state = init_state(small_arch(), rng);
  const Matrix x = random_matrix(rng, 7, 3);
  const auto c = run_forward(state, x, Domain::source, Mode::train);
  std::vector<int> y = {0, 1, 2, 0, 1, 2, 0};
  const auto ce = cross_entropy_loss(c.logits, y);
  Upstream up;
  up.dlogits = ce.grad;
  const auto g = backward(state, c, up);
  const Matrix expected_w = ce.grad.transpose() * c.z;
  const Vector expected_b = ce.grad.colwise().sum().transpose();
  EXPECT_LT((g.classifier.weight - expected_w).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((g.classifier.bias - expected_b).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(g.projection.weight.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, RadialUpstreamHasNoEffect) {
  // The L2 normalization is scale invariant, so an upstream gradient along z
  // itself produces zero parameter gradients.
  Rng rng(13);
  auto state = init_state(small_arch(), rng);
  const Matrix x = random_matrix(rng, 5, 3);
  const auto c = run_forward(state, x, Domain::source, Mode::eval);
  Upstream up;
  up.dz = 3.0 * c.z;
  const auto g = backward(state, c, up);
  double worst = 0.0;
  for_each_tensor(g, [&](const std::string&, std::span<const double> s) {
    for (double v : s) worst = std::max(worst, std::fabs(v));
  });
  EXPECT_LT(worst, 1e-12);
}

TEST(Predict, Argmax) {
  Matrix logits(3, 3);
  logits << 0, 1, 0, 5, 1, 2, -1, -2, -0.5;
  EXPECT_EQ(predict(logits), (std::vector<int>{1, 0, 2}));
}
