#pragma once

// Discrete entropy, mutual information and Jensen-Shannon quantities in nats,
// the InfoNCE estimator, and exact checks of the identities relating them.
// Convention: 0 log 0 = 0.

#include "jcl/linalg.hpp"
#include "jcl/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace jcl::info {

inline constexpr double kPmfTolerance = 1e-12;
inline constexpr double kIdentityTolerance = 1e-10;

class DiscreteDistribution {
 public:
  explicit DiscreteDistribution(std::vector<double> pmf);

  std::size_t size() const { return pmf_.size(); }
  std::span<const double> pmf() const { return pmf_; }
  double operator[](std::size_t i) const { return pmf_[i]; }

 private:
  std::vector<double> pmf_;
};

// Joint pmf with the first variable on rows and the second on columns.
class DiscreteJoint {
 public:
  explicit DiscreteJoint(Matrix pmf);

  const Matrix& pmf() const { return pmf_; }
  Eigen::Index rows() const { return pmf_.rows(); }
  Eigen::Index cols() const { return pmf_.cols(); }
  DiscreteDistribution row_marginal() const;
  DiscreteDistribution col_marginal() const;

 private:
  Matrix pmf_;
};

// prior over Y, channel Y -> X, channel X -> Z (both row-stochastic).
class MarkovChain3 {
 public:
  MarkovChain3(std::vector<double> prior, Matrix y_to_x, Matrix x_to_z);

  const DiscreteDistribution& prior() const { return prior_; }
  const Matrix& y_to_x() const { return y_to_x_; }
  const Matrix& x_to_z() const { return x_to_z_; }

 private:
  DiscreteDistribution prior_;
  Matrix y_to_x_;
  Matrix x_to_z_;
};

double entropy(const DiscreteDistribution& p);

// H(A) + H(B) - H(A,B). Non-negative up to rounding.
double mutual_information(const DiscreteJoint& joint);

// H(sum_i pi_i D_i) - sum_i pi_i H(D_i)
double generalized_js(std::span<const DiscreteDistribution> dists, std::span<const double> weights);

// Joint of (Y, Z) with P(Y = i) = pi_i and P(Z | Y = i) = D_i.
DiscreteJoint label_mixture_joint(std::span<const DiscreteDistribution> dists,
                                  std::span<const double> weights);

// |generalized_js - I(Y;Z)| for the label-mixture joint.
double check_js_mi_identity(std::span<const DiscreteDistribution> dists,
                            std::span<const double> weights);

// scores(i, j) = c(x_i, y_j) for K jointly drawn pairs (x_i, y_i). Returns
// (1/K) sum_i log( e^{c(x_i,y_i)} / ((1/K) sum_j e^{c(x_i,y_j)}) ), which is
// never above log K.
double infonce_estimate(const Matrix& scores);

template <typename X, typename Y, typename Critic>
double infonce_estimate(std::span<const X> xs, std::span<const Y> ys, Critic&& critic) {
  Matrix scores(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < ys.size(); ++j) {
      scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = critic(xs[i], ys[j]);
    }
  }
  return infonce_estimate(scores);
}

// Score assigned to pairs that the joint gives zero mass. e^-700 is far below
// any representable contribution next to an in-support pair.
inline constexpr double kImpossiblePairScore = -700.0;

// log p(x,y) / (p(x) p(y)) for every cell, kImpossiblePairScore on zero cells.
Matrix optimal_critic(const DiscreteJoint& joint);

struct InfoNceReport {
  std::size_t k = 0;
  std::size_t trials = 0;
  double mean = 0.0;
  double sem = 0.0;
  double mutual_information = 0.0;
  double log_k = 0.0;
  double bound = 0.0;  // min(I, log K) + 3 SEM
  bool holds = false;
};

// Monte-Carlo mean of the optimal-critic estimate over `trials` independent
// draws of K pairs. Trial t draws from its own stream derived from `seed`.
InfoNceReport check_infonce_bound(const DiscreteJoint& joint, std::size_t k, std::size_t trials,
                                  std::uint64_t seed);

struct DpiReport {
  double i_y_x = 0.0;
  double i_y_z = 0.0;
  double i_z1_z2 = 0.0;
  double i_y_z1 = 0.0;
  double i_y_z1z2 = 0.0;
  double slack_channel = 0.0;     // I(Y;X) - I(Y;Z)
  double slack_branches = 0.0;    // I(Y;Z1) - I(Z1;Z2)
  double slack_pair = 0.0;        // I(Y;(Z1,Z2)) - I(Y;Z1)
  bool holds = false;
};

// Data-processing checks for Y -> X -> Z and for two conditionally independent
// branches Z1 <- X1 <- Y -> X2 -> Z2 sharing the same channels.
DpiReport check_dpi_chain(const MarkovChain3& chain);

struct EntropyTradeoff {
  double h_z = 0.0;
  double h_z_given_y = 0.0;
  double mutual_information = 0.0;
};

// I(Y;Z) = H(Z) - H(Z|Y) with Y on the rows of the joint.
EntropyTradeoff entropy_tradeoff(const DiscreteJoint& joint);

// Random instances for property checks.
DiscreteDistribution random_distribution(Rng& rng, std::size_t size, double hole_probability = 0.2);
DiscreteJoint random_joint(Rng& rng, std::size_t rows, std::size_t cols);
MarkovChain3 random_chain(Rng& rng, std::size_t max_alphabet);

struct CheckRow {
  std::string check_name;
  double statistic = 0.0;
  double bound = 0.0;
  double slack = 0.0;
  bool pass = false;
};

void write_check_csv(std::ostream& out, std::span<const CheckRow> rows);

}  // namespace jcl::info
