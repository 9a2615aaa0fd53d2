#include "jcl/infotheory.hpp"

#include "jcl/csv.hpp"
#include "jcl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace jcl::info {
namespace {

double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

double entropy_of(std::span<const double> pmf) {
  double h = 0.0;
  for (double p : pmf) h -= plogp(p);
  return h;
}

void validate_pmf(std::span<const double> pmf, const char* what) {
  if (pmf.empty()) throw ContractError(std::string(what) + ": empty pmf");
  double total = 0.0;
  for (double p : pmf) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw ContractError(std::string(what) + ": negative or non-finite mass");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kPmfTolerance) {
    throw ContractError(std::string(what) + ": mass sums to " + csv::num(total));
  }
}

void validate_stochastic(const Matrix& m, const char* what) {
  if (m.rows() == 0 || m.cols() == 0) throw ContractError(std::string(what) + ": empty matrix");
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    validate_pmf(std::span<const double>(m.row(r).data(), static_cast<std::size_t>(m.cols())), what);
  }
}

double matrix_entropy(const Matrix& m) {
  return entropy_of(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}

std::vector<double> to_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

DiscreteDistribution::DiscreteDistribution(std::vector<double> pmf) : pmf_(std::move(pmf)) {
  validate_pmf(pmf_, "DiscreteDistribution");
}

DiscreteJoint::DiscreteJoint(Matrix pmf) : pmf_(std::move(pmf)) {
  validate_pmf(std::span<const double>(pmf_.data(), static_cast<std::size_t>(pmf_.size())),
               "DiscreteJoint");
}

DiscreteDistribution DiscreteJoint::row_marginal() const {
  return DiscreteDistribution(to_vector(pmf_.rowwise().sum()));
}

DiscreteDistribution DiscreteJoint::col_marginal() const {
  return DiscreteDistribution(to_vector(pmf_.colwise().sum().transpose()));
}

MarkovChain3::MarkovChain3(std::vector<double> prior, Matrix y_to_x, Matrix x_to_z)
    : prior_(std::move(prior)), y_to_x_(std::move(y_to_x)), x_to_z_(std::move(x_to_z)) {
  require_same_size(static_cast<std::size_t>(y_to_x_.rows()), prior_.size(), "MarkovChain3 Y->X rows");
  require_same_size(static_cast<std::size_t>(x_to_z_.rows()), static_cast<std::size_t>(y_to_x_.cols()),
                    "MarkovChain3 X->Z rows");
  validate_stochastic(y_to_x_, "MarkovChain3 Y->X");
  validate_stochastic(x_to_z_, "MarkovChain3 X->Z");
}

double entropy(const DiscreteDistribution& p) { return entropy_of(p.pmf()); }

double mutual_information(const DiscreteJoint& joint) {
  return entropy(joint.row_marginal()) + entropy(joint.col_marginal()) - matrix_entropy(joint.pmf());
}

double generalized_js(std::span<const DiscreteDistribution> dists, std::span<const double> weights) {
  if (dists.empty()) throw ContractError("generalized_js: no distributions");
  require_same_size(weights.size(), dists.size(), "generalized_js weights");
  validate_pmf(weights, "generalized_js weights");
  const std::size_t alphabet = dists.front().size();
  std::vector<double> mixture(alphabet, 0.0);
  double weighted = 0.0;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    require_same_size(dists[i].size(), alphabet, "generalized_js alphabet");
    for (std::size_t z = 0; z < alphabet; ++z) mixture[z] += weights[i] * dists[i][z];
    weighted += weights[i] * entropy(dists[i]);
  }
  return entropy_of(mixture) - weighted;
}

DiscreteJoint label_mixture_joint(std::span<const DiscreteDistribution> dists,
                                  std::span<const double> weights) {
  if (dists.empty()) throw ContractError("label_mixture_joint: no distributions");
  require_same_size(weights.size(), dists.size(), "label_mixture_joint weights");
  validate_pmf(weights, "label_mixture_joint weights");
  const std::size_t alphabet = dists.front().size();
  Matrix pmf(static_cast<Eigen::Index>(dists.size()), static_cast<Eigen::Index>(alphabet));
  for (std::size_t i = 0; i < dists.size(); ++i) {
    require_same_size(dists[i].size(), alphabet, "label_mixture_joint alphabet");
    for (std::size_t z = 0; z < alphabet; ++z) {
      pmf(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(z)) = weights[i] * dists[i][z];
    }
  }
  return DiscreteJoint(std::move(pmf));
}

double check_js_mi_identity(std::span<const DiscreteDistribution> dists,
                            std::span<const double> weights) {
  return std::abs(generalized_js(dists, weights) -
                  mutual_information(label_mixture_joint(dists, weights)));
}

double infonce_estimate(const Matrix& scores) {
  const Eigen::Index k = scores.rows();
  if (k == 0) throw ContractError("infonce_estimate: K = 0");
  if (scores.cols() != k) throw DimensionError("infonce_estimate: score matrix must be K x K");
  if (!scores.allFinite()) throw ContractError("infonce_estimate: non-finite critic value");
  const double log_k = std::log(static_cast<double>(k));
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double peak = scores.row(i).maxCoeff();
    const double lse = peak + std::log((scores.row(i).array() - peak).exp().sum());
    total += scores(i, i) - (lse - log_k);
  }
  return total / static_cast<double>(k);
}

Matrix optimal_critic(const DiscreteJoint& joint) {
  const auto px = joint.row_marginal();
  const auto py = joint.col_marginal();
  Matrix critic(joint.rows(), joint.cols());
  for (Eigen::Index x = 0; x < joint.rows(); ++x) {
    for (Eigen::Index y = 0; y < joint.cols(); ++y) {
      const double pxy = joint.pmf()(x, y);
      critic(x, y) = pxy > 0.0 ? std::log(pxy / (px[static_cast<std::size_t>(x)] *
                                                 py[static_cast<std::size_t>(y)]))
                               : kImpossiblePairScore;
    }
  }
  return critic;
}

InfoNceReport check_infonce_bound(const DiscreteJoint& joint, std::size_t k, std::size_t trials,
                                  std::uint64_t seed) {
  if (k == 0) throw ContractError("check_infonce_bound: K = 0");
  if (trials == 0) throw ContractError("check_infonce_bound: zero trials");
  const Matrix critic = optimal_critic(joint);
  const auto cols = joint.cols();
  const auto& pmf = joint.pmf();
  std::vector<double> cells(pmf.data(), pmf.data() + pmf.size());

  std::vector<double> estimates(trials);
  std::vector<Eigen::Index> xs(k), ys(k);
  Matrix scores(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::discrete_distribution<Eigen::Index> draw(cells.begin(), cells.end());
    for (std::size_t i = 0; i < k; ++i) {
      const Eigen::Index cell = draw(rng);
      xs[i] = cell / cols;
      ys[i] = cell % cols;
    }
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = critic(xs[i], ys[j]);
      }
    }
    estimates[t] = infonce_estimate(scores);
  }

  InfoNceReport report;
  report.k = k;
  report.trials = trials;
  report.mean = std::accumulate(estimates.begin(), estimates.end(), 0.0) / static_cast<double>(trials);
  if (trials > 1) {
    double ss = 0.0;
    for (double e : estimates) ss += (e - report.mean) * (e - report.mean);
    report.sem = std::sqrt(ss / static_cast<double>(trials - 1)) / std::sqrt(static_cast<double>(trials));
  }
  report.mutual_information = mutual_information(joint);
  report.log_k = std::log(static_cast<double>(k));
  report.bound = std::min(report.mutual_information, report.log_k) + 3.0 * report.sem;
  // 1e-12 absorbs rounding when every trial is exactly at the bound (K = 1, independence).
  report.holds = report.mean <= report.bound + 1e-12;
  return report;
}

DpiReport check_dpi_chain(const MarkovChain3& chain) {
  const auto& prior = chain.prior();
  const Eigen::Index ny = static_cast<Eigen::Index>(prior.size());
  const Matrix& yx = chain.y_to_x();
  const Matrix y_to_z = yx * chain.x_to_z();
  const Eigen::Index nx = yx.cols();
  const Eigen::Index nz = y_to_z.cols();

  Matrix p_yx(ny, nx), p_yz(ny, nz), p_z1z2 = Matrix::Zero(nz, nz), p_y_z1z2(ny, nz * nz);
  for (Eigen::Index y = 0; y < ny; ++y) {
    const double py = prior[static_cast<std::size_t>(y)];
    p_yx.row(y) = py * yx.row(y);
    p_yz.row(y) = py * y_to_z.row(y);
    for (Eigen::Index a = 0; a < nz; ++a) {
      for (Eigen::Index b = 0; b < nz; ++b) {
        const double mass = py * y_to_z(y, a) * y_to_z(y, b);
        p_z1z2(a, b) += mass;
        p_y_z1z2(y, a * nz + b) = mass;
      }
    }
  }
  // Rounding in the products can leave the totals a few ulps from 1.
  auto joint = [](Matrix m) {
    m /= m.sum();
    return DiscreteJoint(std::move(m));
  };

  DpiReport r;
  r.i_y_x = mutual_information(joint(p_yx));
  r.i_y_z = mutual_information(joint(p_yz));
  r.i_z1_z2 = mutual_information(joint(p_z1z2));
  r.i_y_z1 = r.i_y_z;
  r.i_y_z1z2 = mutual_information(joint(p_y_z1z2));
  r.slack_channel = r.i_y_x - r.i_y_z;
  r.slack_branches = r.i_y_z1 - r.i_z1_z2;
  r.slack_pair = r.i_y_z1z2 - r.i_y_z1;
  r.holds = r.slack_channel >= -kIdentityTolerance && r.slack_branches >= -kIdentityTolerance &&
            r.slack_pair >= -kIdentityTolerance;
  return r;
}

EntropyTradeoff entropy_tradeoff(const DiscreteJoint& joint) {
  const auto py = joint.row_marginal();
  const auto pz = joint.col_marginal();
  EntropyTradeoff t;
  t.h_z = entropy(pz);
  // H(Z|Y) = sum_y p(y) H(Z | Y = y)
  for (Eigen::Index y = 0; y < joint.rows(); ++y) {
    const double p = py[static_cast<std::size_t>(y)];
    if (p <= 0.0) continue;
    double h = 0.0;
    for (Eigen::Index z = 0; z < joint.cols(); ++z) h -= plogp(joint.pmf()(y, z) / p);
    t.h_z_given_y += p * h;
  }
  t.mutual_information = t.h_z - t.h_z_given_y;
  return t;
}

DiscreteDistribution random_distribution(Rng& rng, std::size_t size, double hole_probability) {
  if (size == 0) throw ContractError("random_distribution: empty alphabet");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> w(size);
  double total = 0.0;
  for (auto& x : w) {
    x = unit(rng) < hole_probability ? 0.0 : -std::log(1.0 - unit(rng));
    total += x;
  }
  if (total <= 0.0) {
    w[std::uniform_int_distribution<std::size_t>(0, size - 1)(rng)] = 1.0;
    total = 1.0;
  }
  for (auto& x : w) x /= total;
  return DiscreteDistribution(std::move(w));
}

DiscreteJoint random_joint(Rng& rng, std::size_t rows, std::size_t cols) {
  const auto flat = random_distribution(rng, rows * cols);
  Matrix pmf(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::copy(flat.pmf().begin(), flat.pmf().end(), pmf.data());
  return DiscreteJoint(std::move(pmf));
}

MarkovChain3 random_chain(Rng& rng, std::size_t max_alphabet) {
  std::uniform_int_distribution<std::size_t> alphabet(1, max_alphabet);
  const std::size_t ny = alphabet(rng), nx = alphabet(rng), nz = alphabet(rng);
  auto channel = [&](std::size_t rows, std::size_t cols) {
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = random_distribution(rng, cols, 0.3);
      for (std::size_t c = 0; c < cols; ++c) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
      }
    }
    return m;
  };
  auto prior = random_distribution(rng, ny, 0.1);
  Matrix yx = channel(ny, nx);
  Matrix xz = channel(nx, nz);
  return MarkovChain3({prior.pmf().begin(), prior.pmf().end()}, std::move(yx), std::move(xz));
}

void write_check_csv(std::ostream& out, std::span<const CheckRow> rows) {
  out << "check_name,statistic,bound,slack,pass\n";
  for (const auto& r : rows) {
    out << r.check_name << ',' << csv::num(r.statistic) << ',' << csv::num(r.bound) << ','
        << csv::num(r.slack) << ',' << csv::flag(r.pass) << '\n';
  }
}

}  // namespace jcl::info
