#pragma once

// Exact evaluation of expected-error bounds for domain adaptation on finite
// input spaces. Every quantity is a finite sum, so the bounds can be checked
// exhaustively rather than estimated.

#include "jcl/rng.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace jcl::theory {

inline constexpr double kTolerance = 1e-12;

using Hypothesis = std::vector<double>;

// A distribution over points 0..n-1 together with a [0,1]-valued labeling function.
class FiniteDomain {
 public:
  FiniteDomain(std::vector<double> probs, std::vector<double> labels);

  std::size_t size() const { return probs_.size(); }
  std::span<const double> probs() const { return probs_; }
  std::span<const double> labels() const { return labels_; }

 private:
  std::vector<double> probs_;
  std::vector<double> labels_;
};

// Finite set of [0,1]-valued hypotheses over a shared point set.
class HypothesisClass {
 public:
  explicit HypothesisClass(std::vector<Hypothesis> hypotheses);

  std::size_t size() const { return hypotheses_.size(); }
  std::size_t point_count() const { return hypotheses_.front().size(); }
  const Hypothesis& operator[](std::size_t i) const { return hypotheses_.at(i); }
  const std::vector<Hypothesis>& members() const { return hypotheses_; }

  // Index of the first member equal to h, if any.
  std::optional<std::size_t> find(std::span<const double> h) const;

 private:
  std::vector<Hypothesis> hypotheses_;
};

struct BoundTerm {
  std::string name;
  double value = 0.0;
};

struct BoundReport {
  double lhs = 0.0;
  std::vector<BoundTerm> rhs_terms;
  double rhs_total = 0.0;
  bool holds = false;
  double slack = 0.0;

  // Value of a named term, 0 when absent.
  double term(const std::string& name) const;
};

struct LemmaCheck {
  bool holds = false;
  double slack = 0.0;
};

// Sum over x of D(x)|h(x) - f(x)|.
double expected_error(std::span<const double> h, std::span<const double> f,
                      const FiniteDomain& domain);

// 2 max over pairs in H of |eps_S(h,h') - eps_T(h,h')|, with eps(h,h') = E|h - h'|.
double hdh_distance(const HypothesisClass& hypotheses, const FiniteDomain& source,
                    const FiniteDomain& target);

// Equal mixture of the two distributions with averaged labels.
FiniteDomain combine_domains(const FiniteDomain& source, const FiniteDomain& target);

struct IdealJoint {
  std::size_t index = 0;
  double lambda = 0.0;
};

// Minimizer of eps_S(h,f_S) + eps_T(h,f_T) over H; ties go to the lowest index.
IdealJoint ideal_joint_lambda(const HypothesisClass& hypotheses, const FiniteDomain& source,
                              const FiniteDomain& target);

// eps_T(h,f_T) <= eps_S(h,f_S) + d/2 + lambda
BoundReport check_theorem1(std::size_t h_index, const HypothesisClass& hypotheses,
                           const FiniteDomain& source, const FiniteDomain& target);

// eps_T(h,f_T) <= eps_S(h,f_S) + d/4 + 2 eps_U(h,f_U)
BoundReport check_theorem2(std::size_t h_index, const HypothesisClass& hypotheses,
                           const FiniteDomain& source, const FiniteDomain& target);

// eps_T(h,f_T) <= eps_S(h,f_S) + d/4 + 2 eps_U(h,f_U^) + eps_T(f_T,f_T^),
// where f_U^ averages f_S with the pseudo-labels.
BoundReport check_theorem3(std::size_t h_index, const HypothesisClass& hypotheses,
                           const FiniteDomain& source, const FiniteDomain& target,
                           std::span<const double> pseudo_labels);

// eps_D(h,h') <= eps_D(h,h'') + eps_D(h'',h')
LemmaCheck check_lemma_triangle(std::span<const double> h, std::span<const double> h_prime,
                                std::span<const double> h_mid, const FiniteDomain& domain);

// |eps_S(h,h') - eps_T(h,h')| <= d/2. Both hypotheses must be members of H.
LemmaCheck check_lemma_hdh(std::span<const double> h, std::span<const double> h_prime,
                           const HypothesisClass& hypotheses, const FiniteDomain& source,
                           const FiniteDomain& target);

// A complete bound-checking instance. The pseudo-labels are optional on input;
// the generator always fills them.
struct BoundInstance {
  FiniteDomain source;
  FiniteDomain target;
  HypothesisClass hypotheses;
  std::optional<std::vector<double>> pseudo_labels;
};

enum class ValueMode { binary, grid, mixed };

struct InstanceOptions {
  std::size_t max_points = 8;
  std::size_t max_hypotheses = 32;
  ValueMode mode = ValueMode::mixed;
  int grid_steps = 4;  // grid values are k / grid_steps
};

// Random instance. The labeling functions f_S, f_T and the pseudo-labels are
// included in H, which is what the combined-domain bounds require of H.
BoundInstance random_instance(Rng& rng, const InstanceOptions& options);

// One CSV row of a bound suite.
struct BoundRow {
  std::size_t instance_id = 0;
  std::string check;
  std::size_t h_index = 0;
  double lhs = 0.0;
  double source_error = 0.0;
  double hdh_term = 0.0;
  double joint_term = 0.0;
  double pseudo_term = 0.0;
  double rhs_total = 0.0;
  double slack = 0.0;
  bool holds = false;
};

// Runs theorems 1-3 for each listed hypothesis, plus both lemmas on members
// drawn from rng.
std::vector<BoundRow> verify_instance(std::size_t instance_id, const BoundInstance& instance,
                                      std::span<const std::size_t> h_indices, Rng& rng);

struct BoundSuiteOptions {
  std::size_t instances = 1000;
  std::size_t hypotheses_per_instance = 3;
  std::uint64_t seed = 0;
  InstanceOptions generator;
  unsigned threads = 1;
};

struct BoundSuiteResult {
  std::vector<BoundRow> rows;
  std::size_t violations = 0;
  double min_slack = 0.0;
};

// Instances are generated from per-instance seeds, so the output does not depend
// on the thread count.
BoundSuiteResult run_bound_suite(const BoundSuiteOptions& options);

void write_bound_csv(std::ostream& out, std::span<const BoundRow> rows);

}  // namespace jcl::theory
