#include "jcl/theory.hpp"

#include "jcl/csv.hpp"
#include "jcl/errors.hpp"
#include "jcl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace jcl::theory {
namespace {

void require_unit_interval(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError(std::string(what) + ": value outside [0,1]");
    }
  }
}

double disagreement(std::span<const double> a, std::span<const double> b,
                    std::span<const double> probs) {
  double sum = 0.0;
  for (std::size_t x = 0; x < probs.size(); ++x) sum += probs[x] * std::abs(a[x] - b[x]);
  return sum;
}

void require_shared_points(const HypothesisClass& hypotheses, const FiniteDomain& source,
                           const FiniteDomain& target) {
  require_same_size(source.size(), target.size(), "source/target point count");
  require_same_size(hypotheses.point_count(), source.size(), "hypothesis point count");
}

BoundReport make_report(double lhs, std::vector<BoundTerm> terms) {
  BoundReport report;
  report.lhs = lhs;
  report.rhs_terms = std::move(terms);
  for (const auto& t : report.rhs_terms) report.rhs_total += t.value;
  report.slack = report.rhs_total - report.lhs;
  report.holds = report.slack >= -kTolerance;
  return report;
}

}  // namespace

FiniteDomain::FiniteDomain(std::vector<double> probs, std::vector<double> labels)
    : probs_(std::move(probs)), labels_(std::move(labels)) {
  if (probs_.empty()) throw ContractError("FiniteDomain: empty point set");
  require_same_size(probs_.size(), labels_.size(), "FiniteDomain probs/labels");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0)) throw ContractError("FiniteDomain: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > kTolerance) {
    throw ContractError("FiniteDomain: probabilities sum to " + csv::num(total));
  }
  require_unit_interval(labels_, "FiniteDomain labels");
}

HypothesisClass::HypothesisClass(std::vector<Hypothesis> hypotheses)
    : hypotheses_(std::move(hypotheses)) {
  if (hypotheses_.empty()) throw ContractError("HypothesisClass: empty");
  const std::size_t n = hypotheses_.front().size();
  if (n == 0) throw ContractError("HypothesisClass: zero points");
  for (const auto& h : hypotheses_) {
    require_same_size(h.size(), n, "HypothesisClass member length");
    require_unit_interval(h, "HypothesisClass member");
  }
}

std::optional<std::size_t> HypothesisClass::find(std::span<const double> h) const {
  for (std::size_t i = 0; i < hypotheses_.size(); ++i) {
    if (std::equal(h.begin(), h.end(), hypotheses_[i].begin(), hypotheses_[i].end())) return i;
  }
  return std::nullopt;
}

double BoundReport::term(const std::string& name) const {
  for (const auto& t : rhs_terms) {
    if (t.name == name) return t.value;
  }
  return 0.0;
}

double expected_error(std::span<const double> h, std::span<const double> f,
                      const FiniteDomain& domain) {
  require_same_size(h.size(), domain.size(), "expected_error h");
  require_same_size(f.size(), domain.size(), "expected_error f");
  return disagreement(h, f, domain.probs());
}

double hdh_distance(const HypothesisClass& hypotheses, const FiniteDomain& source,
                    const FiniteDomain& target) {
  require_shared_points(hypotheses, source, target);
  double best = 0.0;
  const auto& hs = hypotheses.members();
  for (std::size_t i = 0; i < hs.size(); ++i) {
    for (std::size_t j = i + 1; j < hs.size(); ++j) {
      const double gap = std::abs(disagreement(hs[i], hs[j], source.probs()) -
                                  disagreement(hs[i], hs[j], target.probs()));
      best = std::max(best, gap);
    }
  }
  return 2.0 * best;
}

FiniteDomain combine_domains(const FiniteDomain& source, const FiniteDomain& target) {
  require_same_size(source.size(), target.size(), "combine_domains");
  std::vector<double> probs(source.size());
  std::vector<double> labels(source.size());
  for (std::size_t x = 0; x < source.size(); ++x) {
    probs[x] = 0.5 * (source.probs()[x] + target.probs()[x]);
    labels[x] = 0.5 * (source.labels()[x] + target.labels()[x]);
  }
  return FiniteDomain(std::move(probs), std::move(labels));
}

IdealJoint ideal_joint_lambda(const HypothesisClass& hypotheses, const FiniteDomain& source,
                              const FiniteDomain& target) {
  require_shared_points(hypotheses, source, target);
  IdealJoint best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const double joint = expected_error(hypotheses[i], source.labels(), source) +
                         expected_error(hypotheses[i], target.labels(), target);
    if (joint < best.lambda) best = {i, joint};
  }
  return best;
}

BoundReport check_theorem1(std::size_t h_index, const HypothesisClass& hypotheses,
                           const FiniteDomain& source, const FiniteDomain& target) {
  require_shared_points(hypotheses, source, target);
  const auto& h = hypotheses[h_index];
  return make_report(expected_error(h, target.labels(), target),
                     {{"source_error", expected_error(h, source.labels(), source)},
                      {"hdh", 0.5 * hdh_distance(hypotheses, source, target)},
                      {"joint", ideal_joint_lambda(hypotheses, source, target).lambda}});
}

BoundReport check_theorem2(std::size_t h_index, const HypothesisClass& hypotheses,
                           const FiniteDomain& source, const FiniteDomain& target) {
  require_shared_points(hypotheses, source, target);
  const auto& h = hypotheses[h_index];
  const FiniteDomain combined = combine_domains(source, target);
  return make_report(expected_error(h, target.labels(), target),
                     {{"source_error", expected_error(h, source.labels(), source)},
                      {"hdh", 0.25 * hdh_distance(hypotheses, source, target)},
                      {"joint", 2.0 * expected_error(h, combined.labels(), combined)}});
}

BoundReport check_theorem3(std::size_t h_index, const HypothesisClass& hypotheses,
                           const FiniteDomain& source, const FiniteDomain& target,
                           std::span<const double> pseudo_labels) {
  require_shared_points(hypotheses, source, target);
  require_same_size(pseudo_labels.size(), target.size(), "pseudo-label length");
  require_unit_interval(pseudo_labels, "pseudo-labels");
  const auto& h = hypotheses[h_index];
  const FiniteDomain pseudo_target(std::vector<double>(target.probs().begin(), target.probs().end()),
                                   std::vector<double>(pseudo_labels.begin(), pseudo_labels.end()));
  const FiniteDomain combined = combine_domains(source, pseudo_target);
  return make_report(expected_error(h, target.labels(), target),
                     {{"source_error", expected_error(h, source.labels(), source)},
                      {"hdh", 0.25 * hdh_distance(hypotheses, source, target)},
                      {"joint", 2.0 * expected_error(h, combined.labels(), combined)},
                      {"pseudo", expected_error(target.labels(), pseudo_labels, target)}});
}

LemmaCheck check_lemma_triangle(std::span<const double> h, std::span<const double> h_prime,
                                std::span<const double> h_mid, const FiniteDomain& domain) {
  const double lhs = expected_error(h, h_prime, domain);
  const double rhs = expected_error(h, h_mid, domain) + expected_error(h_mid, h_prime, domain);
  const double slack = rhs - lhs;
  return {slack >= -kTolerance, slack};
}

LemmaCheck check_lemma_hdh(std::span<const double> h, std::span<const double> h_prime,
                           const HypothesisClass& hypotheses, const FiniteDomain& source,
                           const FiniteDomain& target) {
  require_shared_points(hypotheses, source, target);
  if (!hypotheses.find(h) || !hypotheses.find(h_prime)) {
    throw ContractError("check_lemma_hdh: hypothesis is not a member of H");
  }
  const double lhs =
      std::abs(expected_error(h, h_prime, source) - expected_error(h, h_prime, target));
  const double slack = 0.5 * hdh_distance(hypotheses, source, target) - lhs;
  return {slack >= -kTolerance, slack};
}

BoundInstance random_instance(Rng& rng, const InstanceOptions& options) {
  if (options.max_points < 1 || options.max_hypotheses < 3 || options.grid_steps < 1) {
    throw ContractError("random_instance: need max_points >= 1, max_hypotheses >= 3, grid_steps >= 1");
  }
  std::uniform_int_distribution<std::size_t> point_count(1, options.max_points);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = point_count(rng);

  bool binary = options.mode == ValueMode::binary;
  if (options.mode == ValueMode::mixed) binary = unit(rng) < 0.5;
  std::uniform_int_distribution<int> grid_value(0, binary ? 1 : options.grid_steps);
  const double grid_scale = binary ? 1.0 : 1.0 / options.grid_steps;
  auto draw_function = [&] {
    std::vector<double> v(n);
    for (auto& x : v) x = grid_value(rng) * grid_scale;
    return v;
  };
  // Random weights with occasional holes so disjoint supports show up.
  auto draw_probs = [&] {
    std::vector<double> w(n);
    double total = 0.0;
    for (auto& x : w) {
      x = unit(rng) < 0.3 ? 0.0 : unit(rng);
      total += x;
    }
    if (total <= 0.0) {
      w[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 1.0;
      total = 1.0;
    }
    for (auto& x : w) x /= total;
    return w;
  };

  auto probs_s = draw_probs();
  auto probs_t = draw_probs();
  auto f_s = draw_function();
  auto f_t = draw_function();
  auto f_hat = draw_function();

  std::uniform_int_distribution<std::size_t> extra_count(0, options.max_hypotheses - 3);
  std::vector<Hypothesis> members;
  const std::size_t extra = extra_count(rng);
  for (std::size_t i = 0; i < extra; ++i) members.push_back(draw_function());
  members.push_back(f_s);
  members.push_back(f_t);
  members.push_back(f_hat);
  std::shuffle(members.begin(), members.end(), rng);

  return BoundInstance{FiniteDomain(std::move(probs_s), std::move(f_s)),
                       FiniteDomain(std::move(probs_t), std::move(f_t)),
                       HypothesisClass(std::move(members)), std::move(f_hat)};
}

std::vector<BoundRow> verify_instance(std::size_t instance_id, const BoundInstance& instance,
                                      std::span<const std::size_t> h_indices, Rng& rng) {
  const auto& hs = instance.hypotheses;
  std::vector<BoundRow> rows;
  auto push_report = [&](const char* check, std::size_t h_index, const BoundReport& r) {
    rows.push_back({instance_id, check, h_index, r.lhs, r.term("source_error"), r.term("hdh"),
                    r.term("joint"), r.term("pseudo"), r.rhs_total, r.slack, r.holds});
  };
  auto push_lemma = [&](const char* check, std::size_t h_index, double lhs, const LemmaCheck& c) {
    BoundRow row;
    row.instance_id = instance_id;
    row.check = check;
    row.h_index = h_index;
    row.lhs = lhs;
    row.rhs_total = lhs + c.slack;
    row.slack = c.slack;
    row.holds = c.holds;
    rows.push_back(row);
  };

  const FiniteDomain combined = combine_domains(instance.source, instance.target);
  std::uniform_int_distribution<std::size_t> pick(0, hs.size() - 1);
  for (std::size_t h_index : h_indices) {
    push_report("theorem1", h_index, check_theorem1(h_index, hs, instance.source, instance.target));
    push_report("theorem2", h_index, check_theorem2(h_index, hs, instance.source, instance.target));
    if (instance.pseudo_labels) {
      push_report("theorem3", h_index,
                  check_theorem3(h_index, hs, instance.source, instance.target,
                                 *instance.pseudo_labels));
    }

    const auto& h = hs[h_index];
    const auto& h_prime = hs[pick(rng)];
    const auto& h_mid = hs[pick(rng)];
    const FiniteDomain* domains[] = {&instance.source, &instance.target, &combined};
    const FiniteDomain& d = *domains[std::uniform_int_distribution<int>(0, 2)(rng)];
    push_lemma("lemma1", h_index, expected_error(h, h_prime, d),
               check_lemma_triangle(h, h_prime, h_mid, d));

    const auto& h_other = hs[pick(rng)];
    push_lemma("lemma2", h_index,
               std::abs(expected_error(h, h_other, instance.source) -
                        expected_error(h, h_other, instance.target)),
               check_lemma_hdh(h, h_other, hs, instance.source, instance.target));
  }
  return rows;
}

BoundSuiteResult run_bound_suite(const BoundSuiteOptions& options) {
  std::vector<std::vector<BoundRow>> per_instance(options.instances);
  parallel_for(options.instances, options.threads, [&](std::size_t i) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(i)));
    const BoundInstance instance = random_instance(rng, options.generator);
    std::uniform_int_distribution<std::size_t> pick(0, instance.hypotheses.size() - 1);
    std::vector<std::size_t> h_indices(options.hypotheses_per_instance);
    for (auto& h : h_indices) h = pick(rng);
    per_instance[i] = verify_instance(i, instance, h_indices, rng);
  });

  BoundSuiteResult result;
  result.min_slack = std::numeric_limits<double>::infinity();
  for (auto& rows : per_instance) {
    for (auto& row : rows) {
      if (!row.holds) ++result.violations;
      result.min_slack = std::min(result.min_slack, row.slack);
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

void write_bound_csv(std::ostream& out, std::span<const BoundRow> rows) {
  out << "instance_id,check,h_index,lhs,source_error,hdh_term,joint_term,pseudo_term,rhs_total,"
         "slack,holds\n";
  for (const auto& r : rows) {
    out << r.instance_id << ',' << r.check << ',' << r.h_index << ',' << csv::num(r.lhs) << ','
        << csv::num(r.source_error) << ',' << csv::num(r.hdh_term) << ','
        << csv::num(r.joint_term) << ',' << csv::num(r.pseudo_term) << ','
        << csv::num(r.rhs_total) << ',' << csv::num(r.slack) << ',' << csv::flag(r.holds) << '\n';
  }
}

}  // namespace jcl::theory
