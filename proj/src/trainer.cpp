#include "jcl/trainer.hpp"

#include "jcl/csv.hpp"
#include "jcl/errors.hpp"
#include "jcl/infotheory.hpp"
#include "jcl/moco.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace jcl::trainer {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::size_t> sample_rows(std::size_t n, int count, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> rows(static_cast<std::size_t>(count));
  for (auto& r : rows) r = pick(rng);
  return rows;
}

std::vector<int> gather(std::span<const int> values, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(values[r]);
  return out;
}

Matrix embed(const nn::MlpState& state, const Matrix& x, nn::Domain domain) {
  return nn::run_forward(state, x, domain, nn::Mode::eval).z;
}

// Normalized per-class mean of the source features.
Matrix class_centroids(const Matrix& z, std::span<const int> labels, int num_classes) {
  Matrix c = Matrix::Zero(num_classes, z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) c.row(labels[static_cast<std::size_t>(i)]) += z.row(i);
  for (Eigen::Index k = 0; k < c.rows(); ++k) {
    const double norm = c.row(k).norm();
    if (!(norm > 1e-12)) throw ContractError("class " + std::to_string(k) + " has a zero feature centroid");
    c.row(k) /= norm;
  }
  return c;
}

void require_uniform(std::span<const int> labels, int num_classes, const char* what) {
  const auto hist = data::label_histogram(labels, num_classes);
  if (std::adjacent_find(hist.begin(), hist.end(), std::not_equal_to<>()) != hist.end()) {
    throw std::logic_error(std::string(what) + ": rebalanced histogram is not uniform");
  }
}

struct EpochPlan {
  data::DomainDataset source;   // rebalanced
  data::DomainDataset certain;  // rebalanced, labels are pseudo-labels; empty when skipped
  std::vector<std::size_t> uncertain;
  std::vector<int> pseudo;       // per target row, -1 when uncertain
  std::vector<bool> certain_mask;
  Matrix centers;
};

EpochPlan plan_epoch(const TrainConfig& cfg, const nn::MlpState& query, const data::DomainDataset& source,
                     const data::DomainDataset& target, const Matrix* previous_centers, bool joint,
                     Rng& source_rng, Rng& target_rng) {
  const int classes = cfg.arch.num_classes;
  EpochPlan plan;
  plan.source = cluster::rebalance_classes(source, classes, source_rng);
  require_uniform(plan.source.labels, classes, "source");
  if (!joint) return plan;

  const Matrix zs = embed(query, source.features, nn::Domain::source);
  const Matrix zt = embed(query, target.features, nn::Domain::target);
  const Matrix init = previous_centers ? *previous_centers : class_centroids(zs, source.labels, classes);
  const auto model = cluster::spherical_kmeans(zt, init);
  auto split = cluster::split_certain(model, cfg.d);

  plan.centers = model.centers;
  plan.pseudo.assign(target.size(), data::kUnlabeled);
  plan.certain_mask.assign(target.size(), false);
  for (std::size_t i = 0; i < split.certain.size(); ++i) {
    plan.pseudo[split.certain[i]] = split.pseudo_labels[i];
    plan.certain_mask[split.certain[i]] = true;
  }
  // A cluster with members but none certain contributes its closest member.
  for (int c = 0; c < classes; ++c) {
    if (std::find(split.pseudo_labels.begin(), split.pseudo_labels.end(), c) != split.pseudo_labels.end()) continue;
    std::size_t best = target.size();
    for (std::size_t i = 0; i < target.size(); ++i) {
      if (model.assignment[i] != c) continue;
      if (best == target.size() || model.dissimilarity[i] < model.dissimilarity[best]) best = i;
    }
    if (best == target.size()) continue;
    plan.pseudo[best] = c;
    plan.certain_mask[best] = true;
  }

  std::vector<std::size_t> certain_rows;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (plan.certain_mask[i]) {
      certain_rows.push_back(i);
    } else {
      plan.uncertain.push_back(i);
    }
  }
  const auto present = data::label_histogram(gather(plan.pseudo, certain_rows), classes);
  const bool all_present = std::none_of(present.begin(), present.end(), [](std::size_t n) { return n == 0; });
  if (all_present) {
    data::DomainDataset certain = data::subset(target, certain_rows);
    certain.labels = gather(plan.pseudo, certain_rows);
    plan.certain = cluster::rebalance_classes(certain, classes, target_rng);
    require_uniform(plan.certain.labels, classes, "certain target");
  }
  return plan;
}

double infonce_probe(const TrainConfig& cfg, const moco::MomentumPair& nets, const data::DomainDataset& source,
                     Rng& rng) {
  const int k = std::min<int>(cfg.infonce_samples, static_cast<int>(source.size()));
  const auto rows = sample_rows(source.size(), k, rng);
  const auto views = data::augment(take_rows(source.features, rows), cfg.augment_scale * cfg.task.radius, rng);
  const Matrix q = nn::run_forward(nets.query(), views.first, nn::Domain::source, nn::Mode::eval).w;
  const Matrix key = nn::run_forward(nets.key(), views.second, nn::Domain::source, nn::Mode::eval).w;
  return info::infonce_estimate(Matrix(q * key.transpose() / cfg.tau));
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void TrainConfig::validate() const {
  task.validate();
  arch.validate();
  if (arch.input_dim != task.input_dim) throw ConfigError("arch.input_dim must match task.input_dim");
  if (arch.num_classes != task.num_classes) throw ConfigError("arch.num_classes must match task.num_classes");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(d >= 0.0 && d <= 2.0)) throw ConfigError("d must lie in [0,2]");
  if (queue_capacity == 0) throw ConfigError("queue_capacity must be positive");
  if (!(key_momentum >= 0.0 && key_momentum < 1.0)) throw ConfigError("key_momentum must lie in [0,1)");
  if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0)) throw ConfigError("sgd_momentum must lie in [0,1)");
  if (!(eta0 > 0.0) || alpha < 0.0 || beta < 0.0) throw ConfigError("bad learning-rate schedule");
  if (batch_source < 1 || batch_certain < 1 || batch_uncertain < 1) throw ConfigError("batch sizes must be positive");
  if (static_cast<std::size_t>(batch_source + batch_certain) > queue_capacity) {
    throw ConfigError("source and certain batches together must fit in queue_capacity");
  }
  if (epochs < 1 || iterations_per_epoch < 1) throw ConfigError("epochs and iterations_per_epoch must be positive");
  if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be non-negative");
  if (augment_scale < 0.0) throw ConfigError("augment_scale must be non-negative");
  if (infonce_samples < 1) throw ConfigError("infonce_samples must be positive");
  if (gamma > 0.0 && warmup_epochs < epochs) {
    const auto warmup_keys = static_cast<std::size_t>(warmup_epochs) * static_cast<std::size_t>(iterations_per_epoch) *
                             static_cast<std::size_t>(batch_source + batch_certain);
    if (warmup_keys < queue_capacity) {
      throw ConfigError("warm-up enqueues at most " + std::to_string(warmup_keys) + " keys, fewer than queue_capacity");
    }
  }
}

void refresh_statistics(nn::MlpState& state, const Matrix& batch, nn::Domain domain) {
  nn::forward(state, batch, domain, nn::Mode::train);
}

double linear_probe(const Matrix& features, std::span<const int> labels, int num_classes, std::uint64_t seed,
                    const ProbeOptions& options) {
  require_same_size(static_cast<std::size_t>(features.rows()), labels.size(), "linear_probe labels");
  if (features.rows() == 0) throw ContractError("linear_probe: no samples");
  const auto hist = data::label_histogram(labels, num_classes);
  if (std::count_if(hist.begin(), hist.end(), [](std::size_t n) { return n > 0; }) < 2) {
    throw ContractError("linear_probe: need at least two classes");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw ContractError("linear_probe: label out of range");
  }

  const Eigen::Index dim = features.cols();
  Matrix weight = Matrix::Zero(num_classes, dim);
  Vector bias = Vector::Zero(num_classes);
  Matrix vw = weight;
  Vector vb = bias;
  Rng rng(derive_seed(seed, "probe"));
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(options.batch));
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Matrix x = take_rows(features, rows);
      const auto y = gather(labels, rows);
      Matrix logits = x * weight.transpose();
      logits.rowwise() += bias.transpose();
      const auto loss = nn::cross_entropy_loss(logits, y);
      vw = options.momentum * vw + loss.grad.transpose() * x;
      vb = options.momentum * vb + loss.grad.colwise().sum().transpose();
      weight -= options.lr * vw;
      bias -= options.lr * vb;
    }
  }
  Matrix logits = features * weight.transpose();
  logits.rowwise() += bias.transpose();
  const auto pred = nn::predict(logits);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != labels[i];
  return static_cast<double>(wrong) / static_cast<double>(pred.size());
}

TrainResult run_training(const TrainConfig& cfg, const data::DomainDataset& source,
                         const data::DomainDataset& target, const data::Evaluator& evaluator, bool joint) {
  cfg.validate();
  source.validate(cfg.arch.num_classes);
  target.validate(cfg.arch.num_classes);
  if (source.size() == 0 || target.size() == 0) throw ContractError("training needs both domains");

  const double gamma = joint ? cfg.gamma : 0.0;
  // A plain source-only model has never seen target data, so it normalizes the
  // target with the source statistics.
  const nn::Domain target_domain =
      joint || cfg.baseline_target_stats ? nn::Domain::target : nn::Domain::source;
  const double sigma = cfg.augment_scale * cfg.task.radius;
  Rng init_rng = make_rng(cfg.seed, "init");
  Rng source_rng = make_rng(cfg.seed, "sample_source");
  Rng target_rng = make_rng(cfg.seed, "sample_target");
  Rng aug_source_rng = make_rng(cfg.seed, "augment_source");
  Rng aug_target_rng = make_rng(cfg.seed, "augment_target");
  Rng rebalance_source_rng = make_rng(cfg.seed, "rebalance_source");
  Rng rebalance_target_rng = make_rng(cfg.seed, "rebalance_target");
  Rng eval_rng = make_rng(cfg.seed, "eval");

  moco::MomentumPair nets(nn::init_state(cfg.arch, init_rng), cfg.key_momentum);
  moco::KeyQueue queue(cfg.queue_capacity, cfg.arch.projection_dim);
  nn::OptimizerState opt =
      nn::make_optimizer(nets.query().params, cfg.sgd_momentum, cfg.eta0, cfg.alpha, cfg.beta);

  TrainResult result;
  Matrix centers;
  EpochPlan plan;
  const int total = cfg.max_iterations();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const bool reuse = cfg.warm_start_clusters && centers.size() > 0;
    plan = plan_epoch(cfg, nets.query(), source, target, reuse ? &centers : nullptr, joint,
                      rebalance_source_rng, rebalance_target_rng);
    centers = plan.centers;
    const bool has_certain = plan.certain.size() > 0;
    const bool contrastive = joint && epoch >= cfg.warmup_epochs && gamma > 0.0;

    for (int it = 0; it < cfg.iterations_per_epoch; ++it) {
      const int iteration = epoch * cfg.iterations_per_epoch + it;
      opt.progress = static_cast<double>(iteration) / static_cast<double>(total);
      MetricsRecord rec;
      rec.iteration = iteration;
      rec.epoch = epoch;
      rec.lr = opt.learning_rate();
      rec.target_accuracy = rec.pseudo_label_accuracy = rec.certain_fraction = kNaN;
      rec.infonce = rec.probe_error = kNaN;

      // Source stream: classification on the query view.
      const auto src_rows = sample_rows(plan.source.size(), cfg.batch_source, source_rng);
      const auto src_views = data::augment(take_rows(plan.source.features, src_rows), sigma, aug_source_rng);
      const auto src_labels = gather(plan.source.labels, src_rows);
      const auto cache_s = nn::run_forward(nets.query(), src_views.first, nn::Domain::source, nn::Mode::train);
      nn::commit_batch_stats(nets.query(), cache_s);
      const auto ce = nn::cross_entropy_loss(cache_s.logits, src_labels);
      rec.loss_s = ce.loss;

      if (!joint) {
        if (cfg.baseline_target_stats) {
          const auto rows = sample_rows(target.size(), cfg.batch_uncertain, target_rng);
          refresh_statistics(nets.query(), take_rows(target.features, rows), nn::Domain::target);
        }
        if (!finite(rec.loss_s)) {
          result.metrics.push_back(rec);
          result.abort_reason = "non-finite source loss at iteration " + std::to_string(iteration);
          return result;
        }
        nn::GradientSet grads = nn::backward(nets.query(), cache_s, {{}, {}, ce.grad});
        nn::sgd_step(nets.query().params, grads, opt);
        result.metrics.push_back(rec);
        continue;
      }

      // Certain target stream with pseudo-labels, plus key views for both streams.
      std::optional<nn::ForwardCache> cache_c;
      std::vector<int> cert_labels;
      const auto key_cache_s = nn::run_forward(nets.key(), src_views.second, nn::Domain::source, nn::Mode::train);
      nn::commit_batch_stats(nets.key(), key_cache_s);
      const Matrix& keys_s = key_cache_s.w;
      Matrix keys_c;
      if (has_certain) {
        const auto rows = sample_rows(plan.certain.size(), cfg.batch_certain, target_rng);
        const auto views = data::augment(take_rows(plan.certain.features, rows), sigma, aug_target_rng);
        cert_labels = gather(plan.certain.labels, rows);
        cache_c = nn::run_forward(nets.query(), views.first, nn::Domain::target, nn::Mode::train);
        nn::commit_batch_stats(nets.query(), *cache_c);
        const auto key_cache = nn::run_forward(nets.key(), views.second, nn::Domain::target, nn::Mode::train);
        nn::commit_batch_stats(nets.key(), key_cache);
        keys_c = key_cache.w;
      }
      // Uncertain target rows only refresh the target statistics.
      if (!plan.uncertain.empty()) {
        const auto picks = sample_rows(plan.uncertain.size(), cfg.batch_uncertain, target_rng);
        std::vector<std::size_t> rows;
        for (std::size_t p : picks) rows.push_back(plan.uncertain[p]);
        refresh_statistics(nets.query(), take_rows(target.features, rows), nn::Domain::target);
      }

      const Eigen::Index ns = keys_s.rows();
      const Eigen::Index nc = keys_c.rows();
      Matrix all_keys(ns + nc, keys_s.cols());
      all_keys << keys_s, keys_c;
      std::vector<int> all_labels = src_labels;
      all_labels.insert(all_labels.end(), cert_labels.begin(), cert_labels.end());

      if (cfg.enqueue_before_loss) queue.enqueue_batch(all_keys, all_labels);

      Matrix dw_s, dw_c;
      if (contrastive) {
        if (!queue.full()) {
          throw std::logic_error("key queue holds " + std::to_string(queue.size()) + " of " +
                                 std::to_string(queue.capacity()) + " keys after warm-up");
        }
        Matrix queries(ns + nc, keys_s.cols());
        if (cache_c) {
          queries << cache_s.w, cache_c->w;
        } else {
          queries << cache_s.w;
        }
        const Matrix keys = queue.key_matrix();
        const auto key_labels = queue.label_vector();
        const auto lc = nn::contrastive_loss(queries, all_labels, keys, key_labels, cfg.tau,
                                             cfg.enqueue_before_loss ? nullptr : &all_keys);
        rec.loss_c = lc.loss;
        rec.contrastive = true;
        dw_s = gamma * lc.grad.topRows(ns);
        if (cache_c) dw_c = gamma * lc.grad.bottomRows(nc);
      }

      if (!cfg.enqueue_before_loss) queue.enqueue_batch(all_keys, all_labels);

      if (!finite(rec.loss_s) || !finite(rec.loss_c)) {
        result.metrics.push_back(rec);
        result.abort_reason = "non-finite loss at iteration " + std::to_string(iteration);
        return result;
      }

      nn::GradientSet grads = nn::backward(nets.query(), cache_s, {{}, dw_s, ce.grad});
      if (cache_c && rec.contrastive) nn::axpy(grads, nn::backward(nets.query(), *cache_c, {{}, dw_c, {}}));
      nn::sgd_step(nets.query().params, grads, opt);
      nets.update();
      result.metrics.push_back(rec);
    }

    // End-of-epoch evaluation.
    MetricsRecord& last = result.metrics.back();
    last.target_accuracy = evaluator.accuracy(
        nn::predict(nn::run_forward(nets.query(), target.features, target_domain, nn::Mode::eval).logits));
    if (joint) {
      last.pseudo_label_accuracy = evaluator.masked_accuracy(plan.pseudo, plan.certain_mask);
      last.certain_fraction =
          static_cast<double>(std::count(plan.certain_mask.begin(), plan.certain_mask.end(), true)) /
          static_cast<double>(target.size());
      last.infonce = infonce_probe(cfg, nets, source, eval_rng);
    }
  }

  const auto src_fwd = nn::run_forward(nets.query(), source.features, nn::Domain::source, nn::Mode::eval);
  const auto tgt_fwd = nn::run_forward(nets.query(), target.features, target_domain, nn::Mode::eval);
  const auto src_pred = nn::predict(src_fwd.logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < src_pred.size(); ++i) hits += src_pred[i] == source.labels[i];
  result.source_accuracy = static_cast<double>(hits) / static_cast<double>(source.size());
  result.target_accuracy = evaluator.accuracy(nn::predict(tgt_fwd.logits));

  // Probe on both domains with true labels; only the evaluator supplies the target ones.
  const auto labelled = evaluator.labelled(target);
  Matrix joint_z(src_fwd.z.rows() + tgt_fwd.z.rows(), src_fwd.z.cols());
  joint_z << src_fwd.z, tgt_fwd.z;
  std::vector<int> joint_labels = source.labels;
  joint_labels.insert(joint_labels.end(), labelled.labels.begin(), labelled.labels.end());
  result.probe_error = linear_probe(joint_z, joint_labels, cfg.arch.num_classes, cfg.seed);
  result.metrics.back().probe_error = result.probe_error;

  result.source_z = src_fwd.z;
  result.target_z = tgt_fwd.z;
  result.target_pseudo_labels = joint ? plan.pseudo : std::vector<int>(target.size(), data::kUnlabeled);
  result.state = nets.query();
  return result;
}

TrainResult train_jcl(const TrainConfig& cfg) {
  cfg.validate();
  auto pair = data::gen_synthetic_pair(cfg.task);
  const data::Evaluator evaluator(std::move(pair.truth));
  return run_training(cfg, pair.source, pair.target, evaluator, true);
}

TrainResult train_source_only(const TrainConfig& cfg) {
  cfg.validate();
  auto pair = data::gen_synthetic_pair(cfg.task);
  const data::Evaluator evaluator(std::move(pair.truth));
  return run_training(cfg, pair.source, pair.target, evaluator, false);
}

SweepResult gamma_sweep(const TrainConfig& cfg, std::span<const double> gammas) {
  if (gammas.empty()) throw ContractError("gamma_sweep: no gamma values");
  SweepResult sweep;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double g : gammas) {
    if (!(g >= 0.0)) throw ContractError("gamma_sweep: gamma must be non-negative");
    TrainConfig run = cfg;
    run.gamma = g;
    sweep.runs.push_back(train_jcl(run));
    const auto& r = sweep.runs.back();
    sweep.rows.push_back({g, r.target_accuracy, r.probe_error});
    lo = std::min(lo, r.target_accuracy);
    hi = std::max(hi, r.target_accuracy);
  }
  sweep.sensitivity = hi - lo;
  return sweep;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> rows) {
  out << "iteration,epoch,loss_s,loss_c,lr,contrastive,target_accuracy,pseudo_label_accuracy,"
         "certain_fraction,infonce,probe_error\n";
  for (const auto& r : rows) {
    out << r.iteration << ',' << r.epoch << ',' << csv::num(r.loss_s) << ',' << csv::num(r.loss_c) << ','
        << csv::num(r.lr) << ',' << csv::flag(r.contrastive) << ',' << csv::num(r.target_accuracy) << ','
        << csv::num(r.pseudo_label_accuracy) << ',' << csv::num(r.certain_fraction) << ','
        << csv::num(r.infonce) << ',' << csv::num(r.probe_error) << '\n';
  }
}

void write_sweep_csv(std::ostream& out, const SweepResult& sweep) {
  out << "gamma,target_accuracy,probe_error\n";
  for (const auto& r : sweep.rows) {
    out << csv::num(r.gamma) << ',' << csv::num(r.target_accuracy) << ',' << csv::num(r.probe_error) << '\n';
  }
}

void write_features_csv(std::ostream& out, const TrainConfig& cfg, const TrainResult& result) {
  auto pair = data::gen_synthetic_pair(cfg.task);
  const data::Evaluator evaluator(std::move(pair.truth));
  const auto target = evaluator.labelled(pair.target);
  require_same_size(static_cast<std::size_t>(result.source_z.rows()), pair.source.size(), "features source");
  require_same_size(static_cast<std::size_t>(result.target_z.rows()), target.size(), "features target");

  for (int j = 0; j < cfg.task.input_dim; ++j) out << 'x' << (j + 1) << ',';
  for (Eigen::Index j = 0; j < result.source_z.cols(); ++j) out << 'z' << (j + 1) << ',';
  out << "label,pseudo_label,domain\n";
  auto emit = [&](const data::DomainDataset& ds, const Matrix& z, std::span<const int> pseudo) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      for (Eigen::Index j = 0; j < ds.features.cols(); ++j) out << csv::num(ds.features(r, j)) << ',';
      for (Eigen::Index j = 0; j < z.cols(); ++j) out << csv::num(z(r, j)) << ',';
      out << ds.labels[i] << ',' << (pseudo.empty() ? data::kUnlabeled : pseudo[i]) << ','
          << nn::domain_name(ds.domain) << '\n';
    }
  };
  emit(pair.source, result.source_z, {});
  emit(target, result.target_z, result.target_pseudo_labels);
}

}  // namespace jcl::trainer
