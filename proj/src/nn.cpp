#include "jcl/nn.hpp"

#include "jcl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace jcl::nn {
namespace {

Matrix affine(const Matrix& input, const Dense& layer) {
  Matrix out = input * layer.weight.transpose();
  out.rowwise() += layer.bias.transpose();
  return out;
}

// Gradient of x / |x| row-wise: (g - y (y . g)) / |x|. A zero row has no
// direction and passes no gradient.
Matrix normalize_backward(const Matrix& y, const Vector& norms, const Matrix& grad) {
  Matrix out = grad;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    if (norms(i) == 0.0) {
      out.row(i).setZero();
      continue;
    }
    const double along = y.row(i).dot(grad.row(i));
    out.row(i) = (grad.row(i) - along * y.row(i)) / norms(i);
  }
  return out;
}

void dense_backward(const Matrix& input, const Matrix& dout, Dense& grad) {
  grad.weight.noalias() += dout.transpose() * input;
  grad.bias += dout.colwise().sum().transpose();
}

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }
double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

Dense init_dense(int out, int in, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Dense d{Matrix(out, in), Vector::Zero(out)};
  for (Eigen::Index i = 0; i < d.weight.size(); ++i) d.weight.data()[i] = normal(rng);
  return d;
}

void require_width(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.size() == 0) return;
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
}

}  // namespace

const char* domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ContractError("unknown activation '" + name + "'");
}

const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

void Architecture::validate() const {
  if (input_dim < 1 || feature_dim < 1 || projection_dim < 1 || num_classes < 1) {
    throw ContractError("Architecture: all widths must be positive");
  }
  for (int h : hidden) {
    if (h < 1) throw ContractError("Architecture: hidden widths must be positive");
  }
}

std::size_t parameter_count(const MlpParams& params) {
  std::size_t n = 0;
  for_each_tensor(params, [&](const std::string&, auto s) { n += s.size(); });
  return n;
}

std::uint64_t parameter_hash(const MlpParams& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for_each_tensor(params, [&](const std::string&, auto s) { h = hash_values(s, h); });
  return h;
}

std::uint64_t stats_hash(const MlpState& state, Domain d) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& s : state.stats_for(d)) {
    h = hash_values({s.mean.data(), static_cast<std::size_t>(s.mean.size())}, h);
    h = hash_values({s.var.data(), static_cast<std::size_t>(s.var.size())}, h);
  }
  return h;
}

MlpState init_state(const Architecture& arch, Rng& rng) {
  arch.validate();
  MlpState state;
  state.arch = arch;
  int in = arch.input_dim;
  for (int width : arch.hidden) {
    state.params.hidden.push_back(init_dense(width, in, std::sqrt(2.0 / in), rng));
    state.params.norm.push_back({Vector::Ones(width), Vector::Zero(width)});
    for (auto& per_domain : state.stats) per_domain.push_back({Vector::Zero(width), Vector::Ones(width)});
    in = width;
  }
  state.params.feature = init_dense(arch.feature_dim, in, std::sqrt(1.0 / in), rng);
  state.params.projection =
      init_dense(arch.projection_dim, arch.feature_dim, std::sqrt(1.0 / arch.feature_dim), rng);
  state.params.classifier =
      init_dense(arch.num_classes, arch.feature_dim, std::sqrt(1.0 / arch.feature_dim), rng);
  return state;
}

GradientSet zeros_like(const MlpParams& params) {
  GradientSet g = params;
  for_each_tensor(g, [](const std::string&, std::span<double> s) { std::fill(s.begin(), s.end(), 0.0); });
  return g;
}

void check_congruent(const MlpParams& a, const MlpParams& b) {
  std::vector<std::size_t> sizes;
  for_each_tensor(a, [&](const std::string&, auto s) { sizes.push_back(s.size()); });
  std::size_t i = 0;
  bool ok = a.hidden.size() == b.hidden.size() && a.norm.size() == b.norm.size();
  if (ok) {
    for_each_tensor(b, [&](const std::string&, auto s) {
      if (i >= sizes.size() || sizes[i] != s.size()) ok = false;
      ++i;
    });
  }
  if (!ok || i != sizes.size()) throw DimensionError("parameter sets are not shape-congruent");
  auto same_shape = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols();
  };
  for (std::size_t l = 0; l < a.hidden.size(); ++l) {
    if (!same_shape(a.hidden[l].weight, b.hidden[l].weight)) {
      throw DimensionError("parameter sets are not shape-congruent");
    }
  }
  if (!same_shape(a.feature.weight, b.feature.weight) ||
      !same_shape(a.projection.weight, b.projection.weight) ||
      !same_shape(a.classifier.weight, b.classifier.weight)) {
    throw DimensionError("parameter sets are not shape-congruent");
  }
}

void axpy(MlpParams& a, const MlpParams& b, double scale) {
  zip_tensors(a, b, [scale](std::span<double> x, std::span<const double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += scale * y[i];
  });
}

ForwardCache run_forward(const MlpState& state, const Matrix& batch, Domain domain, Mode mode) {
  if (batch.rows() == 0) throw ContractError("forward: empty batch");
  if (batch.cols() != state.arch.input_dim) {
    throw DimensionError("forward: input width " + std::to_string(batch.cols()) + " != " +
                         std::to_string(state.arch.input_dim));
  }
  ForwardCache cache;
  cache.domain = domain;
  cache.mode = mode;
  const auto& running = state.stats_for(domain);
  const double rows = static_cast<double>(batch.rows());

  Matrix current = batch;
  for (std::size_t l = 0; l < state.params.hidden.size(); ++l) {
    LayerCache layer;
    layer.input = std::move(current);
    Matrix pre = affine(layer.input, state.params.hidden[l]);
    if (mode == Mode::train) {
      layer.mean = pre.colwise().sum().transpose() / rows;
      pre.rowwise() -= layer.mean.transpose();
      layer.var = pre.array().square().colwise().sum().transpose() / rows;
    } else {
      layer.mean = running[l].mean;
      layer.var = running[l].var;
      pre.rowwise() -= layer.mean.transpose();
    }
    const RowVector inv_std = (layer.var.array() + kNormEpsilon).rsqrt().matrix().transpose();
    layer.normalized = pre.array().rowwise() * inv_std.array();
    const auto& norm = state.params.norm[l];
    Matrix act = (layer.normalized.array().rowwise() * norm.gamma.transpose().array()).matrix();
    act.rowwise() += norm.beta.transpose();
    if (state.arch.activation == Activation::relu) {
      act = act.cwiseMax(0.0);
    } else {
      act = act.array().tanh().matrix();
    }
    layer.activated = act;
    current = std::move(act);
    cache.layers.push_back(std::move(layer));
  }

  cache.encoder_input = std::move(current);
  cache.feature_raw = affine(cache.encoder_input, state.params.feature);
  cache.z = cache.feature_raw;
  cache.feature_norm = normalize_rows(cache.z);
  cache.projection_raw = affine(cache.z, state.params.projection);
  cache.w = cache.projection_raw;
  cache.projection_norm = normalize_rows(cache.w);
  cache.logits = affine(cache.z, state.params.classifier);
  return cache;
}

void commit_batch_stats(MlpState& state, const ForwardCache& cache) {
  if (cache.mode != Mode::train) return;
  auto& running = state.stats_for(cache.domain);
  if (running.size() != cache.layers.size()) throw DimensionError("commit_batch_stats: layer mismatch");
  for (std::size_t l = 0; l < running.size(); ++l) {
    running[l].mean = kStatsMomentum * running[l].mean + (1.0 - kStatsMomentum) * cache.layers[l].mean;
    running[l].var = kStatsMomentum * running[l].var + (1.0 - kStatsMomentum) * cache.layers[l].var;
  }
}

ForwardCache forward(MlpState& state, const Matrix& batch, Domain domain, Mode mode) {
  ForwardCache cache = run_forward(state, batch, domain, mode);
  commit_batch_stats(state, cache);
  return cache;
}

GradientSet backward(const MlpState& state, const ForwardCache& cache, const Upstream& upstream) {
  const auto& params = state.params;
  if (cache.layers.size() != params.hidden.size() || cache.z.cols() != state.arch.feature_dim) {
    throw DimensionError("backward: cache does not match state");
  }
  const Eigen::Index rows = cache.z.rows();
  require_width(upstream.dz, rows, cache.z.cols(), "backward dz");
  require_width(upstream.dw, rows, cache.w.cols(), "backward dw");
  require_width(upstream.dlogits, rows, cache.logits.cols(), "backward dlogits");

  GradientSet grads = zeros_like(params);
  Matrix dz = upstream.dz.size() ? upstream.dz : Matrix::Zero(rows, cache.z.cols());

  if (upstream.dlogits.size()) {
    dense_backward(cache.z, upstream.dlogits, grads.classifier);
    dz.noalias() += upstream.dlogits * params.classifier.weight;
  }
  if (upstream.dw.size()) {
    const Matrix dp = normalize_backward(cache.w, cache.projection_norm, upstream.dw);
    dense_backward(cache.z, dp, grads.projection);
    dz.noalias() += dp * params.projection.weight;
  }

  const Matrix dr = normalize_backward(cache.z, cache.feature_norm, dz);
  dense_backward(cache.encoder_input, dr, grads.feature);
  Matrix da = dr * params.feature.weight;

  const double n = static_cast<double>(rows);
  for (std::size_t l = params.hidden.size(); l-- > 0;) {
    const auto& layer = cache.layers[l];
    Matrix dv;
    if (state.arch.activation == Activation::relu) {
      dv = (layer.activated.array() > 0.0).select(da, 0.0);
    } else {
      dv = da.array() * (1.0 - layer.activated.array().square());
    }
    grads.norm[l].gamma = (dv.array() * layer.normalized.array()).colwise().sum().transpose();
    grads.norm[l].beta = dv.colwise().sum().transpose();

    const Matrix dn = dv.array().rowwise() * params.norm[l].gamma.transpose().array();
    const RowVector inv_std = (layer.var.array() + kNormEpsilon).rsqrt().matrix().transpose();
    Matrix du;
    if (cache.mode == Mode::train) {
      const RowVector mean_dn = dn.colwise().sum() / n;
      const RowVector mean_dn_n = (dn.array() * layer.normalized.array()).colwise().sum().matrix() / n;
      du = dn;
      du.rowwise() -= mean_dn;
      du -= (layer.normalized.array().rowwise() * mean_dn_n.array()).matrix();
      du = du.array().rowwise() * inv_std.array();
    } else {
      du = dn.array().rowwise() * inv_std.array();
    }
    dense_backward(layer.input, du, grads.hidden[l]);
    if (l > 0) da = du * params.hidden[l].weight;
  }
  return grads;
}

LossResult cross_entropy_loss(const Matrix& logits, std::span<const int> labels) {
  require_same_size(static_cast<std::size_t>(logits.rows()), labels.size(), "cross_entropy labels");
  if (logits.rows() == 0) throw ContractError("cross_entropy_loss: empty batch");
  const Eigen::Index classes = logits.cols();
  const double n = static_cast<double>(logits.rows());
  LossResult result;
  result.grad.resize(logits.rows(), classes);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= classes) throw ContractError("cross_entropy_loss: label out of range");
    const double peak = logits.row(i).maxCoeff();
    const RowVector e = (logits.row(i).array() - peak).exp().matrix();
    const double total = e.sum();
    result.loss += std::log(total) - (logits(i, y) - peak);
    result.grad.row(i) = e / total;
    result.grad(i, y) -= 1.0;
  }
  result.loss /= n;
  result.grad /= n;
  return result;
}

LossResult contrastive_loss(const Matrix& queries, std::span<const int> query_labels,
                            const Matrix& keys, std::span<const int> key_labels, double tau,
                            const Matrix* own_keys) {
  if (!(tau > 0.0)) throw ContractError("contrastive_loss: tau must be positive");
  require_same_size(static_cast<std::size_t>(queries.rows()), query_labels.size(), "contrastive query labels");
  require_same_size(static_cast<std::size_t>(keys.rows()), key_labels.size(), "contrastive key labels");
  if (queries.rows() == 0) throw ContractError("contrastive_loss: no queries");
  if (keys.rows() > 0 && keys.cols() != queries.cols()) throw DimensionError("contrastive_loss: key width");
  if (own_keys) {
    require_width(*own_keys, queries.rows(), queries.cols(), "contrastive own keys");
    if (own_keys->rows() != queries.rows()) throw DimensionError("contrastive_loss: own key count");
  }

  const Eigen::Index n = queries.rows();
  const Eigen::Index m = keys.rows();
  const Eigen::Index dim = queries.cols();
  const Matrix sims = m > 0 ? Matrix(queries * keys.transpose() / tau) : Matrix(n, 0);
  LossResult result;
  result.grad = Matrix::Zero(n, dim);

  std::vector<double> neg_weights(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = query_labels[static_cast<std::size_t>(i)];
    // Log-sum-exp over the negatives; -inf when there are none.
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
      if (key_labels[static_cast<std::size_t>(j)] != y) peak = std::max(peak, sims(i, j));
    }
    double neg_lse = peak;
    RowVector neg_mean = RowVector::Zero(dim);
    if (std::isfinite(peak)) {
      double total = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        const bool negative = key_labels[static_cast<std::size_t>(j)] != y;
        neg_weights[static_cast<std::size_t>(j)] = negative ? std::exp(sims(i, j) - peak) : 0.0;
        total += neg_weights[static_cast<std::size_t>(j)];
      }
      neg_lse = peak + std::log(total);
      for (Eigen::Index j = 0; j < m; ++j) {
        const double wj = neg_weights[static_cast<std::size_t>(j)];
        if (wj > 0.0) neg_mean += (wj / total) * keys.row(j);
      }
    }

    double loss_i = 0.0;
    double neg_coef = 0.0;
    std::size_t positives = 0;
    RowVector grad_i = RowVector::Zero(dim);
    auto add_positive = [&](double score, const auto& key) {
      const double t = neg_lse - score;
      loss_i += softplus(t);
      const double s = sigmoid(t);
      grad_i -= s * key;
      neg_coef += s;
      ++positives;
    };
    for (Eigen::Index j = 0; j < m; ++j) {
      if (key_labels[static_cast<std::size_t>(j)] == y) add_positive(sims(i, j), keys.row(j));
    }
    if (own_keys) add_positive(queries.row(i).dot(own_keys->row(i)) / tau, own_keys->row(i));
    if (positives == 0) {
      throw ContractError("contrastive_loss: query " + std::to_string(i) + " with label " +
                          std::to_string(y) + " has no positive key");
    }
    grad_i += neg_coef * neg_mean;
    const double p = static_cast<double>(positives);
    result.loss += loss_i / p;
    result.grad.row(i) = grad_i / (p * tau * static_cast<double>(n));
  }
  result.loss /= static_cast<double>(n);
  return result;
}

double lr_schedule(double progress, double eta0, double alpha, double beta) {
  if (!(progress >= 0.0 && progress <= 1.0)) throw ContractError("lr_schedule: progress outside [0,1]");
  if (!(eta0 > 0.0)) throw ContractError("lr_schedule: eta0 must be positive");
  return eta0 * std::pow(1.0 + alpha * progress, -beta);
}

OptimizerState make_optimizer(const MlpParams& params, double momentum, double eta0, double alpha,
                              double beta) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("optimizer momentum outside [0,1)");
  OptimizerState opt;
  opt.velocity = zeros_like(params);
  opt.momentum = momentum;
  opt.eta0 = eta0;
  opt.alpha = alpha;
  opt.beta = beta;
  return opt;
}

void sgd_step(MlpParams& params, const GradientSet& grads, OptimizerState& opt) {
  check_congruent(params, grads);
  check_congruent(params, opt.velocity);
  const double lr = opt.learning_rate();
  const double momentum = opt.momentum;
  zip_tensors(opt.velocity, grads, [momentum](std::span<double> v, std::span<const double> g) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = momentum * v[i] + g[i];
  });
  axpy(params, opt.velocity, -lr);
}

std::vector<int> predict(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace jcl::nn
