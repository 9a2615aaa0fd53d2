#pragma once

// Dense encoder with per-domain normalization, L2-normalized feature and
// projection outputs, a linear classification head, the two training losses
// and momentum SGD. Gradients are written out by hand.
//
// Network layout (widths from Architecture):
//
//   x -> [Linear -> DomainNorm -> act] * hidden -> Linear -> L2 = z   (encoder g)
//   z -> Linear -> L2 = w                                             (projection l)
//   z -> Linear = logits                                              (classifier h)

#include "jcl/linalg.hpp"
#include "jcl/rng.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace jcl::nn {

enum class Domain : int { source = 0, target = 1 };
inline constexpr std::size_t kDomainCount = 2;
const char* domain_name(Domain d);

enum class Mode { train, eval };

enum class Activation { relu, tanh };
Activation parse_activation(const std::string& name);
const char* activation_name(Activation a);

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kStatsMomentum = 0.9;

struct Architecture {
  int input_dim = 2;
  std::vector<int> hidden = {64, 64};
  int feature_dim = 16;
  int projection_dim = 8;
  int num_classes = 3;
  Activation activation = Activation::relu;

  void validate() const;
};

struct Dense {
  Matrix weight;  // out x in
  Vector bias;
};

struct Affine {
  Vector gamma;
  Vector beta;
};

struct RunningStats {
  Vector mean;
  Vector var;
};

struct MlpParams {
  std::vector<Dense> hidden;
  std::vector<Affine> norm;  // one per hidden layer
  Dense feature;
  Dense projection;
  Dense classifier;
};

// Gradients share the parameter layout.
using GradientSet = MlpParams;

struct MlpState {
  Architecture arch;
  MlpParams params;
  std::array<std::vector<RunningStats>, kDomainCount> stats;  // [domain][hidden layer]

  std::vector<RunningStats>& stats_for(Domain d) { return stats[static_cast<std::size_t>(d)]; }
  const std::vector<RunningStats>& stats_for(Domain d) const {
    return stats[static_cast<std::size_t>(d)];
  }
};

// Calls fn(name, span) for every parameter tensor in a fixed order. The span
// covers the tensor's storage, row-major for matrices.
template <typename Params, typename Fn>
void for_each_tensor(Params& params, Fn&& fn) {
  auto emit = [&](const std::string& name, auto& tensor) {
    fn(name, std::span(tensor.data(), static_cast<std::size_t>(tensor.size())));
  };
  for (std::size_t l = 0; l < params.hidden.size(); ++l) {
    const std::string prefix = "hidden." + std::to_string(l) + ".";
    emit(prefix + "weight", params.hidden[l].weight);
    emit(prefix + "bias", params.hidden[l].bias);
    emit(prefix + "gamma", params.norm[l].gamma);
    emit(prefix + "beta", params.norm[l].beta);
  }
  emit("feature.weight", params.feature.weight);
  emit("feature.bias", params.feature.bias);
  emit("projection.weight", params.projection.weight);
  emit("projection.bias", params.projection.bias);
  emit("classifier.weight", params.classifier.weight);
  emit("classifier.bias", params.classifier.bias);
}

// Calls fn(a_span, b_span) tensor by tensor. Throws DimensionError when the
// two parameter sets are not shape-congruent.
template <typename A, typename B, typename Fn>
void zip_tensors(A& a, B& b, Fn&& fn);

std::size_t parameter_count(const MlpParams& params);
std::uint64_t parameter_hash(const MlpParams& params);
std::uint64_t stats_hash(const MlpState& state, Domain d);

// He-initialized hidden layers, LeCun-initialized heads, unit running variances.
MlpState init_state(const Architecture& arch, Rng& rng);
GradientSet zeros_like(const MlpParams& params);
void check_congruent(const MlpParams& a, const MlpParams& b);

// a += scale * b
void axpy(MlpParams& a, const MlpParams& b, double scale = 1.0);

struct LayerCache {
  Matrix input;       // layer input
  Matrix normalized;  // after standardization, before the affine
  Matrix activated;   // after the activation
  Vector mean;        // statistics used for standardization
  Vector var;
};

struct ForwardCache {
  Domain domain = Domain::source;
  Mode mode = Mode::eval;
  std::vector<LayerCache> layers;
  Matrix encoder_input;  // last hidden activation (or x when there are no hidden layers)
  Matrix feature_raw;
  Vector feature_norm;
  Matrix z;
  Matrix projection_raw;
  Vector projection_norm;
  Matrix w;
  Matrix logits;
};

// Pure forward pass. Train mode standardizes with the batch statistics; eval
// mode with the running statistics of `domain`. A row whose raw feature is
// exactly zero (every unit dead) stays zero after normalization.
ForwardCache run_forward(const MlpState& state, const Matrix& batch, Domain domain, Mode mode);

// Folds the batch statistics of a train-mode pass into the running statistics
// of that pass's domain. Other domains are untouched.
void commit_batch_stats(MlpState& state, const ForwardCache& cache);

// run_forward followed by commit_batch_stats in train mode.
ForwardCache forward(MlpState& state, const Matrix& batch, Domain domain, Mode mode);

// Upstream gradients of a scalar objective. Empty matrices count as zero.
struct Upstream {
  Matrix dz;
  Matrix dw;
  Matrix dlogits;
};

GradientSet backward(const MlpState& state, const ForwardCache& cache, const Upstream& upstream);

struct LossResult {
  double loss = 0.0;
  Matrix grad;
};

// Mean of -log softmax(logits)[label]; gradient (softmax - onehot) / batch.
LossResult cross_entropy_loss(const Matrix& logits, std::span<const int> labels);

// Label-supervised InfoNCE against a key dictionary. For query q with label y,
// positives are the keys labelled y (plus row i of own_keys when given),
// negatives are all keys with another label, and
//
//   loss(q) = mean over positives k+ of
//             -log( e^{q.k+/tau} / (e^{q.k+/tau} + sum_{k-} e^{q.k-/tau}) ).
//
// Queries and keys are expected to be unit vectors, so q.k is the cosine
// similarity. The result averages over queries; grad is with respect to the
// query rows.
LossResult contrastive_loss(const Matrix& queries, std::span<const int> query_labels,
                            const Matrix& keys, std::span<const int> key_labels, double tau,
                            const Matrix* own_keys = nullptr);

// eta0 (1 + alpha p)^(-beta)
double lr_schedule(double progress, double eta0, double alpha, double beta);

struct OptimizerState {
  GradientSet velocity;
  double momentum = 0.9;
  double eta0 = 0.01;
  double alpha = 10.0;
  double beta = 0.75;
  double progress = 0.0;

  double learning_rate() const { return lr_schedule(progress, eta0, alpha, beta); }
};

OptimizerState make_optimizer(const MlpParams& params, double momentum, double eta0, double alpha,
                              double beta);

// Heavy-ball momentum: v <- momentum v + g; p <- p - lr v, lr from the schedule.
void sgd_step(MlpParams& params, const GradientSet& grads, OptimizerState& opt);

// Index of the largest logit per row.
std::vector<int> predict(const Matrix& logits);

// ---------------------------------------------------------------------------

template <typename A, typename B, typename Fn>
void zip_tensors(A& a, B& b, Fn&& fn) {
  check_congruent(a, b);
  using ElemA = std::conditional_t<std::is_const_v<A>, const double, double>;
  using ElemB = std::conditional_t<std::is_const_v<B>, const double, double>;
  std::vector<std::span<ElemA>> left;
  std::vector<std::span<ElemB>> right;
  for_each_tensor(a, [&](const std::string&, std::span<ElemA> s) { left.push_back(s); });
  for_each_tensor(b, [&](const std::string&, std::span<ElemB> s) { right.push_back(s); });
  for (std::size_t i = 0; i < left.size(); ++i) fn(left[i], right[i]);
}

}  // namespace jcl::nn
