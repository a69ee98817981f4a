#pragma once

// Feedforward and fully recurrent networks with exact gradient training.
//
// Everything here is templated on the scalar type and works on dense Eigen
// vectors and matrices. Weight matrices are stored fan-in x fan-out, so a
// layer computes act(W^T x + b). A recurrent network carries its feedback
// matrix on the first hidden layer; any further layers are feedforward.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "e2erl/errors.hpp"
#include "e2erl/rng.hpp"

namespace e2erl {

using Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Parameter type that does not take part in deduction, so Eigen expressions
/// convert to the network's vector type.
template <typename Scalar>
using VectorArg = std::type_identity_t<Vector<Scalar>>;

enum class ActivationKind { SymmetricSigmoid, Linear };

/// Unit nonlinearity. The symmetric sigmoid is
///   f(x) = scale * (1 / (1 + e^-x) - 1/2) = (scale / 2) * tanh(x / 2),
/// odd about zero with range (-scale/2, scale/2) and slope scale/4 at the origin.
/// The linear kind ignores the scale.
struct ActivationSpec {
  ActivationKind kind = ActivationKind::SymmetricSigmoid;
  double output_scale = 1.0;

  static ActivationSpec symmetric_sigmoid(double scale = 1.0) {
    return {ActivationKind::SymmetricSigmoid, scale};
  }
  static ActivationSpec linear() { return {ActivationKind::Linear, 1.0}; }

  template <typename Scalar>
  Scalar operator()(Scalar x) const {
    using std::tanh;
    if (kind == ActivationKind::Linear) return x;
    return Scalar(output_scale / 2) * tanh(x / Scalar(2));
  }

  /// f'(x) written in terms of y = f(x).
  template <typename Scalar>
  Scalar slope_from_output(Scalar y) const {
    if (kind == ActivationKind::Linear) return Scalar(1);
    const Scalar s(output_scale);
    return (s * s / Scalar(4) - y * y) / s;
  }

  double slope_at_zero() const {
    return kind == ActivationKind::Linear ? 1.0 : output_scale / 4.0;
  }

  /// Half-width of the output range; infinite for linear units.
  double bound() const {
    return kind == ActivationKind::Linear ? HUGE_VAL : output_scale / 2.0;
  }

  template <typename Derived>
  auto apply(const Eigen::MatrixBase<Derived>& x) const {
    using Scalar = typename Derived::Scalar;
    return x.unaryExpr([this](Scalar v) { return (*this)(v); });
  }

  template <typename Derived>
  auto slopes(const Eigen::MatrixBase<Derived>& y) const {
    using Scalar = typename Derived::Scalar;
    return y.unaryExpr([this](Scalar v) { return slope_from_output(v); });
  }

  bool operator==(const ActivationSpec&) const = default;
};

std::string to_string(ActivationKind kind);
ActivationKind activation_kind_from_string(const std::string& name);

/// Architecture of a network, without parameters.
struct NetworkShape {
  std::vector<Index> layer_sizes;
  bool recurrent = false;
  ActivationSpec hidden_activation;
  ActivationSpec output_activation;
  bool trainable_bias = true;
};

/// Learnable parameters of a feedforward or recurrent network.
template <typename Scalar>
struct NetworkWeights {
  std::vector<Index> layer_sizes;
  std::vector<Matrix<Scalar>> weights;  // weights[l]: layer_sizes[l] x layer_sizes[l + 1]
  std::vector<Vector<Scalar>> biases;
  std::optional<Matrix<Scalar>> recurrent;  // hidden x hidden, feeds layer 1
  ActivationSpec hidden_activation;
  ActivationSpec output_activation;
  bool trainable_bias = true;

  static NetworkWeights zeros(const NetworkShape& shape) {
    if (shape.layer_sizes.size() < 2) throw ShapeError("a network needs at least two layers");
    if (shape.recurrent && shape.layer_sizes.size() < 3)
      throw ShapeError("a recurrent network needs a hidden layer");
    for (Index n : shape.layer_sizes)
      if (n < 1) throw ShapeError("layer sizes must be positive");
    NetworkWeights net;
    net.layer_sizes = shape.layer_sizes;
    net.hidden_activation = shape.hidden_activation;
    net.output_activation = shape.output_activation;
    net.trainable_bias = shape.trainable_bias;
    for (std::size_t l = 0; l + 1 < shape.layer_sizes.size(); ++l) {
      net.weights.push_back(Matrix<Scalar>::Zero(shape.layer_sizes[l], shape.layer_sizes[l + 1]));
      net.biases.push_back(Vector<Scalar>::Zero(shape.layer_sizes[l + 1]));
    }
    if (shape.recurrent)
      net.recurrent = Matrix<Scalar>::Zero(shape.layer_sizes[1], shape.layer_sizes[1]);
    return net;
  }

  NetworkShape shape() const {
    return {layer_sizes, is_recurrent(), hidden_activation, output_activation, trainable_bias};
  }

  bool is_recurrent() const { return recurrent.has_value(); }
  Index input_size() const { return layer_sizes.front(); }
  Index output_size() const { return layer_sizes.back(); }
  Index hidden_size() const { return layer_sizes.size() > 2 ? layer_sizes[1] : 0; }
  std::size_t layer_count() const { return weights.size(); }

  const ActivationSpec& activation(std::size_t layer) const {
    return layer + 1 == weights.size() ? output_activation : hidden_activation;
  }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    if (recurrent) n += recurrent->size();
    return n;
  }

  NetworkWeights zeros_like() const { return zeros(shape()); }

  bool all_finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return !recurrent || recurrent->allFinite();
  }

  /// Throws ShapeError or NumericalError when an invariant is broken.
  void validate() const {
    if (layer_sizes.size() < 2 || weights.size() + 1 != layer_sizes.size() ||
        biases.size() != weights.size())
      throw ShapeError("layer count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != layer_sizes[l] || weights[l].cols() != layer_sizes[l + 1] ||
          biases[l].size() != layer_sizes[l + 1])
        throw ShapeError("layer " + std::to_string(l) + " dimensions disagree with layer sizes");
    }
    if (recurrent && (layer_sizes.size() < 3 || recurrent->rows() != layer_sizes[1] ||
                      recurrent->cols() != layer_sizes[1]))
      throw ShapeError("recurrent matrix must be square with the hidden-layer size");
    if (!all_finite()) throw NumericalError("network contains non-finite parameters");
  }

  /// this += alpha * other, for parameter updates with a gradient of equal shape.
  NetworkWeights& axpy(Scalar alpha, const NetworkWeights& other) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += alpha * other.weights[l];
      if (trainable_bias) biases[l] += alpha * other.biases[l];
    }
    if (recurrent) *recurrent += alpha * *other.recurrent;
    return *this;
  }

  template <typename Other>
  NetworkWeights<Other> cast() const {
    NetworkWeights<Other> out;
    out.layer_sizes = layer_sizes;
    out.hidden_activation = hidden_activation;
    out.output_activation = output_activation;
    out.trainable_bias = trainable_bias;
    for (const auto& w : weights) out.weights.push_back(w.template cast<Other>());
    for (const auto& b : biases) out.biases.push_back(b.template cast<Other>());
    if (recurrent) out.recurrent = recurrent->template cast<Other>();
    return out;
  }

  bool operator==(const NetworkWeights& o) const {
    if (layer_sizes != o.layer_sizes || hidden_activation != o.hidden_activation ||
        output_activation != o.output_activation || trainable_bias != o.trainable_bias ||
        recurrent.has_value() != o.recurrent.has_value())
      return false;
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
    return !recurrent || *recurrent == *o.recurrent;
  }
};

/// All parameters in a fixed order: weights, then biases, then the recurrent matrix.
template <typename Scalar>
Vector<Scalar> flatten_parameters(const NetworkWeights<Scalar>& net) {
  Vector<Scalar> flat(net.parameter_count());
  Index k = 0;
  auto put = [&](const auto& m) {
    flat.segment(k, m.size()) = m.reshaped();
    k += m.size();
  };
  for (const auto& w : net.weights) put(w);
  for (const auto& b : net.biases) put(b);
  if (net.recurrent) put(*net.recurrent);
  return flat;
}

template <typename Scalar>
void assign_parameters(NetworkWeights<Scalar>& net, const VectorArg<Scalar>& flat) {
  if (flat.size() != net.parameter_count()) throw ShapeError("parameter vector length mismatch");
  Index k = 0;
  auto take = [&](auto& m) {
    m.reshaped() = flat.segment(k, m.size());
    k += m.size();
  };
  for (auto& w : net.weights) take(w);
  for (auto& b : net.biases) take(b);
  if (net.recurrent) take(*net.recurrent);
}

namespace detail {

template <typename Scalar>
void check_input(const NetworkWeights<Scalar>& net, const Vector<Scalar>& input) {
  if (input.size() != net.input_size())
    throw ShapeError("input has " + std::to_string(input.size()) + " entries, network expects " +
                     std::to_string(net.input_size()));
}

template <typename Scalar>
void check_target(const NetworkWeights<Scalar>& net, const Vector<Scalar>& target, const Mask& mask) {
  if (target.size() != net.output_size() || mask.size() != net.output_size())
    throw ShapeError("target and mask must match the output size");
  for (Index i = 0; i < target.size(); ++i)
    if (!std::isfinite(static_cast<double>(target[i])))
      throw NumericalError("non-finite training target");
}

template <typename Scalar>
Vector<Scalar> layer_forward(const NetworkWeights<Scalar>& net, std::size_t l, const Vector<Scalar>& in) {
  Vector<Scalar> pre = net.weights[l].transpose() * in + net.biases[l];
  return net.activation(l).apply(pre);
}

/// Masked output error (output - target), zero where the mask is off.
template <typename Scalar>
Vector<Scalar> masked_error(const Vector<Scalar>& output, const Vector<Scalar>& target, const Mask& mask) {
  return mask.select(output - target, Vector<Scalar>::Zero(output.size()));
}

/// Backpropagates `delta` (gradient w.r.t. the pre-activation of layer last+1)
/// down through weight layers last..first, accumulating into `grad`. Returns
/// the gradient w.r.t. the activations of layer `first`.
template <typename Scalar>
Vector<Scalar> backprop_layers(const NetworkWeights<Scalar>& net, const std::vector<Vector<Scalar>>& acts,
                               Vector<Scalar> delta, std::size_t first, NetworkWeights<Scalar>& grad) {
  for (std::size_t l = net.layer_count(); l-- > first;) {
    grad.weights[l].noalias() += acts[l] * delta.transpose();
    if (net.trainable_bias) grad.biases[l] += delta;
    Vector<Scalar> upstream = net.weights[l] * delta;
    if (l == first) return upstream;
    delta = upstream.cwiseProduct(net.activation(l - 1).slopes(acts[l]));
  }
  return {};
}

}  // namespace detail

/// Output-layer activations of a layered (non-recurrent) network.
template <typename Scalar>
Vector<Scalar> forward_layered(const NetworkWeights<Scalar>& net, const VectorArg<Scalar>& input) {
  if (net.is_recurrent()) throw ShapeError("forward_layered called on a recurrent network");
  detail::check_input(net, input);
  Vector<Scalar> x = input;
  for (std::size_t l = 0; l < net.layer_count(); ++l) x = detail::layer_forward(net, l, x);
  return x;
}

template <typename Scalar>
struct LossAndGradient {
  Scalar loss;
  NetworkWeights<Scalar> gradient;
};

/// Masked squared error 1/2 sum_masked (target - output)^2 and its gradient.
template <typename Scalar>
LossAndGradient<Scalar> layered_gradient(const NetworkWeights<Scalar>& net, const VectorArg<Scalar>& input,
                                         const VectorArg<Scalar>& target, const Mask& mask) {
  if (net.is_recurrent()) throw ShapeError("layered_gradient called on a recurrent network");
  detail::check_input(net, input);
  detail::check_target(net, target, mask);
  std::vector<Vector<Scalar>> acts{input};
  for (std::size_t l = 0; l < net.layer_count(); ++l) acts.push_back(detail::layer_forward(net, l, acts.back()));
  const Vector<Scalar>& out = acts.back();
  const Vector<Scalar> err = detail::masked_error(out, target, mask);
  LossAndGradient<Scalar> result{Scalar(0.5) * err.squaredNorm(), net.zeros_like()};
  const Vector<Scalar> delta = err.cwiseProduct(net.output_activation.slopes(out));
  detail::backprop_layers(net, acts, delta, 0, result.gradient);
  return result;
}

/// One online gradient step; returns the pre-update loss.
template <typename Scalar>
Scalar backprop_layered(NetworkWeights<Scalar>& net, const VectorArg<Scalar>& input,
                        const VectorArg<Scalar>& target, const Mask& mask, std::type_identity_t<Scalar> lr) {
  auto [loss, grad] = layered_gradient<Scalar>(net, input, target, mask);
  if (mask.any()) net.axpy(-lr, grad);
  return loss;
}

/// Hidden activations carried across the steps of an episode.
template <typename Scalar>
struct RnnState {
  Vector<Scalar> hidden;

  static RnnState zero(const NetworkWeights<Scalar>& net) {
    return {Vector<Scalar>::Zero(net.hidden_size())};
  }
};

template <typename Scalar>
struct RnnStepResult {
  RnnState<Scalar> state;
  Vector<Scalar> output;
};

/// hidden' = act(W_in^T x + R^T hidden + b); output from hidden' through the upper layers.
template <typename Scalar>
RnnStepResult<Scalar> rnn_step(const NetworkWeights<Scalar>& net, const RnnState<Scalar>& state,
                               const VectorArg<Scalar>& input) {
  if (!net.is_recurrent()) throw ShapeError("rnn_step called on a feedforward network");
  detail::check_input(net, input);
  if (state.hidden.size() != net.hidden_size()) throw ShapeError("hidden state size mismatch");
  Vector<Scalar> pre = net.weights[0].transpose() * input + net.recurrent->transpose() * state.hidden +
                       net.biases[0];
  RnnStepResult<Scalar> result{{net.hidden_activation.apply(pre)}, {}};
  Vector<Scalar> x = result.state.hidden;
  for (std::size_t l = 1; l < net.layer_count(); ++l) x = detail::layer_forward(net, l, x);
  result.output = std::move(x);
  return result;
}

template <typename Scalar>
struct TraceStep {
  Vector<Scalar> input;
  Vector<Scalar> hidden_before;
  Vector<Scalar> outputs;
  Vector<Scalar> target;
  Mask mask;
};

/// Per-step record of one episode, replayable through rnn_step.
template <typename Scalar>
struct EpisodeTrace {
  std::vector<TraceStep<Scalar>> steps;

  bool empty() const { return steps.empty(); }
  std::size_t size() const { return steps.size(); }
  void clear() { steps.clear(); }

  /// Appends a step with no training signal yet.
  TraceStep<Scalar>& record(Vector<Scalar> input, Vector<Scalar> hidden_before, Vector<Scalar> outputs) {
    const Index n = outputs.size();
    steps.push_back({std::move(input), std::move(hidden_before), outputs, std::move(outputs),
                     Mask::Constant(n, false)});
    return steps.back();
  }

  void set_target(std::size_t t, Vector<Scalar> target, Mask mask) {
    if (t >= steps.size()) throw LifecycleError("trace step out of range");
    if (target.size() != steps[t].outputs.size() || mask.size() != target.size())
      throw ShapeError("trace target size mismatch");
    steps[t].target = std::move(target);
    steps[t].mask = std::move(mask);
  }
};

inline constexpr double kTraceTolerance = 1e-9;

/// Sum over steps of masked squared error, differentiated through the
/// recurrent connections. `window` limits how many steps back an error at
/// step t travels (t, t-1, ..., t-window+1); nullopt means the full episode.
template <typename Scalar>
LossAndGradient<Scalar> bptt_gradient(const NetworkWeights<Scalar>& net, const EpisodeTrace<Scalar>& trace,
                                      std::optional<std::size_t> window = std::nullopt) {
  if (!net.is_recurrent()) throw ShapeError("bptt on a feedforward network");
  LossAndGradient<Scalar> result{Scalar(0), net.zeros_like()};
  const std::size_t steps = trace.size();
  if (steps == 0) return result;
  const std::size_t layers = net.layer_count();
  const ActivationSpec& hidden_act = net.hidden_activation;

  // Replay and keep every layer's activations.
  std::vector<std::vector<Vector<Scalar>>> acts(steps);
  std::vector<Vector<Scalar>> hidden_prev(steps);
  RnnState<Scalar> state{trace.steps[0].hidden_before};
  if (state.hidden.size() != net.hidden_size()) throw ShapeError("trace hidden size mismatch");
  for (std::size_t t = 0; t < steps; ++t) {
    const auto& step = trace.steps[t];
    detail::check_target(net, step.target, step.mask);
    if (step.hidden_before.size() != state.hidden.size() ||
        (step.hidden_before - state.hidden).cwiseAbs().maxCoeff() > Scalar(kTraceTolerance))
      throw IntegrityError("trace step " + std::to_string(t) + " does not replay from its predecessor");
    hidden_prev[t] = state.hidden;
    state = rnn_step(net, state, step.input).state;
    acts[t].reserve(layers + 1);
    acts[t].push_back(step.input);
    acts[t].push_back(state.hidden);
    for (std::size_t l = 1; l < layers; ++l) acts[t].push_back(detail::layer_forward(net, l, acts[t].back()));
  }

  // Gradient w.r.t. each step's hidden activations from its own outputs.
  std::vector<Vector<Scalar>> local(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto& step = trace.steps[t];
    const Vector<Scalar>& out = acts[t].back();
    const Vector<Scalar> err = detail::masked_error(out, step.target, step.mask);
    result.loss += Scalar(0.5) * err.squaredNorm();
    const Vector<Scalar> delta = err.cwiseProduct(net.output_activation.slopes(out));
    local[t] = detail::backprop_layers(net, acts[t], delta, 1, result.gradient);
  }

  auto accumulate = [&](std::size_t t, const Vector<Scalar>& grad_hidden) -> Vector<Scalar> {
    const Vector<Scalar> delta = grad_hidden.cwiseProduct(hidden_act.slopes(acts[t][1]));
    result.gradient.weights[0].noalias() += acts[t][0] * delta.transpose();
    if (net.trainable_bias) result.gradient.biases[0] += delta;
    result.gradient.recurrent->noalias() += hidden_prev[t] * delta.transpose();
    return *net.recurrent * delta;
  };

  if (!window || *window >= steps) {
    Vector<Scalar> carry = Vector<Scalar>::Zero(net.hidden_size());
    for (std::size_t t = steps; t-- > 0;) carry = accumulate(t, local[t] + carry);
  } else {
    const std::size_t span = std::max<std::size_t>(*window, 1);
    for (std::size_t origin = 0; origin < steps; ++origin) {
      if (trace.steps[origin].mask.any() == false) continue;
      Vector<Scalar> g = local[origin];
      for (std::size_t k = 0; k < span && k <= origin; ++k) g = accumulate(origin - k, g);
    }
  }
  return result;
}

/// One gradient step over a whole episode; returns the pre-update loss.
template <typename Scalar>
Scalar bptt_train(NetworkWeights<Scalar>& net, const EpisodeTrace<Scalar>& trace, std::type_identity_t<Scalar> lr,
                  std::optional<std::size_t> window = std::nullopt) {
  auto [loss, grad] = bptt_gradient(net, trace, window);
  net.axpy(-lr, grad);
  return loss;
}

/// Feedback matrix whose product with the activation slope at the origin is
/// gain * I, so that with gain = 1 the linearised transition is the identity.
template <typename Scalar = double>
Matrix<Scalar> init_identity_feedback(Index hidden_size, double gain,
                                      const ActivationSpec& activation = ActivationSpec{}) {
  if (hidden_size < 1) throw ShapeError("hidden size must be positive");
  return Matrix<Scalar>::Identity(hidden_size, hidden_size) * Scalar(gain / activation.slope_at_zero());
}

enum class RecurrentInit { Identity, Zero, Random };

struct InitOptions {
  double range = 0.1;
  double output_range = 0.1;  // output layer
  RecurrentInit recurrent = RecurrentInit::Identity;
  double identity_gain = 1.0;
};

/// Uniform weights in [-range, range] from `rng` ([-output_range,
/// output_range] for the output layer); the feedback matrix follows
/// `options.recurrent`. Biases are drawn too unless they are frozen.
template <typename Scalar = double>
NetworkWeights<Scalar> init_random(const NetworkShape& shape, const InitOptions& options, Rng& rng) {
  if (!(options.range >= 0) || !(options.output_range >= 0))
    throw ConfigError("init range must be non-negative");
  auto net = NetworkWeights<Scalar>::zeros(shape);
  auto fill = [&](auto& m, double range) {
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = Scalar(uniform(rng, -range, range));
  };
  const std::size_t last = net.weights.size() - 1;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const double range = l == last ? options.output_range : options.range;
    fill(net.weights[l], range);
    if (shape.trainable_bias) fill(net.biases[l], range);
  }
  if (net.recurrent) {
    switch (options.recurrent) {
      case RecurrentInit::Identity:
        *net.recurrent = init_identity_feedback<Scalar>(net.hidden_size(), options.identity_gain,
                                                        shape.hidden_activation);
        break;
      case RecurrentInit::Zero:
        net.recurrent->setZero();
        break;
      case RecurrentInit::Random:
        fill(*net.recurrent, options.range);
        break;
    }
  }
  return net;
}

std::string to_string(RecurrentInit init);
RecurrentInit recurrent_init_from_string(const std::string& name);

}  // namespace e2erl
