#pragma once

// Dense LSTM building blocks, templated on the scalar type.
//
// Gate rows are stacked [input; forget; candidate; output], each block
// `hidden` rows tall. Gates use the logistic sigmoid; the candidate and the
// cell-output activation are ReLU:
//
//   z_t = W_x x_t + W_h h_{t-1} + b
//   c_t = f_t * c_{t-1} + i_t * relu(z_g)
//   h_t = o_t * relu(c_t)
//
// Sequences are batch-major per time step: element t is a
// (features x batch) block, so one call processes a whole mini-batch.

#include <Eigen/Core>
#include <cmath>
#include <utility>
#include <vector>

#include "agro/error.hpp"
#include "agro/rng.hpp"

namespace agro::lstm {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Sequence = std::vector<Matrix<Scalar>>;

enum Gate : Eigen::Index { kInputGate = 0, kForgetGate = 1, kCandidate = 2, kOutputGate = 3 };

template <typename Scalar>
struct LayerParams {
  Matrix<Scalar> w_input;      // 4H x I
  Matrix<Scalar> w_recurrent;  // 4H x H
  Vector<Scalar> bias;         // 4H

  Eigen::Index hidden_size() const { return bias.size() / 4; }
  Eigen::Index input_size() const { return w_input.cols(); }

  static LayerParams Zero(Eigen::Index input, Eigen::Index hidden) {
    return {Matrix<Scalar>::Zero(4 * hidden, input), Matrix<Scalar>::Zero(4 * hidden, hidden),
            Vector<Scalar>::Zero(4 * hidden)};
  }
};

template <typename Scalar>
struct LayerState {
  Matrix<Scalar> hidden;  // H x B
  Matrix<Scalar> cell;    // H x B

  static LayerState Zero(Eigen::Index hidden_size, Eigen::Index batch) {
    return {Matrix<Scalar>::Zero(hidden_size, batch), Matrix<Scalar>::Zero(hidden_size, batch)};
  }
};

/// Everything the backward pass needs from one layer's forward pass.
template <typename Scalar>
struct LayerTrace {
  Sequence<Scalar> inputs;  // T blocks, I x B
  Sequence<Scalar> gates;   // T blocks, 4H x B, post-activation
  Sequence<Scalar> cells;   // T+1 blocks, cells[0] is the initial cell state
  Sequence<Scalar> hidden;  // T+1 blocks, hidden[0] is the initial hidden state

  std::size_t steps() const { return inputs.size(); }
  const Matrix<Scalar>& output(std::size_t t) const { return hidden[t + 1]; }
  LayerState<Scalar> final_state() const { return {hidden.back(), cells.back()}; }
};

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) + (-x).exp()).inverse();
}

template <typename Derived>
auto relu(const Eigen::ArrayBase<Derived>& x) {
  return x.max(typename Derived::Scalar(0));
}

// Subgradient at 0 is 0.
template <typename Derived>
auto relu_grad(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (x > Scalar(0)).template cast<Scalar>();
}

template <typename Scalar>
LayerTrace<Scalar> lstm_forward(const LayerParams<Scalar>& p, const Sequence<Scalar>& inputs,
                                const LayerState<Scalar>& initial) {
  const Eigen::Index h = p.hidden_size();
  if (initial.hidden.rows() != h || initial.cell.rows() != h || initial.hidden.cols() != initial.cell.cols()) {
    fail(Errc::ShapeMismatch, "lstm_forward: initial state does not match the layer's hidden size");
  }
  const Eigen::Index batch = initial.hidden.cols();
  LayerTrace<Scalar> trace;
  trace.inputs = inputs;
  trace.gates.reserve(inputs.size());
  trace.cells.reserve(inputs.size() + 1);
  trace.hidden.reserve(inputs.size() + 1);
  trace.cells.push_back(initial.cell);
  trace.hidden.push_back(initial.hidden);

  for (const auto& x : inputs) {
    if (x.rows() != p.input_size() || x.cols() != batch) {
      fail(Errc::ShapeMismatch, "lstm_forward: input block has the wrong shape");
    }
    Matrix<Scalar> z = p.w_input * x + p.w_recurrent * trace.hidden.back();
    z.colwise() += p.bias;
    Matrix<Scalar> a(4 * h, batch);
    a.middleRows(kInputGate * h, h) = sigmoid(z.middleRows(kInputGate * h, h).array());
    a.middleRows(kForgetGate * h, h) = sigmoid(z.middleRows(kForgetGate * h, h).array());
    a.middleRows(kCandidate * h, h) = relu(z.middleRows(kCandidate * h, h).array());
    a.middleRows(kOutputGate * h, h) = sigmoid(z.middleRows(kOutputGate * h, h).array());

    Matrix<Scalar> c = a.middleRows(kForgetGate * h, h).cwiseProduct(trace.cells.back()) +
                       a.middleRows(kInputGate * h, h).cwiseProduct(a.middleRows(kCandidate * h, h));
    Matrix<Scalar> hidden = a.middleRows(kOutputGate * h, h).array() * relu(c.array());
    trace.gates.push_back(std::move(a));
    trace.cells.push_back(std::move(c));
    trace.hidden.push_back(std::move(hidden));
  }
  return trace;
}

/// BPTT through one layer. `d_hidden[t]` is dLoss/dh_t arriving from above
/// (H x B per step); parameter gradients are accumulated into `grads` and
/// dLoss/dx_t is returned per step.
template <typename Scalar>
Sequence<Scalar> lstm_backward(const LayerParams<Scalar>& p, const LayerTrace<Scalar>& trace,
                               const Sequence<Scalar>& d_hidden, LayerParams<Scalar>& grads) {
  const Eigen::Index h = p.hidden_size();
  const std::size_t steps = trace.steps();
  if (d_hidden.size() != steps) fail(Errc::ShapeMismatch, "lstm_backward: gradient sequence length mismatch");
  const Eigen::Index batch = trace.hidden.front().cols();

  Sequence<Scalar> d_inputs(steps);
  Matrix<Scalar> dh_next = Matrix<Scalar>::Zero(h, batch);
  Matrix<Scalar> dc_next = Matrix<Scalar>::Zero(h, batch);
  Matrix<Scalar> dz(4 * h, batch);

  for (std::size_t t = steps; t-- > 0;) {
    const auto& a = trace.gates[t];
    const auto i = a.middleRows(kInputGate * h, h).array();
    const auto f = a.middleRows(kForgetGate * h, h).array();
    const auto g = a.middleRows(kCandidate * h, h).array();
    const auto o = a.middleRows(kOutputGate * h, h).array();
    const auto c = trace.cells[t + 1].array();
    const auto c_prev = trace.cells[t].array();

    const Matrix<Scalar> dh = d_hidden[t] + dh_next;
    const auto dh_a = dh.array();
    const Matrix<Scalar> dc = (dh_a * o * relu_grad(c)).matrix() + dc_next;
    const auto dc_a = dc.array();

    dz.middleRows(kInputGate * h, h) = (dc_a * g * i * (Scalar(1) - i)).matrix();
    dz.middleRows(kForgetGate * h, h) = (dc_a * c_prev * f * (Scalar(1) - f)).matrix();
    // g > 0 exactly when its pre-activation is > 0.
    dz.middleRows(kCandidate * h, h) = (dc_a * i * relu_grad(g)).matrix();
    dz.middleRows(kOutputGate * h, h) = (dh_a * relu(c) * o * (Scalar(1) - o)).matrix();

    grads.w_input.noalias() += dz * trace.inputs[t].transpose();
    grads.w_recurrent.noalias() += dz * trace.hidden[t].transpose();
    grads.bias += dz.rowwise().sum();

    d_inputs[t].noalias() = p.w_input.transpose() * dz;
    dh_next.noalias() = p.w_recurrent.transpose() * dz;
    dc_next = (dc_a * f).matrix();
  }
  return d_inputs;
}

/// Two stacked LSTM layers and an affine head reading the last hidden state
/// of the second layer.
template <typename Scalar>
struct NetworkParams {
  LayerParams<Scalar> layer1;
  LayerParams<Scalar> layer2;
  Vector<Scalar> head_weights;  // H2
  Vector<Scalar> head_bias;     // 1

  static NetworkParams Zero(Eigen::Index input, Eigen::Index hidden1, Eigen::Index hidden2) {
    return {LayerParams<Scalar>::Zero(input, hidden1), LayerParams<Scalar>::Zero(hidden1, hidden2),
            Vector<Scalar>::Zero(hidden2), Vector<Scalar>::Zero(1)};
  }

  NetworkParams zeros_like() const {
    return Zero(layer1.input_size(), layer1.hidden_size(), layer2.hidden_size());
  }
};

/// Visits the eight parameter tensors of one or more same-shaped networks
/// (parameters, gradients, optimizer moments) in lockstep, in a fixed order.
template <typename Fn, typename First, typename... Rest>
  requires requires(First& f) { f.layer2.w_recurrent; f.head_bias; }
void for_each_tensor(Fn&& fn, First& first, Rest&... rest) {
  fn(first.layer1.w_input, rest.layer1.w_input...);
  fn(first.layer1.w_recurrent, rest.layer1.w_recurrent...);
  fn(first.layer1.bias, rest.layer1.bias...);
  fn(first.layer2.w_input, rest.layer2.w_input...);
  fn(first.layer2.w_recurrent, rest.layer2.w_recurrent...);
  fn(first.layer2.bias, rest.layer2.bias...);
  fn(first.head_weights, rest.head_weights...);
  fn(first.head_bias, rest.head_bias...);
}

/// Inverted-dropout masks: each entry is 0 or 1/(1-rate). Empty means off.
template <typename Scalar>
struct DropoutMasks {
  Sequence<Scalar> layer1;  // T blocks, H1 x B
  Matrix<Scalar> layer2;    // H2 x B

  bool empty() const { return layer1.empty(); }
};

template <typename Scalar>
Matrix<Scalar> bernoulli_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Matrix<Scalar> m(rows, cols);
  const Scalar keep = Scalar(1) / Scalar(1.0 - rate);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = uniform01(rng) < rate ? Scalar(0) : keep;
  }
  return m;
}

template <typename Scalar>
DropoutMasks<Scalar> draw_dropout_masks(const NetworkParams<Scalar>& p, std::size_t steps, Eigen::Index batch,
                                        double rate, Rng& rng) {
  DropoutMasks<Scalar> masks;
  if (rate <= 0.0) return masks;
  for (std::size_t t = 0; t < steps; ++t) {
    masks.layer1.push_back(bernoulli_mask<Scalar>(p.layer1.hidden_size(), batch, rate, rng));
  }
  masks.layer2 = bernoulli_mask<Scalar>(p.layer2.hidden_size(), batch, rate, rng);
  return masks;
}

template <typename Scalar>
struct ForwardCache {
  LayerTrace<Scalar> layer1;
  LayerTrace<Scalar> layer2;
  DropoutMasks<Scalar> masks;
  Matrix<Scalar> head_input;  // H2 x B, after dropout
  Matrix<Scalar> output;      // 1 x B
};

/// Windows are columns of a (look_back x batch) matrix of scaled prices.
/// Returns the 1 x batch predictions; with `masks` empty this is inference.
template <typename Scalar>
Matrix<Scalar> forward_full(const NetworkParams<Scalar>& p, const Matrix<Scalar>& windows,
                            const DropoutMasks<Scalar>& masks, ForwardCache<Scalar>* cache = nullptr) {
  if (p.layer1.input_size() != 1 || p.layer2.input_size() != p.layer1.hidden_size() ||
      p.head_weights.size() != p.layer2.hidden_size() || p.head_bias.size() != 1) {
    fail(Errc::ShapeMismatch, "forward_full: inconsistent network shapes");
  }
  const auto steps = static_cast<std::size_t>(windows.rows());
  const Eigen::Index batch = windows.cols();
  if (!masks.empty() && masks.layer1.size() != steps) {
    fail(Errc::ShapeMismatch, "forward_full: dropout masks do not match the window length");
  }

  Sequence<Scalar> inputs(steps);
  for (std::size_t t = 0; t < steps; ++t) inputs[t] = windows.row(static_cast<Eigen::Index>(t));
  auto trace1 = lstm_forward(p.layer1, inputs, LayerState<Scalar>::Zero(p.layer1.hidden_size(), batch));

  Sequence<Scalar> mid(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    mid[t] = masks.empty() ? trace1.output(t) : trace1.output(t).cwiseProduct(masks.layer1[t]);
  }
  auto trace2 = lstm_forward(p.layer2, mid, LayerState<Scalar>::Zero(p.layer2.hidden_size(), batch));

  Matrix<Scalar> head_input = masks.empty() ? trace2.hidden.back() : trace2.hidden.back().cwiseProduct(masks.layer2);
  Matrix<Scalar> out = p.head_weights.transpose() * head_input;
  out.array() += p.head_bias(0);

  if (cache) {
    cache->layer1 = std::move(trace1);
    cache->layer2 = std::move(trace2);
    cache->masks = masks;
    cache->head_input = std::move(head_input);
    cache->output = out;
  }
  return out;
}

/// Mean squared error over the batch.
template <typename Scalar>
Scalar mse_loss(const Matrix<Scalar>& predictions, const Matrix<Scalar>& targets) {
  return (predictions - targets).squaredNorm() / Scalar(predictions.size());
}

/// Gradients of mse_loss(forward_full(...), targets) for every parameter.
template <typename Scalar>
NetworkParams<Scalar> backward(const NetworkParams<Scalar>& p, const ForwardCache<Scalar>& cache,
                               const Matrix<Scalar>& targets) {
  if (targets.rows() != 1 || targets.cols() != cache.output.cols()) {
    fail(Errc::ShapeMismatch, "backward: targets must be 1 x batch");
  }
  NetworkParams<Scalar> grads = p.zeros_like();
  const Eigen::Index batch = cache.output.cols();
  const Matrix<Scalar> d_out = (cache.output - targets) * (Scalar(2) / Scalar(batch));

  grads.head_weights.noalias() = cache.head_input * d_out.transpose();
  grads.head_bias(0) = d_out.sum();

  Matrix<Scalar> d_h2 = p.head_weights * d_out;
  if (!cache.masks.empty()) d_h2 = d_h2.cwiseProduct(cache.masks.layer2);

  const std::size_t steps = cache.layer2.steps();
  Sequence<Scalar> d_hidden2(steps, Matrix<Scalar>::Zero(p.layer2.hidden_size(), batch));
  d_hidden2.back() = d_h2;
  auto d_mid = lstm_backward(p.layer2, cache.layer2, d_hidden2, grads.layer2);
  if (!cache.masks.empty()) {
    for (std::size_t t = 0; t < steps; ++t) d_mid[t] = d_mid[t].cwiseProduct(cache.masks.layer1[t]);
  }
  lstm_backward(p.layer1, cache.layer1, d_mid, grads.layer1);
  return grads;
}

/// Glorot-uniform weights, zero biases except the forget gate (1.0).
template <typename Scalar>
NetworkParams<Scalar> init_network(Eigen::Index hidden1, Eigen::Index hidden2, Rng& rng) {
  auto p = NetworkParams<Scalar>::Zero(1, hidden1, hidden2);
  const auto glorot = [&rng](Matrix<Scalar>& m, Eigen::Index fan_in, Eigen::Index fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = Scalar(uniform_real(rng, -limit, limit));
    }
  };
  for (auto* layer : {&p.layer1, &p.layer2}) {
    const Eigen::Index h = layer->hidden_size();
    glorot(layer->w_input, layer->input_size(), 4 * h);
    glorot(layer->w_recurrent, h, 4 * h);
    layer->bias.segment(kForgetGate * h, h).setOnes();
  }
  Matrix<Scalar> head(hidden2, 1);
  glorot(head, hidden2, 1);
  p.head_weights = head.col(0);
  return p;
}

}  // namespace agro::lstm
