#pragma once

// Shared forward / tangent / adjoint sweeps for the fully connected rectifier
// networks behind both the feature map and the generator. Batches are stored
// column-wise: one sample per column.

#include <vector>

#include "paramflow/common.hpp"

namespace paramflow::detail {

template <typename T>
struct DenseLayer {
  Mat<T> weight;  // out x in
  Vec<T> bias;    // out
};

template <typename T>
using LayerStack = std::vector<DenseLayer<T>>;

/// Activations recorded during a forward pass.
template <typename T>
struct Tape {
  std::vector<Mat<T>> inputs;  // inputs[l] feeds layer l
  std::vector<Mat<T>> pre;     // pre-activations of layer l
};

/// Rectifier derivative with the convention relu'(0) = 0.
template <typename T>
inline Mat<T> relu_mask(const Mat<T>& pre) {
  return (pre.array() > T(0)).template cast<T>().matrix();
}

template <typename T>
Mat<T> forward(const LayerStack<T>& layers, const Mat<T>& x, Tape<T>* tape = nullptr) {
  if (tape != nullptr) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Mat<T> h = x;
  const std::size_t depth = layers.size();
  for (std::size_t l = 0; l < depth; ++l) {
    Mat<T> pre = layers[l].weight * h;
    pre.colwise() += layers[l].bias;
    if (tape != nullptr) {
      tape->inputs.push_back(std::move(h));
      tape->pre.push_back(pre);
    }
    h = (l + 1 < depth) ? Mat<T>(pre.cwiseMax(T(0))) : std::move(pre);
  }
  return h;
}

/// Pushes k input-space tangents per sample through the network.
/// Column j*N + i of `tangents` is tangent j of sample i (N samples).
template <typename T>
Mat<T> input_jvp(const LayerStack<T>& layers, const Tape<T>& tape, Mat<T> tangents, long k) {
  const std::size_t depth = layers.size();
  for (std::size_t l = 0; l < depth; ++l) {
    Mat<T> next = layers[l].weight * tangents;
    if (l + 1 < depth) {
      const Mat<T> mask = relu_mask(tape.pre[l]);
      const long n = mask.cols();
      for (long j = 0; j < k; ++j) next.middleCols(j * n, n).array() *= mask.array();
    }
    tangents = std::move(next);
  }
  return tangents;
}

/// Per-sample input gradients: column i is J_x(sample i)^T cot.col(i).
template <typename T>
Mat<T> input_vjp(const LayerStack<T>& layers, const Tape<T>& tape, Mat<T> cot) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (l + 1 < layers.size()) cot.array() *= (tape.pre[l].array() > T(0)).template cast<T>();
    cot = layers[l].weight.transpose() * cot;
  }
  return cot;
}

/// Batch-summed parameter gradient sum_i J_theta(sample i) cot.col(i), in the
/// canonical flattening (per layer: weight row-major, then bias).
template <typename T>
Vec<T> param_vjp(const LayerStack<T>& layers, const Tape<T>& tape, Mat<T> cot, long param_count) {
  Vec<T> grad(param_count);
  std::vector<long> offsets(layers.size());
  long off = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    offsets[l] = off;
    off += layers[l].weight.size() + layers[l].bias.size();
  }
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (l + 1 < layers.size()) cot.array() *= (tape.pre[l].array() > T(0)).template cast<T>();
    const long out = layers[l].weight.rows();
    const long in = layers[l].weight.cols();
    Mat<T> gw = cot * tape.inputs[l].transpose();
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(grad.data() + offsets[l], out, in) =
        gw;
    grad.segment(offsets[l] + out * in, out) = cot.rowwise().sum();
    if (l > 0) cot = layers[l].weight.transpose() * cot;
  }
  return grad;
}

/// Output tangents J_theta(sample i)^T dtheta for every sample (forward mode
/// in parameter space).
template <typename T>
Mat<T> param_jvp(const LayerStack<T>& layers, const Tape<T>& tape, const Vec<T>& dtheta) {
  Mat<T> t;
  long off = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const long out = layers[l].weight.rows();
    const long in = layers[l].weight.cols();
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dw(dtheta.data() + off, out, in);
    Mat<T> next = dw * tape.inputs[l];
    next.colwise() += dtheta.segment(off + out * in, out);
    if (l > 0) next.noalias() += layers[l].weight * t;
    if (l + 1 < layers.size()) next.array() *= (tape.pre[l].array() > T(0)).template cast<T>();
    t = std::move(next);
    off += out * in + out;
  }
  return t;
}

/// Writes the parameter Jacobian of sample `i` (p x d_out) into `dst`, one
/// reverse sweep per output coordinate.
template <typename T, typename Dst>
void param_jacobian_sample(const LayerStack<T>& layers, const Tape<T>& tape, long i, Dst&& dst) {
  const std::size_t depth = layers.size();
  const long d_out = layers.back().weight.rows();
  std::vector<long> offsets(depth);
  long off = 0;
  for (std::size_t l = 0; l < depth; ++l) {
    offsets[l] = off;
    off += layers[l].weight.size() + layers[l].bias.size();
  }
  Vec<T> delta;
  for (long j = 0; j < d_out; ++j) {
    delta = Vec<T>::Unit(d_out, j);
    for (std::size_t l = depth; l-- > 0;) {
      if (l + 1 < depth) delta.array() *= (tape.pre[l].col(i).array() > T(0)).template cast<T>();
      const long out = layers[l].weight.rows();
      const long in = layers[l].weight.cols();
      const auto h = tape.inputs[l].col(i);
      for (long r = 0; r < out; ++r) {
        dst.col(j).segment(offsets[l] + r * in, in) = delta(r) * h;
      }
      dst.col(j).segment(offsets[l] + out * in, out) = delta;
      if (l > 0) delta = layers[l].weight.transpose() * delta;
    }
  }
}

}  // namespace paramflow::detail
