#include "egfn/numnet.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "egfn/errors.hpp"

namespace egfn {

namespace {

constexpr std::size_t kRowChunk = 16;

inline double leaky(double x) { return x > 0.0 ? x : kLeakySlope * x; }
inline double leaky_grad(double x) { return x > 0.0 ? 1.0 : kLeakySlope; }

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline void axpy(double* y, double alpha, const double* x, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void check_params(const MlpSpec& spec, const ParamVector& params) {
  bool ok = params.layout.layers.size() == spec.layer_count() &&
            params.values.size() == params.layout.total();
  for (std::size_t l = 0; ok && l < spec.layer_count(); ++l) {
    const auto& layer = params.layout.layers[l];
    ok = layer.rows == spec.layer_outputs(l) && layer.cols == spec.layer_inputs(l);
  }
  if (!ok) throw ConfigError("parameter layout does not match network spec");
}

// out = in * W^T + b for rows [r0, r1).
void affine_rows(const LayerLayout& layer, const double* weights, const Matrix& in, Matrix& out,
                 std::size_t r0, std::size_t r1) {
  const std::size_t width = layer.row_width();
  for (std::size_t j = 0; j < layer.rows; ++j) {
    const double* w = weights + j * width;
    const double bias = w[layer.cols];
    for (std::size_t r = r0; r < r1; ++r) {
      out.data[r * out.cols + j] = bias + dot(w, in.data.data() + r * in.cols, layer.cols);
    }
  }
}

}  // namespace

std::size_t MlpSpec::layer_inputs(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_dims[layer - 1];
}

std::size_t MlpSpec::layer_outputs(std::size_t layer) const {
  return layer + 1 == layer_count() ? output_dim : hidden_dims[layer];
}

std::size_t MlpSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    n += layer_outputs(l) * (layer_inputs(l) + 1);
  }
  return n;
}

void MlpSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw ConfigError("network dimensions must be positive");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ConfigError("hidden layer widths must be positive");
  }
}

ParamLayout ParamLayout::for_spec(const MlpSpec& spec) {
  spec.validate();
  ParamLayout layout;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    LayerLayout layer{spec.layer_outputs(l), spec.layer_inputs(l), offset};
    offset += layer.size();
    layout.layers.push_back(layer);
  }
  return layout;
}

std::size_t ParamLayout::total() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.size();
  return n;
}

std::size_t ParamLayout::total_rows() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.rows;
  return n;
}

std::span<double> ParamVector::row(std::size_t layer, std::size_t r) {
  const auto& l = layout.layers.at(layer);
  return {values.data() + l.offset + r * l.row_width(), l.row_width()};
}

std::span<const double> ParamVector::row(std::size_t layer, std::size_t r) const {
  const auto& l = layout.layers.at(layer);
  return {values.data() + l.offset + r * l.row_width(), l.row_width()};
}

std::vector<std::span<double>> row_views(ParamVector& params, std::size_t layer) {
  if (layer >= params.layout.layers.size()) {
    throw ConfigError("layer index " + std::to_string(layer) + " out of range");
  }
  std::vector<std::span<double>> rows;
  for (std::size_t r = 0; r < params.layout.layers[layer].rows; ++r) rows.push_back(params.row(layer, r));
  return rows;
}

std::vector<std::span<const double>> row_views(const ParamVector& params, std::size_t layer) {
  if (layer >= params.layout.layers.size()) {
    throw ConfigError("layer index " + std::to_string(layer) + " out of range");
  }
  std::vector<std::span<const double>> rows;
  for (std::size_t r = 0; r < params.layout.layers[layer].rows; ++r) rows.push_back(params.row(layer, r));
  return rows;
}

void xavier_init(ParamVector& params, Rng& rng) {
  for (const auto& layer : params.layout.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.cols + layer.rows));
    for (std::size_t r = 0; r < layer.rows; ++r) {
      double* row = params.values.data() + layer.offset + r * layer.row_width();
      for (std::size_t c = 0; c < layer.cols; ++c) row[c] = (2.0 * uniform01(rng) - 1.0) * limit;
      row[layer.cols] = 0.0;
    }
  }
}

Matrix mlp_forward_batch(const MlpSpec& spec, const ParamVector& params, const Matrix& inputs,
                         ForwardCache* cache, int workers) {
  check_params(spec, params);
  if (inputs.cols != spec.input_dim) {
    throw ConfigError("input width " + std::to_string(inputs.cols) + " != network input " +
                      std::to_string(spec.input_dim));
  }
  const std::size_t n = inputs.rows;
  const std::size_t chunks = (n + kRowChunk - 1) / kRowChunk;
  if (cache) {
    cache->inputs.assign(spec.layer_count(), Matrix{});
    cache->preacts.assign(spec.layer_count(), Matrix{});
  }

  Matrix current = inputs;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const LayerLayout& layer = params.layout.layers[l];
    const bool last = l + 1 == spec.layer_count();
    Matrix pre(n, layer.rows);
    const double* weights = params.values.data() + layer.offset;
#pragma omp parallel for num_threads(workers) schedule(static)
    for (std::size_t c = 0; c < chunks; ++c) {
      const std::size_t r0 = c * kRowChunk;
      const std::size_t r1 = std::min(n, r0 + kRowChunk);
      affine_rows(layer, weights, current, pre, r0, r1);
    }
    if (cache) {
      cache->inputs[l] = std::move(current);
      cache->preacts[l] = pre;
    }
    if (last) return pre;
    for (double& v : pre.data) v = leaky(v);
    current = std::move(pre);
  }
  return current;
}

void mlp_backward_batch(const MlpSpec& spec, const ParamVector& params, const ForwardCache& cache,
                        const Matrix& upstream, std::span<double> grad, int workers) {
  check_params(spec, params);
  if (grad.size() != params.size()) throw ConfigError("gradient buffer size mismatch");
  if (cache.preacts.size() != spec.layer_count()) throw UsageError("forward cache is empty");
  const std::size_t n = upstream.rows;
  if (upstream.cols != spec.output_dim || cache.preacts.back().rows != n) {
    throw ConfigError("upstream shape does not match the cached forward pass");
  }
  const std::size_t chunks = (n + kRowChunk - 1) / kRowChunk;

  Matrix delta = upstream;
  for (std::size_t l = spec.layer_count(); l-- > 0;) {
    const LayerLayout& layer = params.layout.layers[l];
    const Matrix& in = cache.inputs[l];
    const std::size_t width = layer.row_width();
    double* g = grad.data() + layer.offset;
    const double* w = params.values.data() + layer.offset;

    // Each output unit owns its gradient row; rows are summed in fixed order.
#pragma omp parallel for num_threads(workers) schedule(static)
    for (std::size_t j = 0; j < layer.rows; ++j) {
      double* gj = g + j * width;
      for (std::size_t r = 0; r < n; ++r) {
        const double d = delta.data[r * delta.cols + j];
        if (d == 0.0) continue;
        axpy(gj, d, in.data.data() + r * in.cols, layer.cols);
        gj[layer.cols] += d;
      }
    }
    if (l == 0) break;

    const Matrix& prev_pre = cache.preacts[l - 1];
    Matrix next(n, layer.cols);
#pragma omp parallel for num_threads(workers) schedule(static)
    for (std::size_t c = 0; c < chunks; ++c) {
      const std::size_t r0 = c * kRowChunk;
      const std::size_t r1 = std::min(n, r0 + kRowChunk);
      for (std::size_t r = r0; r < r1; ++r) {
        double* out = next.data.data() + r * next.cols;
        for (std::size_t j = 0; j < layer.rows; ++j) {
          const double d = delta.data[r * delta.cols + j];
          if (d != 0.0) axpy(out, d, w + j * width, layer.cols);
        }
        const double* z = prev_pre.data.data() + r * prev_pre.cols;
        for (std::size_t i = 0; i < layer.cols; ++i) out[i] *= leaky_grad(z[i]);
      }
    }
    delta = std::move(next);
  }
}

std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                std::span<const double> input) {
  if (input.size() != spec.input_dim) {
    throw ConfigError("input length " + std::to_string(input.size()) + " != " +
                      std::to_string(spec.input_dim));
  }
  Matrix in(1, input.size());
  std::copy(input.begin(), input.end(), in.data.begin());
  return mlp_forward_batch(spec, params, in).data;
}

ParamVector mlp_backward(const MlpSpec& spec, const ParamVector& params,
                         std::span<const double> input, std::span<const double> upstream) {
  if (input.size() != spec.input_dim || upstream.size() != spec.output_dim) {
    throw ConfigError("input/upstream length does not match network spec");
  }
  Matrix in(1, input.size());
  std::copy(input.begin(), input.end(), in.data.begin());
  ForwardCache cache;
  mlp_forward_batch(spec, params, in, &cache);
  Matrix up(1, upstream.size());
  std::copy(upstream.begin(), upstream.end(), up.data.begin());
  ParamVector grad(params.layout);
  mlp_backward_batch(spec, params, cache, up, grad.values);
  return grad;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ConfigError("adam: parameter, gradient and moment lengths differ");
  }
  if (!(lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw TrainingError("non-finite gradient at parameter index " + std::to_string(i));
    }
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    params[i] -= lr * (m / c1) / (std::sqrt(v / c2) + state.eps);
  }
}

}  // namespace egfn
