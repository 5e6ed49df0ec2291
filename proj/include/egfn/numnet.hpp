#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "egfn/rng.hpp"

namespace egfn {

inline constexpr double kLeakySlope = 0.01;

// Fully connected network: input -> hidden... -> output, leaky ReLU between
// layers and identity at the output.
struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 0;

  std::size_t layer_count() const { return hidden_dims.size() + 1; }
  std::size_t layer_inputs(std::size_t layer) const;
  std::size_t layer_outputs(std::size_t layer) const;
  std::size_t param_count() const;
  void validate() const;

  bool operator==(const MlpSpec&) const = default;
};

// Weight matrix of one layer. Row r holds the `cols` incoming weights of
// output unit r followed by its bias, so a row is `cols + 1` wide and is the
// atomic unit used by crossover and mutation.
struct LayerLayout {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t row_width() const { return cols + 1; }
  std::size_t size() const { return rows * row_width(); }
  bool operator==(const LayerLayout&) const = default;
};

struct ParamLayout {
  std::vector<LayerLayout> layers;

  static ParamLayout for_spec(const MlpSpec& spec);
  std::size_t total() const;
  std::size_t total_rows() const;
  bool operator==(const ParamLayout&) const = default;
};

struct ParamVector {
  std::vector<double> values;
  ParamLayout layout;

  ParamVector() = default;
  explicit ParamVector(ParamLayout l) : values(l.total(), 0.0), layout(std::move(l)) {}
  explicit ParamVector(const MlpSpec& spec) : ParamVector(ParamLayout::for_spec(spec)) {}

  std::size_t size() const { return values.size(); }
  std::span<double> row(std::size_t layer, std::size_t r);
  std::span<const double> row(std::size_t layer, std::size_t r) const;
  bool same_layout(const ParamVector& other) const { return layout == other.layout; }
};

// Read/overwrite handles on the rows of one layer.
std::vector<std::span<double>> row_views(ParamVector& params, std::size_t layer);
std::vector<std::span<const double>> row_views(const ParamVector& params, std::size_t layer);

// Uniform in +-sqrt(6 / (fan_in + fan_out)) per layer, zero biases.
void xavier_init(ParamVector& params, Rng& rng);

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// Per-layer pre-activations and layer inputs retained by a batched forward
// pass for the matching backward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;   // inputs[l]: input to layer l
  std::vector<Matrix> preacts;  // preacts[l]: affine output of layer l
};

// Batched kernels. Rows are processed in fixed-size chunks spread over
// `workers` OpenMP threads; results are bit-identical for any worker count.
Matrix mlp_forward_batch(const MlpSpec& spec, const ParamVector& params, const Matrix& inputs,
                         ForwardCache* cache = nullptr, int workers = 1);

// Accumulates d(sum_r upstream[r] . output[r]) / d(params) into `grad`.
void mlp_backward_batch(const MlpSpec& spec, const ParamVector& params, const ForwardCache& cache,
                        const Matrix& upstream, std::span<double> grad, int workers = 1);

std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                std::span<const double> input);

// Gradient of upstream . output with respect to the parameters.
ParamVector mlp_backward(const MlpSpec& spec, const ParamVector& params,
                         std::span<const double> input, std::span<const double> upstream);

// Straightforward serial implementations kept as the test oracle for the
// batched kernels.
namespace reference {
std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                std::span<const double> input);
ParamVector mlp_backward(const MlpSpec& spec, const ParamVector& params,
                         std::span<const double> input, std::span<const double> upstream);
}  // namespace reference

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::size_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

// Bias-corrected Adam update in place. Throws TrainingError naming the first
// non-finite gradient coordinate.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr);

}  // namespace egfn
