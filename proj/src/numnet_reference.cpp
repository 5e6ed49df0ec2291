#include <string>

#include "egfn/errors.hpp"
#include "egfn/numnet.hpp"

namespace egfn::reference {

namespace {

struct Trace {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> preacts;
  std::vector<double> output;
};

Trace run(const MlpSpec& spec, const ParamVector& params, std::span<const double> input) {
  if (input.size() != spec.input_dim) throw ConfigError("input length mismatch");
  if (params.values.size() != spec.param_count()) throw ConfigError("parameter count mismatch");
  Trace t;
  std::vector<double> x(input.begin(), input.end());
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t in = spec.layer_inputs(l);
    const std::size_t out = spec.layer_outputs(l);
    std::vector<double> z(out);
    for (std::size_t j = 0; j < out; ++j) {
      const double* w = params.values.data() + offset + j * (in + 1);
      double s = w[in];
      for (std::size_t i = 0; i < in; ++i) s += w[i] * x[i];
      z[j] = s;
    }
    offset += out * (in + 1);
    t.inputs.push_back(x);
    t.preacts.push_back(z);
    if (l + 1 == spec.layer_count()) {
      t.output = z;
    } else {
      for (double& v : z) v = v > 0.0 ? v : kLeakySlope * v;
      x = std::move(z);
    }
  }
  return t;
}

}  // namespace

std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                std::span<const double> input) {
  return run(spec, params, input).output;
}

ParamVector mlp_backward(const MlpSpec& spec, const ParamVector& params,
                         std::span<const double> input, std::span<const double> upstream) {
  if (upstream.size() != spec.output_dim) throw ConfigError("upstream length mismatch");
  const Trace t = run(spec, params, input);
  ParamVector grad(ParamLayout::for_spec(spec));
  std::vector<double> delta(upstream.begin(), upstream.end());
  for (std::size_t l = spec.layer_count(); l-- > 0;) {
    const LayerLayout& layer = grad.layout.layers[l];
    const auto& x = t.inputs[l];
    for (std::size_t j = 0; j < layer.rows; ++j) {
      auto g = grad.row(l, j);
      for (std::size_t i = 0; i < layer.cols; ++i) g[i] += delta[j] * x[i];
      g[layer.cols] += delta[j];
    }
    if (l == 0) break;
    std::vector<double> next(layer.cols, 0.0);
    for (std::size_t j = 0; j < layer.rows; ++j) {
      auto w = params.row(l, j);
      for (std::size_t i = 0; i < layer.cols; ++i) next[i] += delta[j] * w[i];
    }
    const auto& z = t.preacts[l - 1];
    for (std::size_t i = 0; i < next.size(); ++i) next[i] *= z[i] > 0.0 ? 1.0 : kLeakySlope;
    delta = std::move(next);
  }
  return grad;
}

}  // namespace egfn::reference
