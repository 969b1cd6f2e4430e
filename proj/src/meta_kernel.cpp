#include "rangeseg/meta_kernel.hpp"

#include <cmath>

namespace rangeseg {

void MetaKernelParams::validate() const {
  weight_mlp.validate();
  if (weight_mlp.layers.empty())
    throw ShapeError("meta kernel: weight MLP has no layers");
  if (weight_mlp.layers.front().in_dim != 4)
    throw ShapeError("meta kernel: weight MLP input dimension must be 4");
  if (weight_mlp.layers.back().out_dim != value_channels)
    throw ShapeError("meta kernel: weight MLP output dimension must equal the "
                     "value channel count");
  const std::size_t agg_in = static_cast<std::size_t>(kMetaNeighbors) * value_channels;
  if (agg_weight.size() != static_cast<std::size_t>(out_channels) * agg_in)
    throw ShapeError("meta kernel: aggregator weight shape mismatch");
  if (agg_bias.size() != static_cast<std::size_t>(out_channels))
    throw ShapeError("meta kernel: aggregator bias shape mismatch");
}

std::size_t MetaKernelParams::parameter_count() const {
  std::size_t n = agg_weight.size() + agg_bias.size();
  for (const DenseLayer& l : weight_mlp.layers)
    n += l.weight.size() + l.bias.size();
  return n;
}

namespace {

void check_input(const MetaKernelInput& input, const MetaKernelParams& params) {
  const std::size_t plane = static_cast<std::size_t>(input.height) * input.width;
  if (input.geometry.size() != 4 * plane)
    throw ShapeError("meta kernel: geometry must be 4 x H x W");
  if (input.values.size() != static_cast<std::size_t>(params.value_channels) * plane)
    throw ShapeError("meta kernel: value tensor does not match value_channels");
  if (input.mask.size() != plane)
    throw ShapeError("meta kernel: mask must be H x W");
  for (float g : input.geometry)
    if (!std::isfinite(g))
      throw NumericError("meta kernel: non-finite geometry");
}

// Forward pass over one pixel's window: fills the concatenated modulated
// vector (25 * Cval). Invalid neighbors leave their segment zero.
struct WindowScratch {
  std::vector<double> concat;     // 25 * Cval
  std::vector<double> rel;        // 4
  std::vector<std::uint8_t> used; // per slot: neighbor contributed
  std::vector<int> neighbor_pix;  // per slot: flat pixel index or -1
  std::vector<double> mlp_a;      // ping-pong activation buffers
  std::vector<double> mlp_b;
};

// Allocation-free MLP evaluation into scratch buffers; same accumulation
// order as perceptron_forward, so results are bit-identical.
const double* mlp_eval(const DensePerceptron& mlp, const double* x, int in_dim,
                       WindowScratch& s) {
  const double* cur = x;
  int cur_dim = in_dim;
  double* out = s.mlp_a.data();
  double* spare = s.mlp_b.data();
  for (const DenseLayer& layer : mlp.layers) {
    for (int o = 0; o < layer.out_dim; ++o) {
      double acc = layer.bias[o];
      const double* row = layer.weight.data() + static_cast<std::size_t>(o) * layer.in_dim;
      for (int i = 0; i < cur_dim; ++i)
        acc += row[i] * cur[i];
      if (layer.activation == Activation::Relu)
        acc = acc > 0.0 ? acc : 0.0;
      else if (layer.activation == Activation::Sigmoid)
        acc = 1.0 / (1.0 + std::exp(-acc));
      out[o] = acc;
    }
    cur = out;
    cur_dim = layer.out_dim;
    std::swap(out, spare);
  }
  return cur;
}

std::size_t mlp_max_width(const DensePerceptron& mlp) {
  std::size_t width = 4;
  for (const DenseLayer& l : mlp.layers)
    width = std::max(width, static_cast<std::size_t>(l.out_dim));
  return width;
}

void window_forward(const MetaKernelInput& input, const MetaKernelParams& params,
                    int v, int u, WindowScratch& s) {
  const int cval = params.value_channels;
  const std::size_t plane = static_cast<std::size_t>(input.height) * input.width;
  const int center = v * input.width + u;
  const double rc = input.geometry[0 * plane + center];
  const double xc = input.geometry[1 * plane + center];
  const double yc = input.geometry[2 * plane + center];
  const double zc = input.geometry[3 * plane + center];

  std::fill(s.concat.begin(), s.concat.end(), 0.0);
  int slot = 0;
  for (int dy = -2; dy <= 2; ++dy) {
    for (int dx = -2; dx <= 2; ++dx, ++slot) {
      const int nv = v + dy;
      const int nu = u + dx;
      s.used[slot] = 0;
      s.neighbor_pix[slot] = -1;
      if (nv < 0 || nv >= input.height || nu < 0 || nu >= input.width)
        continue;
      const int npix = nv * input.width + nu;
      if (!input.mask[npix])
        continue;
      s.rel[0] = input.geometry[0 * plane + npix] - rc;
      s.rel[1] = input.geometry[1 * plane + npix] - xc;
      s.rel[2] = input.geometry[2 * plane + npix] - yc;
      s.rel[3] = input.geometry[3 * plane + npix] - zc;
      const double* w = mlp_eval(params.weight_mlp, s.rel.data(), 4, s);
      double* seg = s.concat.data() + static_cast<std::size_t>(slot) * cval;
      for (int c = 0; c < cval; ++c)
        seg[c] = w[c] * input.values[static_cast<std::size_t>(c) * plane + npix];
      s.used[slot] = 1;
      s.neighbor_pix[slot] = npix;
    }
  }
}

} // namespace

FeatureMap meta_kernel_forward(const MetaKernelInput& input,
                               const MetaKernelParams& params) {
  params.validate();
  check_input(input, params);

  const int cval = params.value_channels;
  const int cout = params.out_channels;
  const std::size_t agg_in = static_cast<std::size_t>(kMetaNeighbors) * cval;

  FeatureMap out(cout, input.height, input.width);
  WindowScratch s;
  s.concat.resize(agg_in);
  s.rel.resize(4);
  s.used.resize(kMetaNeighbors);
  s.neighbor_pix.resize(kMetaNeighbors);
  s.mlp_a.resize(mlp_max_width(params.weight_mlp));
  s.mlp_b.resize(s.mlp_a.size());

  const std::size_t plane = static_cast<std::size_t>(input.height) * input.width;
  for (int v = 0; v < input.height; ++v) {
    for (int u = 0; u < input.width; ++u) {
      window_forward(input, params, v, u, s);
      const std::size_t pix = static_cast<std::size_t>(v) * input.width + u;
      for (int oc = 0; oc < cout; ++oc) {
        double acc = params.agg_bias[oc];
        const double* row = params.agg_weight.data() + oc * agg_in;
        for (std::size_t k = 0; k < agg_in; ++k)
          acc += row[k] * s.concat[k];
        out.data[static_cast<std::size_t>(oc) * plane + pix] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

double meta_kernel_forward_sum(const MetaKernelInput& input,
                               const MetaKernelParams& params) {
  params.validate();
  check_input(input, params);

  const int cval = params.value_channels;
  const int cout = params.out_channels;
  const std::size_t agg_in = static_cast<std::size_t>(kMetaNeighbors) * cval;

  WindowScratch s;
  s.concat.resize(agg_in);
  s.rel.resize(4);
  s.used.resize(kMetaNeighbors);
  s.neighbor_pix.resize(kMetaNeighbors);
  s.mlp_a.resize(mlp_max_width(params.weight_mlp));
  s.mlp_b.resize(s.mlp_a.size());

  double total = 0.0;
  for (int v = 0; v < input.height; ++v) {
    for (int u = 0; u < input.width; ++u) {
      window_forward(input, params, v, u, s);
      for (int oc = 0; oc < cout; ++oc) {
        double acc = params.agg_bias[oc];
        const double* row = params.agg_weight.data() + oc * agg_in;
        for (std::size_t k = 0; k < agg_in; ++k)
          acc += row[k] * s.concat[k];
        total += acc;
      }
    }
  }
  return total;
}

namespace {

// Forward pass through the MLP keeping pre-activation values, then backprop
// of an output gradient into parameter and input gradients.
struct MlpTrace {
  std::vector<std::vector<double>> inputs; // activation entering each layer
  std::vector<std::vector<double>> pre;    // pre-activation per layer
  std::vector<double> output;
};

void mlp_forward_trace(const DensePerceptron& mlp, std::span<const double> x,
                       MlpTrace& trace) {
  trace.inputs.resize(mlp.layers.size());
  trace.pre.resize(mlp.layers.size());
  std::vector<double> cur(x.begin(), x.end());
  for (std::size_t li = 0; li < mlp.layers.size(); ++li) {
    const DenseLayer& layer = mlp.layers[li];
    trace.inputs[li] = cur;
    std::vector<double>& z = trace.pre[li];
    z.assign(static_cast<std::size_t>(layer.out_dim), 0.0);
    for (int o = 0; o < layer.out_dim; ++o) {
      double acc = layer.bias[o];
      const double* row = layer.weight.data() + static_cast<std::size_t>(o) * layer.in_dim;
      for (int i = 0; i < layer.in_dim; ++i)
        acc += row[i] * cur[i];
      z[o] = acc;
    }
    cur.assign(z.begin(), z.end());
    for (double& vv : cur) {
      if (layer.activation == Activation::Relu)
        vv = vv > 0.0 ? vv : 0.0;
      else if (layer.activation == Activation::Sigmoid)
        vv = 1.0 / (1.0 + std::exp(-vv));
    }
  }
  trace.output = cur;
}

void mlp_backward_accumulate(const DensePerceptron& mlp, const MlpTrace& trace,
                             std::span<const double> d_out,
                             std::vector<std::vector<double>>& grad_w,
                             std::vector<std::vector<double>>& grad_b) {
  std::vector<double> delta(d_out.begin(), d_out.end());
  for (std::size_t li = mlp.layers.size(); li-- > 0;) {
    const DenseLayer& layer = mlp.layers[li];
    // d(activation)/d(pre-activation)
    for (int o = 0; o < layer.out_dim; ++o) {
      const double z = trace.pre[li][o];
      if (layer.activation == Activation::Relu)
        delta[o] *= z > 0.0 ? 1.0 : 0.0;
      else if (layer.activation == Activation::Sigmoid) {
        const double sig = 1.0 / (1.0 + std::exp(-z));
        delta[o] *= sig * (1.0 - sig);
      }
    }
    const std::vector<double>& in = trace.inputs[li];
    for (int o = 0; o < layer.out_dim; ++o) {
      grad_b[li][o] += delta[o];
      double* grow = grad_w[li].data() + static_cast<std::size_t>(o) * layer.in_dim;
      for (int i = 0; i < layer.in_dim; ++i)
        grow[i] += delta[o] * in[i];
    }
    if (li == 0)
      break;
    std::vector<double> prev(static_cast<std::size_t>(layer.in_dim), 0.0);
    for (int o = 0; o < layer.out_dim; ++o) {
      const double* row = layer.weight.data() + static_cast<std::size_t>(o) * layer.in_dim;
      for (int i = 0; i < layer.in_dim; ++i)
        prev[i] += delta[o] * row[i];
    }
    delta = std::move(prev);
  }
}

} // namespace

MetaKernelGrad meta_kernel_backward(const MetaKernelInput& input,
                                    const MetaKernelParams& params,
                                    const FeatureMap& upstream) {
  params.validate();
  check_input(input, params);
  const std::size_t plane = static_cast<std::size_t>(input.height) * input.width;
  if (upstream.channels != params.out_channels || upstream.height != input.height ||
      upstream.width != input.width)
    throw ShapeError("meta kernel backward: upstream shape mismatch");

  const int cval = params.value_channels;
  const int cout = params.out_channels;
  const std::size_t agg_in = static_cast<std::size_t>(kMetaNeighbors) * cval;

  MetaKernelGrad grad;
  grad.mlp_weight.resize(params.weight_mlp.layers.size());
  grad.mlp_bias.resize(params.weight_mlp.layers.size());
  for (std::size_t li = 0; li < params.weight_mlp.layers.size(); ++li) {
    grad.mlp_weight[li].assign(params.weight_mlp.layers[li].weight.size(), 0.0);
    grad.mlp_bias[li].assign(params.weight_mlp.layers[li].bias.size(), 0.0);
  }
  grad.agg_weight.assign(params.agg_weight.size(), 0.0);
  grad.agg_bias.assign(params.agg_bias.size(), 0.0);
  grad.values.assign(input.values.size(), 0.0);

  WindowScratch s;
  s.concat.resize(agg_in);
  s.rel.resize(4);
  s.used.resize(kMetaNeighbors);
  s.neighbor_pix.resize(kMetaNeighbors);
  s.mlp_a.resize(mlp_max_width(params.weight_mlp));
  s.mlp_b.resize(s.mlp_a.size());

  std::vector<double> d_concat(agg_in);
  std::vector<double> d_w(static_cast<std::size_t>(cval));
  MlpTrace trace;

  for (int v = 0; v < input.height; ++v) {
    for (int u = 0; u < input.width; ++u) {
      window_forward(input, params, v, u, s);
      const std::size_t pix = static_cast<std::size_t>(v) * input.width + u;

      // Aggregator gradients and gradient into the concatenated vector.
      std::fill(d_concat.begin(), d_concat.end(), 0.0);
      for (int oc = 0; oc < cout; ++oc) {
        const double up = upstream.data[static_cast<std::size_t>(oc) * plane + pix];
        grad.agg_bias[oc] += up;
        double* gw = grad.agg_weight.data() + oc * agg_in;
        const double* row = params.agg_weight.data() + oc * agg_in;
        for (std::size_t k = 0; k < agg_in; ++k) {
          gw[k] += up * s.concat[k];
          d_concat[k] += up * row[k];
        }
      }

      // Per-neighbor split: mod = w (.) value.
      for (int slot = 0; slot < kMetaNeighbors; ++slot) {
        if (!s.used[slot])
          continue;
        const int npix = s.neighbor_pix[slot];
        const double* d_mod = d_concat.data() + static_cast<std::size_t>(slot) * cval;

        // Recompute rel and the MLP trace for this neighbor.
        const double rc = input.geometry[0 * plane + pix];
        const double xc = input.geometry[1 * plane + pix];
        const double yc = input.geometry[2 * plane + pix];
        const double zc = input.geometry[3 * plane + pix];
        s.rel[0] = input.geometry[0 * plane + npix] - rc;
        s.rel[1] = input.geometry[1 * plane + npix] - xc;
        s.rel[2] = input.geometry[2 * plane + npix] - yc;
        s.rel[3] = input.geometry[3 * plane + npix] - zc;
        mlp_forward_trace(params.weight_mlp, s.rel, trace);

        for (int c = 0; c < cval; ++c) {
          const double value = input.values[static_cast<std::size_t>(c) * plane + npix];
          d_w[c] = d_mod[c] * value;
          grad.values[static_cast<std::size_t>(c) * plane + npix] +=
              d_mod[c] * trace.output[c];
        }
        mlp_backward_accumulate(params.weight_mlp, trace, d_w, grad.mlp_weight,
                                grad.mlp_bias);
      }
    }
  }
  return grad;
}

std::vector<double> flatten_params(const MetaKernelParams& params) {
  std::vector<double> flat;
  flat.reserve(params.parameter_count());
  for (const DenseLayer& l : params.weight_mlp.layers) {
    flat.insert(flat.end(), l.weight.begin(), l.weight.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  flat.insert(flat.end(), params.agg_weight.begin(), params.agg_weight.end());
  flat.insert(flat.end(), params.agg_bias.begin(), params.agg_bias.end());
  return flat;
}

void unflatten_params(MetaKernelParams& params, std::span<const double> flat) {
  if (flat.size() != params.parameter_count())
    throw ShapeError("meta kernel: flat parameter vector has wrong length");
  std::size_t off = 0;
  for (DenseLayer& l : params.weight_mlp.layers) {
    std::copy_n(flat.begin() + off, l.weight.size(), l.weight.begin());
    off += l.weight.size();
    std::copy_n(flat.begin() + off, l.bias.size(), l.bias.begin());
    off += l.bias.size();
  }
  std::copy_n(flat.begin() + off, params.agg_weight.size(), params.agg_weight.begin());
  off += params.agg_weight.size();
  std::copy_n(flat.begin() + off, params.agg_bias.size(), params.agg_bias.begin());
}

std::vector<double> flatten_grad(const MetaKernelGrad& grad) {
  std::vector<double> flat;
  for (std::size_t li = 0; li < grad.mlp_weight.size(); ++li) {
    flat.insert(flat.end(), grad.mlp_weight[li].begin(), grad.mlp_weight[li].end());
    flat.insert(flat.end(), grad.mlp_bias[li].begin(), grad.mlp_bias[li].end());
  }
  flat.insert(flat.end(), grad.agg_weight.begin(), grad.agg_weight.end());
  flat.insert(flat.end(), grad.agg_bias.begin(), grad.agg_bias.end());
  return flat;
}

MetaKernelParams make_meta_kernel_params(int value_channels, int mlp_hidden,
                                         int out_channels, SplitMix64& rng) {
  MetaKernelParams params;
  params.value_channels = value_channels;
  params.out_channels = out_channels;
  params.weight_mlp.layers.push_back(
      make_dense_layer(4, mlp_hidden, Activation::Relu, rng));
  params.weight_mlp.layers.push_back(
      make_dense_layer(mlp_hidden, value_channels, Activation::None, rng));
  const std::size_t agg_in = static_cast<std::size_t>(kMetaNeighbors) * value_channels;
  const double limit = std::sqrt(1.0 / static_cast<double>(agg_in));
  params.agg_weight.resize(static_cast<std::size_t>(out_channels) * agg_in);
  for (double& w : params.agg_weight)
    w = rng.uniform(-limit, limit);
  params.agg_bias.assign(static_cast<std::size_t>(out_channels), 0.0);
  return params;
}

} // namespace rangeseg
