#include "ffc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>
#include <variant>

#include "ffc/data.hpp"
#include "ffc/error.hpp"

namespace ffc {
namespace {

struct Dense {
  std::size_t in, out, weights, bias;  // weights: [out x in] row-major
};

// 'same' zero padding, stride 1, odd kernel.
struct Conv {
  std::size_t cin, cout, height, width, kernel, weights, bias;  // weights: [cout x cin x k x k]
};

struct Relu {
  std::size_t size;
};

// 2x2 average pooling with stride 2 over [c, h, w].
struct AvgPool {
  std::size_t channels, height, width;
};

using Layer = std::variant<Dense, Conv, Relu, AvgPool>;

std::size_t output_size(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> std::size_t {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Dense>) return l.out;
        if constexpr (std::is_same_v<T, Conv>) return l.cout * l.height * l.width;
        if constexpr (std::is_same_v<T, Relu>) return l.size;
        if constexpr (std::is_same_v<T, AvgPool>) return l.channels * (l.height / 2) * (l.width / 2);
      },
      layer);
}

struct Network {
  std::vector<Layer> layers;
  std::size_t parameters = 0;

  explicit Network(const ModelSpec& spec) {
    auto dense = [&](std::size_t in, std::size_t out) {
      layers.push_back(Dense{in, out, parameters, parameters + in * out});
      parameters += in * out + out;
    };
    if (spec.arch == Architecture::mlp) {
      std::size_t width = spec.input_size();
      for (std::size_t h : spec.hidden) {
        dense(width, h);
        layers.push_back(Relu{h});
        width = h;
      }
      dense(width, spec.classes);
      return;
    }
    const auto [c, h, w] = spec.input_shape;
    std::size_t cin = c;
    for (std::size_t cout : spec.conv_channels) {
      const std::size_t k = spec.kernel;
      layers.push_back(Conv{cin, cout, h, w, k, parameters, parameters + cout * cin * k * k});
      parameters += cout * cin * k * k + cout;
      layers.push_back(Relu{cout * h * w});
      cin = cout;
    }
    layers.push_back(AvgPool{cin, h, w});
    dense(cin * (h / 2) * (w / 2), spec.classes);
  }

  // acts[0] is the input, acts[i + 1] the output of layer i.
  void forward(std::span<const double> p, std::span<const double> x, std::vector<std::vector<double>>& acts) const {
    acts.resize(layers.size() + 1);
    acts[0].assign(x.begin(), x.end());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& in = acts[i];
      auto& out = acts[i + 1];
      out.assign(output_size(layers[i]), 0.0);
      std::visit([&](const auto& l) { forward_layer(l, p, in, out); }, layers[i]);
    }
  }

  // Propagates `grad` (d loss / d output) back to the input. Parameter gradients
  // are accumulated into `dparams` when it is non-empty.
  std::vector<double> backward(std::span<const double> p, const std::vector<std::vector<double>>& acts,
                               std::vector<double> grad, std::span<double> dparams) const {
    for (std::size_t i = layers.size(); i-- > 0;) {
      std::vector<double> din(acts[i].size(), 0.0);
      std::visit([&](const auto& l) { backward_layer(l, p, acts[i], acts[i + 1], grad, din, dparams); }, layers[i]);
      grad = std::move(din);
    }
    return grad;
  }

 private:
  static void forward_layer(const Dense& l, std::span<const double> p, const std::vector<double>& in,
                            std::vector<double>& out) {
    for (std::size_t o = 0; o < l.out; ++o) {
      const double* w = p.data() + l.weights + o * l.in;
      double acc = p[l.bias + o];
      for (std::size_t j = 0; j < l.in; ++j) acc += w[j] * in[j];
      out[o] = acc;
    }
  }

  static void backward_layer(const Dense& l, std::span<const double> p, const std::vector<double>& in,
                             const std::vector<double>&, const std::vector<double>& g, std::vector<double>& din,
                             std::span<double> dp) {
    for (std::size_t o = 0; o < l.out; ++o) {
      const double go = g[o];
      if (go == 0.0) continue;
      const double* w = p.data() + l.weights + o * l.in;
      for (std::size_t j = 0; j < l.in; ++j) din[j] += w[j] * go;
      if (!dp.empty()) {
        double* dw = dp.data() + l.weights + o * l.in;
        for (std::size_t j = 0; j < l.in; ++j) dw[j] += in[j] * go;
        dp[l.bias + o] += go;
      }
    }
  }

  static void forward_layer(const Conv& l, std::span<const double> p, const std::vector<double>& in,
                            std::vector<double>& out) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(l.kernel / 2);
    const auto H = static_cast<std::ptrdiff_t>(l.height), W = static_cast<std::ptrdiff_t>(l.width);
    const auto K = static_cast<std::ptrdiff_t>(l.kernel);
    for (std::size_t co = 0; co < l.cout; ++co) {
      double* o = out.data() + co * l.height * l.width;
      std::fill(o, o + l.height * l.width, p[l.bias + co]);
      for (std::size_t ci = 0; ci < l.cin; ++ci) {
        const double* x = in.data() + ci * l.height * l.width;
        const double* w = p.data() + l.weights + (co * l.cin + ci) * l.kernel * l.kernel;
        for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
          for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
            const double wk = w[ky * K + kx];
            const std::ptrdiff_t dy = ky - pad, dx = kx - pad;
            for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, -dy); y < std::min(H, H - dy); ++y) {
              for (std::ptrdiff_t xx = std::max<std::ptrdiff_t>(0, -dx); xx < std::min(W, W - dx); ++xx) {
                o[y * W + xx] += wk * x[(y + dy) * W + xx + dx];
              }
            }
          }
        }
      }
    }
  }

  static void backward_layer(const Conv& l, std::span<const double> p, const std::vector<double>& in,
                             const std::vector<double>&, const std::vector<double>& g, std::vector<double>& din,
                             std::span<double> dp) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(l.kernel / 2);
    const auto H = static_cast<std::ptrdiff_t>(l.height), W = static_cast<std::ptrdiff_t>(l.width);
    const auto K = static_cast<std::ptrdiff_t>(l.kernel);
    for (std::size_t co = 0; co < l.cout; ++co) {
      const double* go = g.data() + co * l.height * l.width;
      if (!dp.empty()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < l.height * l.width; ++i) acc += go[i];
        dp[l.bias + co] += acc;
      }
      for (std::size_t ci = 0; ci < l.cin; ++ci) {
        const double* x = in.data() + ci * l.height * l.width;
        double* dx_out = din.data() + ci * l.height * l.width;
        const std::size_t woff = l.weights + (co * l.cin + ci) * l.kernel * l.kernel;
        for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
          for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
            const double wk = p[woff + ky * K + kx];
            const std::ptrdiff_t dy = ky - pad, dx = kx - pad;
            double dw = 0.0;
            for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, -dy); y < std::min(H, H - dy); ++y) {
              for (std::ptrdiff_t xx = std::max<std::ptrdiff_t>(0, -dx); xx < std::min(W, W - dx); ++xx) {
                const double gv = go[y * W + xx];
                dx_out[(y + dy) * W + xx + dx] += wk * gv;
                dw += gv * x[(y + dy) * W + xx + dx];
              }
            }
            if (!dp.empty()) dp[woff + ky * K + kx] += dw;
          }
        }
      }
    }
  }

  static void forward_layer(const Relu& l, std::span<const double>, const std::vector<double>& in,
                            std::vector<double>& out) {
    for (std::size_t i = 0; i < l.size; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  }

  // Subgradient at zero is zero.
  static void backward_layer(const Relu& l, std::span<const double>, const std::vector<double>& in,
                             const std::vector<double>&, const std::vector<double>& g, std::vector<double>& din,
                             std::span<double>) {
    for (std::size_t i = 0; i < l.size; ++i) din[i] = in[i] > 0.0 ? g[i] : 0.0;
  }

  static void forward_layer(const AvgPool& l, std::span<const double>, const std::vector<double>& in,
                            std::vector<double>& out) {
    const std::size_t oh = l.height / 2, ow = l.width / 2;
    for (std::size_t c = 0; c < l.channels; ++c) {
      const double* x = in.data() + c * l.height * l.width;
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const std::size_t base = 2 * y * l.width + 2 * xx;
          out[(c * oh + y) * ow + xx] = 0.25 * (x[base] + x[base + 1] + x[base + l.width] + x[base + l.width + 1]);
        }
      }
    }
  }

  static void backward_layer(const AvgPool& l, std::span<const double>, const std::vector<double>&,
                             const std::vector<double>&, const std::vector<double>& g, std::vector<double>& din,
                             std::span<double>) {
    const std::size_t oh = l.height / 2, ow = l.width / 2;
    for (std::size_t c = 0; c < l.channels; ++c) {
      double* d = din.data() + c * l.height * l.width;
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const double gv = 0.25 * g[(c * oh + y) * ow + xx];
          const std::size_t base = 2 * y * l.width + 2 * xx;
          d[base] += gv;
          d[base + 1] += gv;
          d[base + l.width] += gv;
          d[base + l.width + 1] += gv;
        }
      }
    }
  }
};

void check_batch(const Checkpoint& model, const Tensor& batch) {
  const auto& s = model.spec.input_shape;
  if (batch.rank() != 4 || batch.dim(1) != s[0] || batch.dim(2) != s[1] || batch.dim(3) != s[2]) {
    throw UsageError("batch shape " + shape_string(batch.shape()) + " does not match model input [B," +
                     std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + "]");
  }
}

void check_input(const Checkpoint& model, std::span<const double> input) {
  if (input.size() != model.spec.input_size()) {
    throw UsageError("input has " + std::to_string(input.size()) + " values, model expects " +
                     std::to_string(model.spec.input_size()));
  }
}

void check_targets(const Checkpoint& model, std::size_t batch, std::span<const std::size_t> targets) {
  if (targets.size() != batch) throw UsageError("target count does not match batch size");
  for (auto t : targets) {
    if (t >= model.spec.classes) throw UsageError("target class " + std::to_string(t) + " out of range");
  }
}

// d(-log softmax_t) / d logits = softmax - onehot(t). The target entry is
// formed as -sum_{k != t} p_k so it keeps full precision when p_t rounds to 1.
std::vector<double> ce_logit_grad(std::span<const double> logits, std::size_t target, double scale) {
  auto g = softmax(logits);
  double others = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (k != target) others += g[k];
  g[target] = -others;
  for (auto& v : g) v *= scale;
  return g;
}

// log-sum-exp with the max term split off: log1p keeps the loss positive and
// accurate down to exp(-745) instead of rounding to zero near a margin of 37.
double ce_one(std::span<const double> logits, std::size_t target) {
  const auto top = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  double rest = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k)
    if (k != top) rest += std::exp(logits[k] - logits[top]);
  return std::log1p(rest) + (logits[top] - logits[target]);
}

}  // namespace

std::string to_string(Architecture arch) { return arch == Architecture::mlp ? "mlp" : "convnet"; }

Architecture parse_architecture(const std::string& name) {
  if (name == "mlp") return Architecture::mlp;
  if (name == "convnet") return Architecture::convnet;
  throw UsageError("unknown architecture '" + name + "' (expected mlp or convnet)");
}

std::size_t ModelSpec::parameter_count() const {
  validate();
  return Network(*this).parameters;
}

void ModelSpec::validate() const {
  if (input_shape[0] == 0 || input_shape[1] == 0 || input_shape[2] == 0) {
    throw UsageError("model input shape must be positive");
  }
  if (classes < 1) throw UsageError("model needs at least one class");
  if (activation != "relu") throw UsageError("unsupported activation '" + activation + "'");
  if (arch == Architecture::mlp) {
    for (auto h : hidden)
      if (h == 0) throw UsageError("MLP hidden widths must be positive");
    return;
  }
  if (conv_channels.size() != 2) throw UsageError("convnet needs exactly two convolution channel counts");
  for (auto c : conv_channels)
    if (c == 0) throw UsageError("convnet channel counts must be positive");
  if (kernel == 0 || kernel % 2 == 0) throw UsageError("convnet kernel size must be odd");
  if (input_shape[1] % 2 || input_shape[2] % 2) throw UsageError("convnet input height and width must be even");
}

void Checkpoint::validate() const {
  spec.validate();
  if (parameters.size() != spec.parameter_count()) {
    throw DataError("checkpoint holds " + std::to_string(parameters.size()) + " parameters, spec needs " +
                    std::to_string(spec.parameter_count()));
  }
  for (double p : parameters)
    if (!std::isfinite(p)) throw NumericalError("checkpoint contains a non-finite parameter");
}

std::vector<double> forward_one(const Checkpoint& model, std::span<const double> input) {
  check_input(model, input);
  const Network net(model.spec);
  std::vector<std::vector<double>> acts;
  net.forward(model.parameters, input, acts);
  return acts.back();
}

std::size_t predict_one(const Checkpoint& model, std::span<const double> input) {
  const auto logits = forward_one(model, input);
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

Tensor forward(const Checkpoint& model, const Tensor& batch) {
  check_batch(model, batch);
  const Network net(model.spec);
  const std::size_t B = batch.dim(0), K = model.spec.classes;
  Tensor out({B, K});
  std::vector<std::vector<double>> acts;
  for (std::size_t b = 0; b < B; ++b) {
    net.forward(model.parameters, batch.slice(b), acts);
    std::copy(acts.back().begin(), acts.back().end(), out.slice(b).begin());
  }
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += out[i] = std::exp(logits[i] - mx);
  for (auto& v : out) v /= sum;
  return out;
}

Tensor softmax_confidence(const Tensor& logits) {
  if (logits.rank() != 2) throw UsageError("softmax expects [B,K] logits");
  Tensor out(logits.shape());
  for (std::size_t b = 0; b < logits.dim(0); ++b) {
    const auto row = softmax(logits.slice(b));
    std::copy(row.begin(), row.end(), out.slice(b).begin());
  }
  return out;
}

double cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  if (logits.rank() != 2) throw UsageError("cross_entropy expects [B,K] logits");
  if (targets.size() != logits.dim(0)) throw UsageError("target count does not match batch size");
  double total = 0.0;
  for (std::size_t b = 0; b < logits.dim(0); ++b) {
    if (targets[b] >= logits.dim(1)) throw UsageError("target class out of range");
    total += ce_one(logits.slice(b), targets[b]);
  }
  return total / static_cast<double>(logits.dim(0));
}

LossGradient loss_gradient_one(const Checkpoint& model, std::span<const double> input, std::size_t target) {
  check_input(model, input);
  check_targets(model, 1, std::span(&target, 1));
  const Network net(model.spec);
  std::vector<std::vector<double>> acts;
  net.forward(model.parameters, input, acts);
  LossGradient out;
  out.loss = ce_one(acts.back(), target);
  out.gradient = net.backward(model.parameters, acts, ce_logit_grad(acts.back(), target, 1.0), {});
  return out;
}

std::vector<double> logit_gradient_one(const Checkpoint& model, std::span<const double> input, std::size_t target) {
  check_input(model, input);
  check_targets(model, 1, std::span(&target, 1));
  const Network net(model.spec);
  std::vector<std::vector<double>> acts;
  net.forward(model.parameters, input, acts);
  std::vector<double> seed(model.spec.classes, 0.0);
  seed[target] = 1.0;
  return net.backward(model.parameters, acts, std::move(seed), {});
}

Tensor input_gradient(const Checkpoint& model, const Tensor& batch, std::span<const std::size_t> targets) {
  check_batch(model, batch);
  const std::size_t B = batch.dim(0);
  check_targets(model, B, targets);
  const Network net(model.spec);
  Tensor out(batch.shape());
  std::vector<std::vector<double>> acts;
  for (std::size_t b = 0; b < B; ++b) {
    net.forward(model.parameters, batch.slice(b), acts);
    auto g = net.backward(model.parameters, acts, ce_logit_grad(acts.back(), targets[b], 1.0 / double(B)), {});
    std::copy(g.begin(), g.end(), out.slice(b).begin());
  }
  return out;
}

std::vector<double> parameter_gradient(const Checkpoint& model, const Tensor& batch,
                                       std::span<const std::size_t> targets) {
  check_batch(model, batch);
  const std::size_t B = batch.dim(0);
  check_targets(model, B, targets);
  const Network net(model.spec);
  std::vector<double> dparams(model.parameters.size(), 0.0);
  std::vector<std::vector<double>> acts;
  for (std::size_t b = 0; b < B; ++b) {
    net.forward(model.parameters, batch.slice(b), acts);
    net.backward(model.parameters, acts, ce_logit_grad(acts.back(), targets[b], 1.0 / double(B)), dparams);
  }
  return dparams;
}

Checkpoint initialize(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Network net(spec);
  Checkpoint ck{spec, std::vector<double>(net.parameters, 0.0), {}};
  ck.meta.seed = seed;
  std::mt19937_64 rng(seed);
  for (const auto& layer : net.layers) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          std::size_t fan_in = 0, count = 0, offset = 0;
          if constexpr (std::is_same_v<T, Dense>) {
            fan_in = l.in, count = l.in * l.out, offset = l.weights;
          } else if constexpr (std::is_same_v<T, Conv>) {
            fan_in = l.cin * l.kernel * l.kernel, count = l.cout * fan_in, offset = l.weights;
          }
          if (count == 0) return;
          std::uniform_real_distribution<double> dist(-1.0, 1.0);
          const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
          for (std::size_t i = 0; i < count; ++i) ck.parameters[offset + i] = bound * dist(rng);
        },
        layer);
  }
  return ck;
}

double accuracy(const Checkpoint& model, const LabeledDataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += predict_one(model, data.samples[i].values()) == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

double dataset_loss(const Checkpoint& model, const LabeledDataset& data) {
  if (data.size() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) total += ce_one(forward_one(model, data.samples[i].values()), data.labels[i]);
  return total / static_cast<double>(data.size());
}

}  // namespace

Checkpoint train(const ModelSpec& spec, const LabeledDataset& data, const TrainOptions& options) {
  data.validate();
  if (data.size() == 0) throw DataError("cannot train on an empty dataset");
  const auto& s = data.samples[0].shape();
  if (s.size() != 3 || s[0] != spec.input_shape[0] || s[1] != spec.input_shape[1] || s[2] != spec.input_shape[2]) {
    throw UsageError("dataset sample shape " + shape_string(s) + " does not match the model input");
  }
  if (data.classes > spec.classes) throw UsageError("dataset has more classes than the model outputs");
  if (options.batch_size == 0) throw UsageError("batch size must be positive");
  if (!(options.step_size > 0.0)) throw UsageError("step size must be positive");

  Checkpoint ck = initialize(spec, options.seed);
  ck.meta.epochs = options.epochs;
  ck.meta.step_size = options.step_size;
  ck.meta.batch_size = options.batch_size;

  const Network net(spec);
  // Shuffling uses a stream separate from initialization.
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> dparams(ck.parameters.size());
  std::vector<std::vector<double>> acts;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(dparams.begin(), dparams.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const auto idx = order[i];
        net.forward(ck.parameters, data.samples[idx].values(), acts);
        const double loss = ce_one(acts.back(), data.labels[idx]);
        if (!std::isfinite(loss)) {
          throw NumericalError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
        }
        net.backward(ck.parameters, acts, ce_logit_grad(acts.back(), data.labels[idx], scale), dparams);
      }
      for (std::size_t p = 0; p < dparams.size(); ++p) ck.parameters[p] -= options.step_size * dparams[p];
    }
    const double loss = dataset_loss(ck, data);
    if (!std::isfinite(loss)) throw NumericalError("training diverged: non-finite loss after epoch " + std::to_string(epoch));
    ck.meta.loss_history.push_back(loss);
    ck.meta.accuracy_history.push_back(accuracy(ck, data));
  }
  ck.meta.final_loss = ck.meta.loss_history.empty() ? dataset_loss(ck, data) : ck.meta.loss_history.back();
  ck.meta.final_accuracy = ck.meta.accuracy_history.empty() ? accuracy(ck, data) : ck.meta.accuracy_history.back();
  if (!std::isfinite(ck.meta.final_loss)) throw NumericalError("training produced a non-finite loss");
  return ck;
}

std::uint64_t parameter_hash(const Checkpoint& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double p : model.parameters) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &p, sizeof(double));
    for (auto b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace ffc
