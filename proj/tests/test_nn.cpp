#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "ffc/data.hpp"
#include "ffc/error.hpp"
#include "ffc/nn.hpp"
#include "support.hpp"

using namespace ffc;

namespace {

Checkpoint small_convnet(std::uint64_t seed) {
  ModelSpec spec;
  spec.arch = Architecture::convnet;
  spec.input_shape = {2, 8, 8};
  spec.classes = 3;
  spec.conv_channels = {3, 4};
  auto ck = initialize(spec, seed);
  // Nonzero biases so the ReLUs see both signs.
  std::mt19937_64 rng(seed + 100);
  for (auto& p : ck.parameters) p += 0.05 * std::uniform_real_distribution<double>(-1, 1)(rng);
  return ck;
}

Checkpoint small_mlp(std::uint64_t seed) {
  ModelSpec spec;
  spec.input_shape = {1, 4, 4};
  spec.classes = 3;
  spec.hidden = {7, 5};
  return initialize(spec, seed);
}

// Central differences of the batch cross-entropy with respect to every input coordinate.
std::vector<double> fd_input_gradient(const Checkpoint& ck, const Tensor& batch, const std::vector<std::size_t>& t,
                                      double h) {
  std::vector<double> g(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tensor p = batch, m = batch;
    p[i] += h;
    m[i] -= h;
    g[i] = (cross_entropy(forward(ck, p), t) - cross_entropy(forward(ck, m), t)) / (2 * h);
  }
  return g;
}

bool close(double a, double b, double rel, double floor) {
  const double d = std::abs(a - b);
  return d <= floor || d <= rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace

TEST_CASE("all-zero parameters give all-zero logits") {
  ModelSpec spec;
  spec.input_shape = {1, 4, 4};
  spec.classes = 3;
  spec.hidden = {5};
  Checkpoint ck{spec, std::vector<double>(spec.parameter_count(), 0.0), {}};
  std::mt19937_64 rng(1);
  const Tensor out = forward(ck, Tensor({2, 1, 4, 4}, oracle::random_values(rng, 32)));
  CHECK(out.shape() == std::vector<std::size_t>{2, 3});
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("a single linear layer computes W x + b") {
  std::mt19937_64 rng(2);
  const auto w = oracle::random_values(rng, 3 * 8);
  const auto b = oracle::random_values(rng, 3);
  const Checkpoint ck = oracle::linear_model({2, 2, 2}, 3, w, b);
  const auto x = oracle::random_values(rng, 8);
  const auto logits = forward_one(ck, x);
  for (std::size_t k = 0; k < 3; ++k) {
    double expect = b[k];
    for (std::size_t j = 0; j < 8; ++j) expect += w[k * 8 + j] * x[j];
    CHECK(std::abs(logits[k] - expect) < 1e-12);
  }
}

TEST_CASE("forward rejects mismatched shapes") {
  const Checkpoint ck = small_mlp(1);
  CHECK_THROWS_AS(forward(ck, Tensor({1, 1, 4, 5})), UsageError);
  CHECK_THROWS_AS(forward(ck, Tensor({16})), UsageError);
}

TEST_CASE("forward is deterministic and does not touch parameters") {
  const Checkpoint ck = small_convnet(3);
  const auto before = parameter_hash(ck);
  std::mt19937_64 rng(3);
  const Tensor x({3, 2, 8, 8}, oracle::random_values(rng, 384));
  CHECK(forward(ck, x) == forward(ck, x));
  CHECK(parameter_hash(ck) == before);
}

TEST_CASE("softmax examples") {
  const auto p = softmax(std::vector<double>{0.0, 0.0});
  CHECK(p[0] == 0.5);
  CHECK(p[1] == 0.5);
  const auto q = softmax(std::vector<double>{1000.0, 0.0});
  CHECK(std::isfinite(q[0]));
  CHECK(q[0] == doctest::Approx(1.0));
  CHECK(q[1] < 1e-300);

  std::mt19937_64 rng(4);
  const auto z = oracle::random_values(rng, 12, -5, 5);
  const Tensor s = softmax_confidence(Tensor({3, 4}, z));
  for (std::size_t b = 0; b < 3; ++b) {
    double denom = 0.0, sum = 0.0;
    for (std::size_t k = 0; k < 4; ++k) denom += std::exp(z[b * 4 + k]);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(std::abs(s[b * 4 + k] - std::exp(z[b * 4 + k]) / denom) < 1e-12);
      CHECK(s[b * 4 + k] >= 0.0);
      sum += s[b * 4 + k];
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("cross entropy examples") {
  const std::vector<std::size_t> t0{0};
  CHECK(cross_entropy(Tensor({1, 2}, {0.0, 0.0}), t0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const double tiny = cross_entropy(Tensor({1, 2}, {800.0, 0.0}), t0);
  CHECK(tiny >= 0.0);
  CHECK(tiny < 1e-300);
  // Below the margin where 1 + e^-m rounds to 1, the loss stays accurate.
  CHECK(cross_entropy(Tensor({1, 2}, {50.0, 0.0}), t0) == doctest::Approx(std::exp(-50.0)).epsilon(1e-12));

  std::mt19937_64 rng(5);
  const auto z = oracle::random_values(rng, 15, -3, 3);
  const std::vector<std::size_t> t{0, 4, 2};
  double expect = 0.0;
  for (std::size_t b = 0; b < 3; ++b) {
    double lse = 0.0;
    for (std::size_t k = 0; k < 5; ++k) lse += std::exp(z[b * 5 + k]);
    expect += std::log(lse) - z[b * 5 + t[b]];
  }
  CHECK(std::abs(cross_entropy(Tensor({3, 5}, z), t) - expect / 3.0) < 1e-12);
  CHECK_THROWS_AS(cross_entropy(Tensor({1, 2}, {0.0, 0.0}), std::vector<std::size_t>{2}), UsageError);
}

TEST_CASE("input gradient of a constant model is zero") {
  const Checkpoint ck = oracle::constant_model({1, 3, 3}, {0.3, -1.0});
  std::mt19937_64 rng(6);
  const Tensor g = input_gradient(ck, Tensor({2, 1, 3, 3}, oracle::random_values(rng, 18)), std::vector<std::size_t>{0, 1});
  for (double v : g.values()) CHECK(v == 0.0);
}

TEST_CASE("input gradient of linear softmax is (p - onehot)^T W") {
  std::mt19937_64 rng(7);
  const std::size_t D = 6, K = 4;
  const auto w = oracle::random_values(rng, K * D);
  const auto b = oracle::random_values(rng, K);
  const Checkpoint ck = oracle::linear_model({1, 2, 3}, K, w, b);
  const auto x = oracle::random_values(rng, D);
  const std::size_t target = 2;
  const auto p = softmax(forward_one(ck, x));
  const Tensor g = input_gradient(ck, Tensor({1, 1, 2, 3}, x), std::vector<std::size_t>{target});
  for (std::size_t j = 0; j < D; ++j) {
    double expect = 0.0;
    for (std::size_t k = 0; k < K; ++k) expect += (p[k] - (k == target ? 1.0 : 0.0)) * w[k * D + j];
    CHECK(std::abs(g[j] - expect) < 1e-10);
  }
}

TEST_CASE("input gradient matches finite differences") {
  std::mt19937_64 rng(8);
  SUBCASE("convnet 8x8") {
    const Checkpoint ck = small_convnet(9);
    const Tensor x({2, 2, 8, 8}, oracle::random_values(rng, 256));
    const std::vector<std::size_t> t{1, 2};
    const Tensor g = input_gradient(ck, x, t);
    const auto fd = fd_input_gradient(ck, x, t, 1e-5);
    for (std::size_t i = 0; i < fd.size(); ++i) CHECK_MESSAGE(close(g[i], fd[i], 1e-4, 1e-7), i);
  }
  SUBCASE("mlp") {
    const Checkpoint ck = small_mlp(10);
    const Tensor x({3, 1, 4, 4}, oracle::random_values(rng, 48));
    const std::vector<std::size_t> t{0, 1, 2};
    const Tensor g = input_gradient(ck, x, t);
    const auto fd = fd_input_gradient(ck, x, t, 1e-5);
    for (std::size_t i = 0; i < fd.size(); ++i) CHECK_MESSAGE(close(g[i], fd[i], 1e-4, 1e-7), i);
  }
}

TEST_CASE("single-sample helpers agree with the batch path") {
  const Checkpoint ck = small_mlp(11);
  std::mt19937_64 rng(11);
  const auto x = oracle::random_values(rng, 16);
  const auto lg = loss_gradient_one(ck, x, 1);
  const Tensor batch({1, 1, 4, 4}, x);
  CHECK(lg.loss == doctest::Approx(cross_entropy(forward(ck, batch), std::vector<std::size_t>{1})).epsilon(1e-14));
  Tensor g = input_gradient(ck, batch, std::vector<std::size_t>{1});
  CHECK(oracle::max_abs_diff(lg.gradient, g.storage()) < 1e-14);

  // d logit / d input by central differences.
  const auto lgrad = logit_gradient_one(ck, x, 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto p = x, m = x;
    p[i] += 1e-6;
    m[i] -= 1e-6;
    const double fd = (forward_one(ck, p)[2] - forward_one(ck, m)[2]) / 2e-6;
    CHECK(close(lgrad[i], fd, 1e-5, 1e-8));
  }
}

TEST_CASE("parameter gradient matches finite differences") {
  Checkpoint ck = small_mlp(12);
  std::mt19937_64 rng(12);
  const Tensor x({2, 1, 4, 4}, oracle::random_values(rng, 32));
  const std::vector<std::size_t> t{2, 0};
  const auto g = parameter_gradient(ck, x, t);
  REQUIRE(g.size() == ck.parameters.size());
  for (std::size_t i = 0; i < g.size(); i += 3) {
    const double keep = ck.parameters[i];
    ck.parameters[i] = keep + 1e-6;
    const double lp = cross_entropy(forward(ck, x), t);
    ck.parameters[i] = keep - 1e-6;
    const double lm = cross_entropy(forward(ck, x), t);
    ck.parameters[i] = keep;
    CHECK(close(g[i], (lp - lm) / 2e-6, 1e-5, 1e-8));
  }
}

TEST_CASE("training with zero epochs returns the initialization") {
  PlantedConfig pc;
  pc.seed = 1;
  pc.height = pc.width = 8;
  pc.classes = 2;
  pc.frequencies = 1;
  pc.per_class = 4;
  const auto data = generate_planted_dataset(pc);
  ModelSpec spec;
  spec.input_shape = {1, 8, 8};
  spec.classes = 2;
  spec.hidden = {6};
  TrainOptions opt;
  opt.seed = 5;
  opt.epochs = 0;
  CHECK(train(spec, data, opt).parameters == initialize(spec, 5).parameters);
}

TEST_CASE("initialization is seeded") {
  ModelSpec spec;
  spec.classes = 3;
  spec.hidden = {4};
  CHECK(initialize(spec, 1).parameters == initialize(spec, 1).parameters);
  CHECK(initialize(spec, 1).parameters != initialize(spec, 2).parameters);
  CHECK(initialize(spec, 1).parameters.size() == spec.parameter_count());
}

TEST_CASE("training a separable toy set") {
  // Class 0 has a positive first pixel, class 1 a negative one; everything else is noise.
  std::mt19937_64 rng(13);
  std::normal_distribution<double> noise(0.0, 0.3);
  LabeledDataset data;
  data.classes = 2;
  for (int i = 0; i < 40; ++i) {
    Tensor x({1, 2, 2});
    for (auto& v : x.values()) v = noise(rng);
    x[0] = (i % 2 == 0 ? 1.0 : -1.0) + 0.1 * noise(rng);
    data.samples.push_back(x);
    data.labels.push_back(static_cast<std::size_t>(i % 2));
  }
  ModelSpec spec;
  spec.input_shape = {1, 2, 2};
  spec.classes = 2;
  spec.hidden = {8};
  TrainOptions opt;
  opt.seed = 3;
  opt.epochs = 50;
  opt.step_size = 0.1;
  const Checkpoint a = train(spec, data, opt);
  CHECK(accuracy(a, data) == 1.0);
  CHECK(a.meta.final_accuracy == 1.0);
  CHECK(a.meta.loss_history.size() == 50);
  CHECK(a.meta.loss_history.back() < a.meta.loss_history.front());
  const Checkpoint b = train(spec, data, opt);
  CHECK(a.parameters == b.parameters);
}

TEST_CASE("divergent training is reported") {
  PlantedConfig pc;
  pc.seed = 2;
  pc.height = pc.width = 8;
  pc.classes = 2;
  pc.frequencies = 1;
  pc.per_class = 8;
  const auto data = generate_planted_dataset(pc);
  ModelSpec spec;
  spec.input_shape = {1, 8, 8};
  spec.classes = 2;
  spec.hidden = {16, 16};
  TrainOptions opt;
  opt.step_size = 1e200;
  opt.epochs = 5;
  CHECK_THROWS_AS(train(spec, data, opt), NumericalError);
}

TEST_CASE("convnet learns the planted-frequency task") {
  PlantedConfig pc;
  pc.seed = 7;
  pc.per_class = 100;
  const auto all = generate_planted_dataset(pc);
  ModelSpec spec;
  spec.arch = Architecture::convnet;
  spec.classes = 4;
  TrainOptions opt;
  opt.seed = 7;
  opt.epochs = 30;
  const Checkpoint ck = train(spec, all.slice(0, 200), opt);
  CHECK(accuracy(ck, all.slice(200, 400)) > 0.9);
}

TEST_CASE("spec validation") {
  ModelSpec spec;
  spec.arch = Architecture::convnet;
  spec.kernel = 2;
  CHECK_THROWS_AS(spec.validate(), UsageError);
  spec.kernel = 3;
  spec.conv_channels = {4};
  CHECK_THROWS_AS(spec.validate(), UsageError);
  CHECK_THROWS_AS(parse_architecture("resnet"), UsageError);
  Checkpoint ck = small_mlp(1);
  ck.parameters.pop_back();
  CHECK_THROWS_AS(ck.validate(), DataError);
}
