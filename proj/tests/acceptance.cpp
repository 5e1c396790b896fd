// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails. `--only N` runs a single one.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <unistd.h>

#include "CLI11.hpp"
#include "cli.hpp"
#include "ffc/analysis.hpp"
#include "ffc/attribution.hpp"
#include "ffc/data.hpp"
#include "ffc/formats.hpp"
#include "ffc/game.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace ffc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

bool close_rel(double a, double b, double rel, double floor) {
  const double d = std::abs(a - b);
  return d <= floor || d <= rel * std::max(std::abs(a), std::abs(b));
}

// ---------------------------------------------------------------- 1

Outcome fft_correctness() {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> size(4, 32);
  double worst = 0.0, worst_parseval = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t m = size(rng), n = size(rng);
    // Force a share of each parity mix, including the radix-2 path.
    if (trial % 4 == 0) m = n = std::size_t{1} << (2 + trial / 4 % 4);
    if (trial % 4 == 1) m |= 1;
    const RealGrid g = oracle::random_grid(rng, m, n);
    const Spectrum s = dft2(g);
    const auto ref = oracle::dft(g.values, m, n);
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(s.values[i] - ref[i]));
    worst = std::max(worst, oracle::max_abs_diff(idft2(s).values, g.values));
    double spatial = 0.0, spectral = 0.0;
    for (double v : g.values) spatial += v * v;
    for (const auto& c : s.values) spectral += std::norm(c);
    worst_parseval = std::max(worst_parseval, std::abs(spectral / static_cast<double>(m * n) - spatial) / spatial);
  }
  return {worst < 1e-9 && worst_parseval < 1e-9,
          "max abs error " + num(worst) + " (< 1e-9), Parseval rel " + num(worst_parseval) + " (< 1e-9)"};
}

// ---------------------------------------------------------------- 2

Outcome deletion_well_posed() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> size(2, 24);
  double worst = 0.0;
  std::size_t not_idempotent = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = size(rng), n = size(rng);
    const MultiSpectrum s({dft2(oracle::random_grid(rng, m, n))});
    std::uniform_int_distribution<std::size_t> pu(0, m - 1), pv(0, n - 1), count(0, m * n);
    std::vector<FeatureIndex> feats(count(rng));
    for (auto& f : feats) f = {0, pu(rng), pv(rng)};
    const MultiSpectrum once = delete_components(s, feats, true);
    worst = std::max(worst, imaginary_residual(once[0]));
    not_idempotent += !(delete_components(once, feats, true) == once);
  }
  return {worst < 1e-9 && not_idempotent == 0, "imaginary residual " + num(worst) + " (< 1e-9), " +
                                                   std::to_string(not_idempotent) + " non-idempotent of 1000"};
}

// ---------------------------------------------------------------- 3

Checkpoint jittered(ModelSpec spec, std::uint64_t seed) {
  Checkpoint ck = initialize(spec, seed);
  std::mt19937_64 rng(seed + 1000);
  std::uniform_real_distribution<double> d(-0.05, 0.05);
  for (auto& p : ck.parameters) p += d(rng);
  return ck;
}

Outcome gradient_correctness() {
  std::size_t bad = 0, checked = 0;
  double worst = 0.0;
  for (int arch = 0; arch < 2; ++arch) {
    for (std::uint64_t inst = 0; inst < 20; ++inst) {
      ModelSpec spec;
      spec.classes = 3;
      if (arch == 0) {
        spec.input_shape = {1, 6, 6};
        spec.hidden = {12, 7};
      } else {
        spec.arch = Architecture::convnet;
        spec.input_shape = {2, 8, 8};
        spec.conv_channels = {3, 4};
      }
      const Checkpoint ck = jittered(spec, 100 * arch + inst);
      std::mt19937_64 rng(7 + inst);
      const Tensor x({1, spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]},
                     oracle::random_values(rng, spec.input_size()));
      const std::vector<std::size_t> t{inst % 3};
      const Tensor g = input_gradient(ck, x, t);
      const double h = 1e-5;
      for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor p = x, q = x;
        p[i] += h;
        q[i] -= h;
        const double fd = (cross_entropy(forward(ck, p), t) - cross_entropy(forward(ck, q), t)) / (2 * h);
        ++checked;
        if (!close_rel(g[i], fd, 1e-4, 1e-7)) {
          ++bad;
          worst = std::max(worst, std::abs(g[i] - fd) / std::max(std::abs(g[i]), std::abs(fd)));
        }
      }
    }
  }
  return {bad == 0, std::to_string(bad) + " of " + std::to_string(checked) +
                        " coordinates outside rel 1e-4 / abs 1e-7" + (bad ? " (worst rel " + num(worst) + ")" : "")};
}

// ---------------------------------------------------------------- 4

Outcome ffc_invariants() {
  std::mt19937_64 rng(4);
  AttributionConfig expected;
  expected.projection_denominator = ProjectionDenominator::expected;
  double self = 0.0, highest = -1e300, flip = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t c = 1 + trial % 3, h = 4 + trial % 5, w = 4 + trial % 7;
    const Tensor a({c, h, w}, oracle::random_values(rng, c * h * w));
    const Tensor b({c, h, w}, oracle::random_values(rng, c * h * w));
    const MultiSpectrum sa = dft2_channels(a), sb = dft2_channels(b);
    for (auto d : {ProjectionDenominator::expected, ProjectionDenominator::original}) {
      AttributionConfig cfg;
      cfg.projection_denominator = d;
      for (double v : ffc_importance(sa, sa, cfg).scores) self = std::max(self, std::abs(v));
    }
    for (double v : ffc_importance(sa, sb, expected).scores) highest = std::max(highest, v);

    // Flip the phase of one conjugate pair and nothing else.
    MultiSpectrum flipped = sa;
    const FeatureIndex f{trial % c, static_cast<std::size_t>(trial) % h, static_cast<std::size_t>(trial / 3) % w};
    const FeatureIndex p = conjugate_pair(f, h, w);
    flipped.at(f) = -sa.at(f);
    if (!(p == f)) flipped.at(p) = -sa.at(p);
    const ImportanceMap m = ffc_importance(sa, flipped, expected);
    flip = std::max(flip, std::abs(m.scores[sa.flat_index(f)] + 2.0 * std::abs(sa.at(f))));
  }
  return {self <= 1e-12 && highest <= 1e-12 && flip <= 1e-10,
          "max |importance| at X'=X " + num(self) + " (<= 1e-12), max expected-denominator score " + num(highest) +
              " (<= 1e-12), phase-flip error " + num(flip) + " (<= 1e-10)"};
}

// ---------------------------------------------------------------- planted setup shared by 5-8

struct Planted {
  LabeledDataset train;
  LabeledDataset eval;
  Checkpoint model;
};

Planted planted_setup(double label_noise = 0.0) {
  PlantedConfig pc;
  pc.seed = 7;
  pc.height = pc.width = 32;
  pc.classes = 4;
  pc.frequencies = 3;
  pc.noise = 0.1;
  pc.per_class = 100;
  const LabeledDataset all = generate_planted_dataset(pc);
  Planted out;
  out.train = all.slice(0, 200);
  out.eval = all.slice(200, 400);
  if (label_noise > 0.0) out.train = with_label_noise(out.train, label_noise, 7);
  ModelSpec spec;
  spec.input_shape = {1, 32, 32};
  spec.classes = 4;
  spec.hidden = {256};
  TrainOptions to;
  to.seed = 7;
  out.model = train(spec, out.train, to);
  return out;
}

AttributionConfig acceptance_ffc() {
  AttributionConfig c;
  c.learning_rate = 1.0;
  c.iterations = 50;
  return c;
}

// Share of planted pairs among the map's top `pairs` conjugate pairs.
double recovery(const ImportanceMap& m, const std::vector<FeatureIndex>& planted, std::size_t pairs) {
  auto key = [&](std::size_t u, std::size_t v) {
    const auto p = conjugate_pair({0, u, v}, m.height, m.width);
    return std::min(u * m.width + v, p.u * m.width + p.v);
  };
  std::set<std::size_t> top;
  for (auto i : ranking(m, DeletionOrder::most_first)) {
    if (top.size() >= pairs) break;
    top.insert(key((i / m.width) % m.height, i % m.width));
  }
  double hit = 0.0;
  for (const auto& f : planted) hit += static_cast<double>(top.count(key(f.u, f.v)));
  return hit / static_cast<double>(planted.size());
}

// ---------------------------------------------------------------- 5

Outcome planted_oracle() {
  const Planted p = planted_setup();
  const double acc = accuracy(p.model, p.eval);
  const AttributionConfig cfg = acceptance_ffc();
  std::vector<ImportanceMap> ffc_maps, random_maps;
  double rec = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.eval.size(); ++i) {
    const Tensor& x = p.eval.samples[i];
    ffc_maps.push_back(ffc::ffc(p.model, x, cfg));
    random_maps.push_back(baseline_scores(BaselineKind::random, x, i + 1));
    if (predict_one(p.model, x.values()) != p.eval.labels[i]) continue;
    rec += recovery(ffc_maps.back(), p.eval.planted[p.eval.labels[i]], 2 * 3);
    ++correct;
  }
  rec /= static_cast<double>(correct);
  const GameReport g_ffc = deletion_curves(p.model, p.eval.samples, ffc_maps, GameConfig{});
  const GameReport g_rand = deletion_curves(p.model, p.eval.samples, random_maps, GameConfig{});
  const double se = std::hypot(*g_ffc.auc_standard_error, *g_rand.auc_standard_error);
  const double margin = (*g_ffc.auc - *g_rand.auc) / se;
  return {acc > 0.9 && rec >= 0.8 && margin > 3.0,
          "test accuracy " + num(acc) + " (> 0.9), recovery " + num(rec) + " (>= 0.8), AUC ffc " + num(*g_ffc.auc) +
              " vs random " + num(*g_rand.auc) + " = " + num(margin) + " SE (> 3)"};
}

// ---------------------------------------------------------------- 6

Outcome sweep_trend() {
  const Planted p = planted_setup();
  const std::vector<Tensor> xs(p.eval.samples.begin(), p.eval.samples.begin() + 100);
  std::vector<double> neg_loss, aucs;
  for (double lr : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
    for (std::size_t it : {1, 5, 10, 25, 50}) {
      AttributionConfig cfg;
      cfg.learning_rate = lr;
      cfg.iterations = it;
      std::vector<ImportanceMap> maps;
      double loss = 0.0;
      for (const auto& x : xs) {
        auto r = ffc_with_trace(p.model, x, cfg);
        loss += r.trace.final_loss;
        maps.push_back(std::move(r.map));
      }
      neg_loss.push_back(-loss / static_cast<double>(xs.size()));
      aucs.push_back(*deletion_curves(p.model, xs, maps, GameConfig{}).auc);
    }
  }
  const auto rho = spearman(neg_loss, aucs);
  const auto [lo, hi] = std::minmax_element(aucs.begin(), aucs.end());
  return {rho && *rho > 0.0, "spearman(-loss, AUC) " + (rho ? num(*rho) : std::string("undefined")) +
                                 " (> 0) over 25 cells, AUC range " + num(*lo) + ".." + num(*hi)};
}

// ---------------------------------------------------------------- 7

Outcome maintain_rate() {
  const Planted p = planted_setup();
  const AttributionConfig cfg = acceptance_ffc();
  std::vector<ImportanceMap> maps;
  for (const auto& x : p.eval.samples) maps.push_back(ffc::ffc(p.model, x, cfg));
  const std::vector<double> keep{0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0};
  const MaintainCurve c = maintain_rate_curve(p.model, p.eval.samples, maps, keep);
  bool monotone = true;
  for (std::size_t k = 1; k < keep.size(); ++k) {
    monotone &= c.rate[k] >= c.rate[k - 1] - 2.0 * std::max(c.standard_error[k], c.standard_error[k - 1]);
  }
  std::string curve;
  for (std::size_t k = 0; k < keep.size(); ++k) curve += (k ? " " : "") + num(c.rate[k]);
  return {c.rate[3] >= 0.8 && monotone,
          "rate at 10% " + num(c.rate[3]) + " (>= 0.8), monotone within 2 SE: " + (monotone ? "yes" : "no") +
              ", curve [" + curve + "]"};
}

// ---------------------------------------------------------------- 8

Outcome correction() {
  const Planted p = planted_setup(0.3);
  const AttributionConfig cfg = acceptance_ffc();
  const auto schedule = default_correction_schedule(1024);
  const auto f = correct_misclassified(
      p.model, p.eval, [&](std::size_t, const Tensor& x) { return ffc::ffc(p.model, x, cfg); }, schedule, "ffc");
  const auto r = correct_misclassified(
      p.model, p.eval, [](std::size_t i, const Tensor& x) { return baseline_scores(BaselineKind::random, x, i + 1); },
      schedule, "random");
  return {f.misclassified >= 50 && f.corrected > r.corrected,
          std::to_string(f.misclassified) + " misclassified (>= 50), corrected ffc " + std::to_string(f.corrected) +
              " vs random " + std::to_string(r.corrected) + " (strictly more)"};
}

// ---------------------------------------------------------------- 9

Outcome ig_completeness() {
  PlantedConfig pc;
  pc.seed = 9;
  pc.height = pc.width = 16;
  pc.per_class = 25;
  const LabeledDataset data = generate_planted_dataset(pc);
  ModelSpec spec;
  spec.arch = Architecture::convnet;
  spec.input_shape = {1, 16, 16};
  spec.classes = 4;
  TrainOptions to;
  to.seed = 9;
  to.epochs = 5;
  const Checkpoint model = train(spec, data.slice(0, 80), to);
  const Tensor zero({1, 16, 16});
  double worst = 0.0;
  for (std::size_t i = 80; i < 100; ++i) {
    const Tensor& x = data.samples[i];
    const std::size_t t = predict_one(model, x.values());
    const ImportanceMap m = integrated_gradients(model, x, t, 256);
    const double total = std::accumulate(m.scores.begin(), m.scores.end(), 0.0);
    const double gap = forward_one(model, x.values())[t] - forward_one(model, zero.values())[t];
    worst = std::max(worst, std::abs(total - gap) / std::abs(gap));
  }
  return {worst < 0.01, "worst relative completeness gap " + num(worst) + " (< 0.01) over 20 samples"};
}

// ---------------------------------------------------------------- 10

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("ffc-accept-" + std::to_string(::getpid()) + "-" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::cerr << args[0] << " failed: " << err.str();
  return code;
}

Outcome determinism() {
  const std::vector<std::pair<std::string, std::string>> reports{
      {"dataset-gen", "planted.json"}, {"train", "model-train.json"}, {"attribute", "attribute.json"},
      {"game", "game.json"},           {"sweep", "sweep.json"},       {"analyze", "analyze.json"},
      {"correct", "correct.json"}};
  auto pipeline = [&](const fs::path& d) {
    const std::string o = d.string(), model = (d / "model.ckpt").string(), data = (d / "planted-eval.idx").string();
    const std::vector<std::vector<std::string>> steps{
        {"dataset-gen", "--out", o, "--seed", "5", "--size", "16", "--train-per-class", "20", "--eval-per-class",
         "10", "--label-noise", "0.2"},
        {"train", "--out", o, "--seed", "5", "--data", (d / "planted-train.idx").string(), "--eval", data, "--hidden",
         "32", "--epochs", "5"},
        {"attribute", "--out", o, "--seed", "5", "--model", model, "--data", data, "--limit", "12", "--method",
         "ffc,input_x_gradient,intgrad,smoothgrad,random,sorted_freq,energy,fft_of:intgrad,ifft_of:smoothgrad",
         "--ig-steps", "16", "--sg-samples", "4"},
        {"game", "--out", o, "--manifest", (d / "attribute.json").string(), "--fraction-step", "0.1"},
        {"sweep", "--out", o, "--seed", "5", "--model", model, "--data", data, "--limit", "6", "--lrs", "1,1000",
         "--iterations", "1,10"},
        {"analyze", "--out", o, "--manifest", (d / "attribute.json").string()},
        {"correct", "--out", o, "--seed", "5", "--model", model, "--data", data, "--method", "ffc,random,energy",
         "--render", "1"},
    };
    for (const auto& s : steps)
      if (run_cli(s) != 0) return false;
    return true;
  };
  TempDir a("a"), b("b");
  if (!pipeline(a.path) || !pipeline(b.path)) return {false, "a subcommand failed"};
  std::vector<std::string> differing;
  for (const auto& [cmd, file] : reports) {
    std::ifstream fa(a.path / file), fb(b.path / file);
    const auto ja = nlohmann::json::parse(fa), jb = nlohmann::json::parse(fb);
    if (ja.at("payload").dump() != jb.at("payload").dump()) differing.push_back(cmd);
  }
  const bool ckpt_same = read_file_bytes(a.path / "model.ckpt") == read_file_bytes(b.path / "model.ckpt");
  if (!ckpt_same) differing.push_back("checkpoint bytes");
  std::string list;
  for (const auto& d : differing) list += " " + d;
  return {differing.empty(), std::to_string(reports.size()) + " subcommands run twice; differing payloads:" +
                                 (differing.empty() ? std::string(" none") : list)};
}

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  int only = 0;
  app.add_option("--only", only, "run a single criterion (1-10)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "fft-correctness", 10, fft_correctness},
      {2, "deletion-well-posed", 10, deletion_well_posed},
      {3, "gradient-correctness", 60, gradient_correctness},
      {4, "ffc-invariants", 10, ffc_invariants},
      {5, "planted-frequency-oracle", 300, planted_oracle},
      {6, "sweep-trend", 900, sweep_trend},
      {7, "maintain-rate", 300, maintain_rate},
      {8, "correction", 300, correction},
      {9, "ig-completeness", 60, ig_completeness},
      {10, "determinism", 300, determinism},
  };
  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs < c.budget_seconds;
    failed += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  " << c.id << " " << c.name << ": " << o.detail << "; " << num(secs)
              << " s (< " << num(c.budget_seconds) << " s)" << std::endl;
  }
  if (ran == 0) {
    std::cerr << "no criterion " << only << "\n";
    return 2;
  }
  return failed == 0 ? 0 : 1;
}
