#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>

#include "CLI11.hpp"
#include "ffc/analysis.hpp"
#include "ffc/attribution.hpp"
#include "ffc/data.hpp"
#include "ffc/error.hpp"
#include "ffc/formats.hpp"
#include "ffc/game.hpp"
#include "ffc/parallel.hpp"
#include "methods.hpp"
#include "report.hpp"

namespace fs = std::filesystem;

namespace ffc::cli {
namespace {

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  fs::path out_dir() const {
    if (!out.empty()) return out;
    if (const char* env = std::getenv("FFC_OUTPUT_DIR"); env && *env) return env;
    return ".";
  }
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "flat key=value file; command-line flags take precedence");
  sub->add_option("--out", c.out, "output directory (default: $FFC_OUTPUT_DIR, else .)");
  sub->add_option("--seed", c.seed, "random seed")->capture_default_str();
  sub->add_option("--workers", c.workers, "threads over samples")->capture_default_str()->check(CLI::PositiveNumber);
}

Json common_json(const Common& c) {
  return Json{{"seed", c.seed}, {"workers", c.workers}, {"out", c.out_dir().string()}};
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " path is required");
  if (!fs::is_regular_file(path)) throw UsageError(what + " not found: " + path);
}

LabeledDataset load_dataset(const std::string& path, std::size_t classes = 0) {
  require_file(path, "dataset");
  const auto labels = idx_labels_path(path);
  if (!fs::is_regular_file(labels)) throw UsageError("label file not found: " + labels.string());
  return load_idx(path, labels, classes);
}

Checkpoint load_model(const std::string& path) {
  require_file(path, "checkpoint");
  return load_checkpoint(path);
}

void check_compatible(const Checkpoint& model, const LabeledDataset& data) {
  const auto& s = model.spec.input_shape;
  const auto& shape = data.samples.at(0).shape();
  if (shape.size() != 3 || shape[0] != s[0] || shape[1] != s[1] || shape[2] != s[2]) {
    throw UsageError("dataset sample shape " + shape_string(shape) + " does not match the model input");
  }
  if (data.classes > model.spec.classes) throw UsageError("dataset has more classes than the model outputs");
}

std::vector<double> fraction_grid(double max, double step) {
  if (!(step > 0.0) || !(max >= 0.0) || max > 1.0) throw UsageError("fraction grid needs 0 < step and 0 <= max <= 1");
  std::vector<double> f;
  for (std::size_t i = 0;; ++i) {
    // Rounded so that 3 * 0.05 prints as 0.15.
    const double v = std::round(static_cast<double>(i) * step * 1e12) / 1e12;
    if (v > max + 1e-12) break;
    f.push_back(std::min(v, 1.0));
  }
  return f;
}

Json to_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

// ---------------------------------------------------------------- method options

struct MethodArgs {
  double lr = 1000.0;
  std::size_t iters = 50;
  std::string target = "predicted";
  std::string denominator = "original";
  double epsilon = 1e-12;
  std::size_t ig_steps = 50;
  std::size_t sg_samples = 25;
  double sg_noise = 0.15;

  MethodOptions resolve(std::uint64_t seed) const {
    MethodOptions o;
    o.ffc.learning_rate = lr;
    o.ffc.iterations = iters;
    o.ffc.target_policy = parse_target_policy(target);
    o.ffc.projection_denominator = parse_projection_denominator(denominator);
    o.ffc.epsilon = epsilon;
    o.ffc.validate();
    o.ig_steps = ig_steps;
    o.sg_samples = sg_samples;
    o.sg_noise = sg_noise;
    o.seed = seed;
    return o;
  }

  Json to_json() const {
    return Json{{"lr", lr},           {"iters", iters},       {"target", target},
                {"denominator", denominator}, {"epsilon", epsilon}, {"ig_steps", ig_steps},
                {"sg_samples", sg_samples},   {"sg_noise", sg_noise}};
  }
};

void add_method_args(CLI::App* sub, MethodArgs& m) {
  sub->add_option("--lr", m.lr, "rectification step size")->capture_default_str();
  sub->add_option("--iters", m.iters, "rectification iterations")->capture_default_str();
  sub->add_option("--target", m.target, "class to explain")
      ->check(CLI::IsMember({"predicted", "ground_truth"}))
      ->capture_default_str();
  sub->add_option("--denominator", m.denominator, "projection denominator")
      ->check(CLI::IsMember({"expected", "original"}))
      ->capture_default_str();
  sub->add_option("--epsilon", m.epsilon, "zero-magnitude guard")->capture_default_str();
  sub->add_option("--ig-steps", m.ig_steps, "integrated gradients steps")->capture_default_str();
  sub->add_option("--sg-samples", m.sg_samples, "smoothgrad draws")->capture_default_str();
  sub->add_option("--sg-noise", m.sg_noise, "smoothgrad sigma as a fraction of the input range")->capture_default_str();
}

// ---------------------------------------------------------------- dataset-gen

struct DatasetArgs {
  Common common;
  std::string name = "planted";
  std::size_t size = 32;
  std::size_t classes = 4;
  std::size_t frequencies = 3;
  double noise = 0.1;
  std::size_t train_per_class = 50;
  std::size_t eval_per_class = 50;
  double label_noise = 0.0;
  double amplitude_min = 0.5;
  double amplitude_max = 1.0;
};

Json feature_list(const std::vector<FeatureIndex>& fs) {
  Json out = Json::array();
  for (const auto& f : fs) out.push_back(Json::array({f.channel, f.u, f.v}));
  return out;
}

void cmd_dataset_gen(const DatasetArgs& a, std::ostream& out) {
  PhaseTimer timer;
  timer.start("generate");
  if (a.train_per_class + a.eval_per_class == 0) throw UsageError("dataset needs at least one sample");
  if (a.label_noise < 0.0 || a.label_noise > 1.0) throw UsageError("label noise must lie in [0,1]");
  PlantedConfig pc;
  pc.seed = a.common.seed;
  pc.height = pc.width = a.size;
  pc.classes = a.classes;
  pc.frequencies = a.frequencies;
  pc.noise = a.noise;
  pc.per_class = a.train_per_class + a.eval_per_class;
  pc.amplitude_min = a.amplitude_min;
  pc.amplitude_max = a.amplitude_max;
  const LabeledDataset all = generate_planted_dataset(pc);
  // Labels cycle through the classes, so a prefix split keeps both halves balanced.
  const std::size_t n_train = a.train_per_class * a.classes;
  LabeledDataset train = all.slice(0, n_train);
  const LabeledDataset eval = all.slice(n_train, all.size());
  if (a.label_noise > 0.0 && train.size() > 0) train = with_label_noise(train, a.label_noise, a.common.seed + 2);
  timer.stop();

  timer.start("write");
  const fs::path dir = a.common.out_dir();
  Json files = Json::object();
  auto save = [&](const LabeledDataset& d, const std::string& part) {
    if (d.size() == 0) return;
    const fs::path images = dir / (a.name + "-" + part + ".idx");
    save_idx_images(images, d.all());
    save_idx_labels(idx_labels_path(images), d.labels);
    files[part] = Json{{"images", images.filename().string()},
                       {"labels", idx_labels_path(images).filename().string()},
                       {"samples", d.size()}};
  };
  save(train, "train");
  save(eval, "eval");
  Json planted = Json::array();
  for (const auto& p : all.planted) planted.push_back(feature_list(p));
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < train.size(); ++i) flipped += train.labels[i] != all.labels[i];
  const Json config = {{"common", common_json(a.common)}, {"name", a.name},
                       {"size", a.size},                  {"classes", a.classes},
                       {"frequencies", a.frequencies},    {"noise", a.noise},
                       {"train_per_class", a.train_per_class}, {"eval_per_class", a.eval_per_class},
                       {"label_noise", a.label_noise},    {"amplitude_min", a.amplitude_min},
                       {"amplitude_max", a.amplitude_max}};
  const Json payload = {{"files", files}, {"planted", planted}, {"flipped_train_labels", flipped}};
  timer.stop();
  write_report(dir / (a.name + ".json"), "dataset-gen", config, payload, timer);
  out << "wrote " << train.size() << " train and " << eval.size() << " eval samples to " << dir.string() << "\n";
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::string data;
  std::string eval;
  std::string arch = "mlp";
  std::vector<std::size_t> hidden{256};
  std::vector<std::size_t> conv_channels{4, 8};
  std::size_t kernel = 3;
  std::size_t epochs = 30;
  double step_size = 0.05;
  std::size_t batch_size = 16;
  std::string name = "model";
  bool svg = false;
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
  PhaseTimer timer;
  timer.start("load");
  const LabeledDataset data = load_dataset(a.data);
  std::optional<LabeledDataset> eval;
  if (!a.eval.empty()) eval = load_dataset(a.eval);
  ModelSpec spec;
  spec.arch = parse_architecture(a.arch);
  const auto& shape = data.samples.at(0).shape();
  spec.input_shape = {shape[0], shape[1], shape[2]};
  spec.classes = std::max(data.classes, eval ? eval->classes : 0);
  spec.hidden = a.hidden;
  spec.conv_channels = a.conv_channels;
  spec.kernel = a.kernel;
  spec.validate();
  TrainOptions to;
  to.seed = a.common.seed;
  to.epochs = a.epochs;
  to.step_size = a.step_size;
  to.batch_size = a.batch_size;

  timer.start("train");
  const Checkpoint model = train(spec, data, to);
  timer.start("evaluate");
  std::optional<double> eval_acc;
  if (eval) {
    check_compatible(model, *eval);
    eval_acc = accuracy(model, *eval);
  }
  timer.start("write");
  const fs::path dir = a.common.out_dir();
  save_checkpoint(dir / (a.name + ".ckpt"), model);
  const Json config = {{"common", common_json(a.common)},
                       {"data", a.data},
                       {"eval", a.eval},
                       {"arch", a.arch},
                       {"hidden", a.hidden},
                       {"conv_channels", a.conv_channels},
                       {"kernel", a.kernel},
                       {"epochs", a.epochs},
                       {"step_size", a.step_size},
                       {"batch_size", a.batch_size},
                       {"name", a.name}};
  const Json payload = {{"checkpoint", a.name + ".ckpt"},
                        {"parameter_count", model.parameters.size()},
                        {"parameter_hash", parameter_hash(model)},
                        {"final_loss", model.meta.final_loss},
                        {"final_accuracy", model.meta.final_accuracy},
                        {"eval_accuracy", to_json(eval_acc)},
                        {"loss_history", model.meta.loss_history},
                        {"accuracy_history", model.meta.accuracy_history}};
  CsvTable csv({"epoch", "loss", "accuracy"});
  for (std::size_t e = 0; e < model.meta.loss_history.size(); ++e) {
    csv.add({std::to_string(e + 1), fmt(model.meta.loss_history[e]), fmt(model.meta.accuracy_history[e])});
  }
  csv.write(dir / (a.name + "-train.csv"), config);
  if (a.svg) {
    std::vector<double> epochs(model.meta.loss_history.size());
    std::iota(epochs.begin(), epochs.end(), 1.0);
    write_svg_plot(dir / (a.name + "-train.svg"), "training", "epoch", "value",
                   {{"loss", epochs, model.meta.loss_history}, {"accuracy", epochs, model.meta.accuracy_history}});
  }
  timer.stop();
  write_report(dir / (a.name + "-train.json"), "train", config, payload, timer);
  out << "trained " << a.arch << ": loss " << model.meta.final_loss << ", accuracy " << model.meta.final_accuracy;
  if (eval_acc) out << ", eval accuracy " << *eval_acc;
  out << "\n";
}

// ---------------------------------------------------------------- attribute

struct AttributeArgs {
  Common common;
  MethodArgs method_args;
  std::string model;
  std::string data;
  std::vector<std::string> methods{"ffc"};
  std::size_t limit = 0;
  std::string name = "attribute";
};

std::size_t sample_count(std::size_t available, std::size_t limit) {
  if (available == 0) throw DataError("dataset is empty");
  return limit == 0 ? available : std::min(available, limit);
}

void cmd_attribute(const AttributeArgs& a, std::ostream& out) {
  const auto methods = parse_methods(a.methods);
  const auto options = a.method_args.resolve(a.common.seed);
  PhaseTimer timer;
  timer.start("load");
  const Checkpoint model = load_model(a.model);
  const LabeledDataset data = load_dataset(a.data, model.spec.classes);
  check_compatible(model, data);
  const std::size_t n = sample_count(data.size(), a.limit);

  std::vector<std::vector<ImportanceMap>> maps(methods.size(), std::vector<ImportanceMap>(n));
  std::vector<double> ffc_loss(n, 0.0);
  for (std::size_t m = 0; m < methods.size(); ++m) {
    timer.start(methods[m].slug());
    parallel_for(n, a.common.workers, [&](std::size_t i) {
      double* loss = methods[m].kind == MethodKind::ffc ? &ffc_loss[i] : nullptr;
      maps[m][i] = compute_map(methods[m], model, data.samples[i], i, data.labels[i], options, loss);
    });
  }

  timer.start("write");
  const fs::path dir = a.common.out_dir();
  Json entries = Json::array();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    Json files = Json::array();
    for (std::size_t i = 0; i < n; ++i) {
      const fs::path rel = fs::path("maps") / a.name / methods[m].slug() / (std::to_string(i) + ".imp");
      save_importance_file(dir / rel, maps[m][i]);
      files.push_back(rel.generic_string());
    }
    entries.push_back(Json{{"name", methods[m].name}, {"domain", to_string(methods[m].domain())}, {"files", files}});
  }
  const Json config = {{"common", common_json(a.common)}, {"model", a.model},   {"data", a.data},
                       {"methods", a.methods},             {"limit", a.limit},   {"name", a.name},
                       {"method_options", a.method_args.to_json()},
                       {"resolved", {{"model", fs::absolute(a.model).lexically_normal().string()},
                                     {"data", fs::absolute(a.data).lexically_normal().string()}}}};
  Json payload = {{"samples", n}, {"methods", entries}};
  const bool has_ffc = std::any_of(methods.begin(), methods.end(), [](const Method& m) { return m.kind == MethodKind::ffc; });
  if (has_ffc) {
    payload["ffc_final_loss"] = ffc_loss;
    payload["ffc_mean_final_loss"] = std::accumulate(ffc_loss.begin(), ffc_loss.end(), 0.0) / static_cast<double>(n);
  }
  timer.stop();
  write_report(dir / (a.name + ".json"), "attribute", config, payload, timer);
  out << "wrote " << methods.size() * n << " maps for " << n << " samples; manifest " << (dir / (a.name + ".json")).string()
      << "\n";
}

// Maps listed in an attribute manifest, plus the paths it was made from.
struct Manifest {
  fs::path model;
  fs::path data;
  std::size_t samples = 0;
  std::vector<std::pair<Method, std::vector<ImportanceMap>>> methods;
};

Manifest load_manifest(const std::string& path, const std::vector<std::string>& only) {
  require_file(path, "manifest");
  Json doc;
  try {
    doc = Json::parse(std::string(reinterpret_cast<const char*>(read_file_bytes(path).data()), fs::file_size(path)));
  } catch (const Json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (doc.value("command", "") != "attribute") throw DataError(path + ": not an attribute manifest");
  Manifest m;
  const fs::path base = fs::path(path).parent_path();
  try {
    const Json& cfg = doc.at("config");
    const Json& src = cfg.contains("resolved") ? cfg.at("resolved") : cfg;
    m.model = src.at("model").get<std::string>();
    m.data = src.at("data").get<std::string>();
    m.samples = doc.at("payload").at("samples").get<std::size_t>();
    for (const auto& e : doc.at("payload").at("methods")) {
      const std::string name = e.at("name").get<std::string>();
      if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
      std::vector<ImportanceMap> maps;
      for (const auto& f : e.at("files")) maps.push_back(load_importance_file(base / f.get<std::string>()));
      if (maps.size() != m.samples) throw DataError(path + ": method " + name + " has the wrong number of maps");
      m.methods.emplace_back(parse_method(name), std::move(maps));
    }
  } catch (const Json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  for (const auto& name : only) {
    if (std::none_of(m.methods.begin(), m.methods.end(), [&](const auto& p) { return p.first.name == name; })) {
      throw UsageError("method '" + name + "' is not in manifest " + path);
    }
  }
  if (m.methods.empty()) throw UsageError("manifest " + path + " selects no methods");
  return m;
}

// Resolves --model/--data against the manifest's defaults and checks the pieces fit.
struct Inputs {
  std::string model_path;
  std::string data_path;
  Checkpoint model;
  LabeledDataset data;
};

Inputs load_inputs(const std::string& model, const std::string& data, const Manifest& manifest) {
  Inputs in;
  in.model_path = model.empty() ? manifest.model.string() : model;
  in.data_path = data.empty() ? manifest.data.string() : data;
  in.model = load_model(in.model_path);
  in.data = load_dataset(in.data_path, in.model.spec.classes);
  check_compatible(in.model, in.data);
  if (in.data.size() < manifest.samples) throw UsageError("dataset has fewer samples than the manifest");
  in.data = in.data.slice(0, manifest.samples);
  for (const auto& [method, maps] : manifest.methods) {
    for (const auto& map : maps) {
      const auto& s = in.model.spec.input_shape;
      if (map.channels != s[0] || map.height != s[1] || map.width != s[2]) {
        throw UsageError("map dimensions of " + method.name + " do not match the model input");
      }
      if (map.domain != method.domain()) throw UsageError("map domain of " + method.name + " does not match the method");
    }
  }
  return in;
}

// ---------------------------------------------------------------- game

struct GameArgs {
  Common common;
  std::string model;
  std::string data;
  std::string manifest;
  std::vector<std::string> methods;
  std::string domain = "all";
  std::string direction = "both";
  double fraction_max = 0.95;
  double fraction_step = 0.05;
  bool no_pair = false;
  bool svg = false;
  std::string name = "game";
};

Json curve_json(const DeletionCurve& c) {
  return Json{{"mean", c.mean}, {"standard_error", c.standard_error}};
}

Json game_json(const GameReport& r) {
  Json j = {{"samples", r.samples}, {"auc", to_json(r.auc)}, {"auc_standard_error", to_json(r.auc_standard_error)}};
  if (r.least_first) j["least_first"] = curve_json(*r.least_first);
  if (r.most_first) j["most_first"] = curve_json(*r.most_first);
  return j;
}

void add_curve_rows(CsvTable& csv, const std::string& method, const DeletionCurve& c) {
  for (std::size_t k = 0; k < c.fractions.size(); ++k) {
    csv.add({method, to_string(c.order), fmt(c.fractions[k]), fmt(c.mean[k]), fmt(c.standard_error[k])});
  }
}

void cmd_game(const GameArgs& a, std::ostream& out) {
  PhaseTimer timer;
  timer.start("load");
  const Manifest manifest = load_manifest(a.manifest, a.methods);
  const Inputs in = load_inputs(a.model, a.data, manifest);
  const auto direction = parse_game_direction(a.direction);
  const auto fractions = fraction_grid(a.fraction_max, a.fraction_step);

  const fs::path dir = a.common.out_dir();
  Json reports = Json::array();
  CsvTable csv({"method", "order", "fraction", "mean", "standard_error"});
  std::vector<std::pair<std::string, GameReport>> done;
  for (const auto& [method, maps] : manifest.methods) {
    if (a.domain != "all" && to_string(method.domain()) != a.domain) continue;
    timer.start(method.slug());
    GameConfig gc;
    gc.domain = method.domain();
    gc.fractions = fractions;
    gc.direction = direction;
    gc.pair_conjugates = !a.no_pair;
    const GameReport r = deletion_curves(in.model, in.data.samples, maps, gc, a.common.workers);
    Json j = game_json(r);
    j["method"] = method.name;
    j["domain"] = to_string(method.domain());
    reports.push_back(j);
    if (r.least_first) add_curve_rows(csv, method.name, *r.least_first);
    if (r.most_first) add_curve_rows(csv, method.name, *r.most_first);
    done.emplace_back(method.name, r);
  }
  if (done.empty()) throw UsageError("no manifest method matches domain '" + a.domain + "'");

  timer.start("write");
  const Json config = {{"common", common_json(a.common)}, {"model", in.model_path},   {"data", in.data_path},
                       {"manifest", a.manifest},           {"methods", a.methods},     {"domain", a.domain},
                       {"direction", a.direction},         {"fractions", fractions},   {"pair_conjugates", !a.no_pair},
                       {"name", a.name}};
  csv.write(dir / (a.name + ".csv"), config);
  if (a.svg) {
    for (const auto& [name, r] : done) {
      std::vector<Series> series;
      auto pct = fractions;
      for (auto& f : pct) f *= 100.0;
      if (r.least_first) series.push_back({"least first", pct, r.least_first->mean});
      if (r.most_first) series.push_back({"most first", pct, r.most_first->mean});
      write_svg_plot(dir / (a.name + "-" + parse_method(name).slug() + ".svg"), name, "features deleted (%)",
                     "relative confidence", series);
    }
  }
  timer.stop();
  write_report(dir / (a.name + ".json"), "game", config, Json{{"reports", reports}}, timer);
  for (const auto& [name, r] : done) {
    out << name << ": AUC ";
    if (r.auc) out << *r.auc << " +- " << *r.auc_standard_error;
    else out << "n/a";
    out << "\n";
  }
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  Common common;
  MethodArgs method_args;
  std::string model;
  std::string data;
  std::vector<double> lrs{0.1, 1.0, 10.0, 100.0, 1000.0};
  std::vector<std::size_t> iterations{1, 5, 10, 25, 50};
  std::size_t limit = 100;
  bool svg = false;
  std::string name = "sweep";
};

void cmd_sweep(const SweepArgs& a, std::ostream& out) {
  if (a.lrs.empty() || a.iterations.empty()) throw UsageError("sweep grid must be nonempty");
  for (double lr : a.lrs)
    if (!(lr > 0.0)) throw UsageError("sweep learning rates must be positive");
  for (auto it : a.iterations)
    if (it == 0) throw UsageError("sweep iterations must be positive");
  auto options = a.method_args.resolve(a.common.seed);
  PhaseTimer timer;
  timer.start("load");
  const Checkpoint model = load_model(a.model);
  const LabeledDataset all = load_dataset(a.data, model.spec.classes);
  check_compatible(model, all);
  const LabeledDataset data = all.slice(0, sample_count(all.size(), a.limit));
  const std::size_t n = data.size();

  timer.start("cells");
  Json cells = Json::array();
  CsvTable csv({"lr", "iterations", "mean_loss", "auc", "auc_standard_error"});
  std::vector<double> neg_loss, aucs;
  const Method ffc_method = parse_method("ffc");
  for (double lr : a.lrs) {
    for (std::size_t it : a.iterations) {
      options.ffc.learning_rate = lr;
      options.ffc.iterations = it;
      std::vector<ImportanceMap> maps(n);
      std::vector<double> loss(n);
      parallel_for(n, a.common.workers, [&](std::size_t i) {
        maps[i] = compute_map(ffc_method, model, data.samples[i], i, data.labels[i], options, &loss[i]);
      });
      const GameReport r = deletion_curves(model, data.samples, maps, GameConfig{}, a.common.workers);
      const double mean_loss = std::accumulate(loss.begin(), loss.end(), 0.0) / static_cast<double>(n);
      cells.push_back(Json{{"lr", lr}, {"iterations", it}, {"mean_loss", mean_loss}, {"auc", *r.auc},
                           {"auc_standard_error", *r.auc_standard_error}});
      csv.add({fmt(lr), std::to_string(it), fmt(mean_loss), fmt(*r.auc), fmt(*r.auc_standard_error)});
      neg_loss.push_back(-mean_loss);
      aucs.push_back(*r.auc);
    }
  }
  const auto rho = spearman(neg_loss, aucs);

  timer.start("write");
  const fs::path dir = a.common.out_dir();
  const Json config = {{"common", common_json(a.common)}, {"model", a.model}, {"data", a.data},
                       {"lrs", a.lrs}, {"iterations", a.iterations}, {"limit", a.limit},
                       {"name", a.name}, {"method_options", a.method_args.to_json()}};
  csv.write(dir / (a.name + ".csv"), config);
  if (a.svg) {
    std::vector<Series> series;
    for (std::size_t i = 0; i < a.lrs.size(); ++i) {
      Series s{"lr " + fmt(a.lrs[i]), {}, {}};
      for (std::size_t j = 0; j < a.iterations.size(); ++j) {
        const std::size_t c = i * a.iterations.size() + j;
        s.x.push_back(std::log10(std::max(-neg_loss[c], 1e-300)));
        s.y.push_back(aucs[c]);
      }
      series.push_back(std::move(s));
    }
    write_svg_plot(dir / (a.name + ".svg"), "AUC against rectified loss", "log10 mean loss", "AUC", series, false);
  }
  timer.stop();
  write_report(dir / (a.name + ".json"), "sweep", config,
               Json{{"samples", n}, {"cells", cells}, {"spearman_neg_loss_auc", to_json(rho)}}, timer);
  out << cells.size() << " cells over " << n << " samples; spearman(-loss, AUC) = ";
  if (rho) out << *rho;
  else out << "undefined";
  out << "\n";
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  Common common;
  std::string model;
  std::string data;
  std::string manifest;
  std::vector<std::string> methods;
  std::vector<double> keep{0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5};
  bool svg = false;
  std::string name = "analyze";
};

void cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  for (double k : a.keep)
    if (!(k >= 0.0 && k <= 1.0)) throw UsageError("keep fractions must lie in [0,1]");
  PhaseTimer timer;
  timer.start("load");
  const Manifest manifest = load_manifest(a.manifest, a.methods);
  const Inputs in = load_inputs(a.model, a.data, manifest);

  Json reports = Json::array();
  CsvTable csv({"method", "domain", "mean_kurtosis", "specificity", "features"});
  CsvTable maintain_csv({"method", "keep_fraction", "rate", "standard_error"});
  std::vector<Series> series;
  for (const auto& [method, maps] : manifest.methods) {
    timer.start(method.slug());
    const auto ch = characterize(method.name, maps, in.data.labels, in.model.spec.classes);
    Json per_class = Json::array();
    for (const auto& k : ch.kurtosis.per_class) per_class.push_back(to_json(k));
    Json j = {{"method", method.name},       {"domain", to_string(ch.domain)},
              {"features", ch.features},     {"samples", ch.samples},
              {"kurtosis_per_class", per_class}, {"mean_kurtosis", to_json(ch.kurtosis.mean)},
              {"warnings", ch.kurtosis.warnings}, {"specificity", ch.specificity}};
    csv.add({method.name, to_string(ch.domain), ch.kurtosis.mean ? fmt(*ch.kurtosis.mean) : "nan",
             std::to_string(ch.specificity), std::to_string(ch.features)});
    if (method.domain() == Domain::fourier) {
      const auto mc = maintain_rate_curve(in.model, in.data.samples, maps, a.keep, a.common.workers);
      j["maintain"] = Json{{"keep_fractions", mc.keep_fractions}, {"rate", mc.rate}, {"standard_error", mc.standard_error}};
      for (std::size_t k = 0; k < mc.rate.size(); ++k) {
        maintain_csv.add({method.name, fmt(mc.keep_fractions[k]), fmt(mc.rate[k]), fmt(mc.standard_error[k])});
      }
      series.push_back({method.name, mc.keep_fractions, mc.rate});
    }
    reports.push_back(j);
    for (const auto& w : ch.kurtosis.warnings) out << "warning: " << method.name << ": " << w << "\n";
  }

  timer.start("write");
  const fs::path dir = a.common.out_dir();
  const Json config = {{"common", common_json(a.common)}, {"model", in.model_path}, {"data", in.data_path},
                       {"manifest", a.manifest}, {"methods", a.methods}, {"keep", a.keep}, {"name", a.name}};
  csv.write(dir / (a.name + ".csv"), config);
  maintain_csv.write(dir / (a.name + "-maintain.csv"), config);
  if (a.svg && !series.empty()) {
    for (auto& s : series)
      for (auto& x : s.x) x *= 100.0;
    write_svg_plot(dir / (a.name + "-maintain.svg"), "decisions maintained", "features kept (%)", "maintain rate",
                   series);
  }
  timer.stop();
  write_report(dir / (a.name + ".json"), "analyze", config, Json{{"reports", reports}}, timer);
  for (const auto& r : reports) {
    out << r["method"].get<std::string>() << ": mean kurtosis ";
    if (r["mean_kurtosis"].is_null())
      out << "undefined";
    else
      out << r["mean_kurtosis"].get<double>();
    out << ", specificity " << r["specificity"].get<std::size_t>() << "\n";
  }
}

// ---------------------------------------------------------------- correct

struct CorrectArgs {
  Common common;
  MethodArgs method_args;
  std::string model;
  std::string data;
  std::vector<std::string> methods{"ffc", "random", "sorted_freq", "energy"};
  std::size_t steps = 10;
  double max_fraction = 0.10;
  std::size_t render = 0;
  std::string name = "correct";
};

std::vector<double> channel_mean(const Tensor& x) {
  const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  std::vector<double> out(plane, 0.0);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < plane; ++i) out[i] += x[k * plane + i] / static_cast<double>(c);
  return out;
}

void cmd_correct(const CorrectArgs& a, std::ostream& out) {
  const auto methods = parse_methods(a.methods);
  for (const auto& m : methods) {
    if (m.domain() != Domain::fourier) throw UsageError("correction removes Fourier features; '" + m.name + "' is spatial");
  }
  if (!(a.max_fraction > 0.0 && a.max_fraction <= 1.0)) throw UsageError("max fraction must lie in (0,1]");
  const auto options = a.method_args.resolve(a.common.seed);
  PhaseTimer timer;
  timer.start("load");
  const Checkpoint model = load_model(a.model);
  const LabeledDataset data = load_dataset(a.data, model.spec.classes);
  check_compatible(model, data);
  const std::size_t features = model.spec.input_size();
  const auto schedule = default_correction_schedule(features, a.steps, a.max_fraction);

  const fs::path dir = a.common.out_dir();
  Json reports = Json::array();
  CsvTable csv({"method", "misclassified", "corrected", "rate"});
  struct Render {
    fs::path path;
    std::vector<double> plane;
  };
  std::vector<Render> renders;
  bool empty = false;
  for (const auto& method : methods) {
    timer.start(method.slug());
    const MapProvider provider = [&](std::size_t i, const Tensor& x) {
      return compute_map(method, model, x, i, data.labels[i], options);
    };
    const auto r = correct_misclassified(model, data, provider, schedule, method.name, a.common.workers);
    empty = r.empty;
    Json outcomes = Json::array();
    std::size_t rendered = 0;
    for (const auto& o : r.outcomes) {
      outcomes.push_back(Json{{"sample", o.sample},
                              {"label", data.labels[o.sample]},
                              {"predicted", o.predicted},
                              {"step", o.step ? Json(*o.step) : Json(nullptr)},
                              {"removed", o.removed ? Json(*o.removed) : Json(nullptr)}});
      if (o.step && rendered < a.render) {
        const Tensor& x = data.samples[o.sample];
        const ImportanceMap map = provider(o.sample, x);
        const auto removed = select_deleted(map, schedule[*o.step], DeletionOrder::most_first, true);
        const MultiSpectrum spec = dft2_channels(x);
        std::vector<FeatureIndex> idx;
        for (auto f : removed) idx.push_back(spec.feature_at(f));
        const Tensor signal = deleted_features_to_spatial(x, idx);
        const Tensor corrected = delete_features(x, map, removed, true);
        const fs::path base = dir / "renders" / a.name / method.slug();
        const std::string stem = std::to_string(o.sample);
        renders.push_back({base / (stem + "-input.pgm"), channel_mean(x)});
        renders.push_back({base / (stem + "-removed.pgm"), channel_mean(signal)});
        renders.push_back({base / (stem + "-corrected.pgm"), channel_mean(corrected)});
        ++rendered;
      }
    }
    reports.push_back(Json{{"method", method.name},
                           {"misclassified", r.misclassified},
                           {"corrected", r.corrected},
                           {"rate", r.rate},
                           {"empty", r.empty},
                           {"outcomes", outcomes}});
    csv.add({method.name, std::to_string(r.misclassified), std::to_string(r.corrected), fmt(r.rate)});
  }

  timer.start("write");
  const Json config = {{"common", common_json(a.common)}, {"model", a.model}, {"data", a.data},
                       {"methods", a.methods}, {"steps", a.steps}, {"max_fraction", a.max_fraction},
                       {"schedule", schedule}, {"render", a.render}, {"name", a.name},
                       {"method_options", a.method_args.to_json()}};
  csv.write(dir / (a.name + ".csv"), config);
  const std::size_t h = model.spec.input_shape[1], w = model.spec.input_shape[2];
  for (const auto& r : renders) write_pgm(r.path, r.plane, h, w);
  timer.stop();
  write_report(dir / (a.name + ".json"), "correct", config,
               Json{{"empty_misclassified_set", empty}, {"reports", reports}}, timer);
  if (empty) {
    out << "no misclassified samples; nothing to correct\n";
    return;
  }
  for (const auto& r : reports) {
    out << r["method"].get<std::string>() << ": corrected " << r["corrected"].get<std::size_t>() << " of "
        << r["misclassified"].get<std::size_t>() << "\n";
  }
}

// ---------------------------------------------------------------- driver

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& s) { return s == flag || s.rfind(flag + "=", 0) == 0; });
}

// Splices config-file keys in as flags, skipping keys already given on the command line.
std::vector<std::string> merge_config(const std::vector<std::string>& args, CLI::App& app) {
  const auto sub_it = std::find_if(args.begin(), args.end(), [](const std::string& s) { return !s.empty() && s[0] != '-'; });
  if (sub_it == args.end()) return args;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(*sub_it);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;
  std::vector<std::string> extra;
  for (const auto& [key, value] : read_config_file(config_path)) {
    if (key == "config") throw UsageError("config files cannot include other config files");
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (!opt) throw UsageError("unknown key '" + key + "' in " + config_path + " for " + sub->get_name());
    if (has_flag(args, flag)) continue;
    if (opt->get_items_expected_max() == 0) {
      if (value == "true" || value == "1" || value == "yes" || value == "on") extra.push_back(flag);
      else if (!(value == "false" || value == "0" || value == "no" || value == "off"))
        throw UsageError("key '" + key + "' expects true or false");
      continue;
    }
    extra.push_back(flag);
    extra.push_back(value);
  }
  std::vector<std::string> merged(args.begin(), sub_it + 1);
  merged.insert(merged.end(), extra.begin(), extra.end());
  merged.insert(merged.end(), sub_it + 1, args.end());
  return merged;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fourier feature attribution toolkit", "ffc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ffc 1.0.0");

  DatasetArgs ds;
  auto* s_ds = app.add_subcommand("dataset-gen", "generate a planted-frequency dataset");
  add_common(s_ds, ds.common);
  s_ds->add_option("--name", ds.name, "file name prefix")->capture_default_str();
  s_ds->add_option("--size", ds.size, "image height and width")->capture_default_str();
  s_ds->add_option("--classes", ds.classes)->capture_default_str();
  s_ds->add_option("--frequencies", ds.frequencies, "planted conjugate pairs per class")->capture_default_str();
  s_ds->add_option("--noise", ds.noise, "Gaussian noise sigma")->capture_default_str();
  s_ds->add_option("--train-per-class", ds.train_per_class)->capture_default_str();
  s_ds->add_option("--eval-per-class", ds.eval_per_class)->capture_default_str();
  s_ds->add_option("--label-noise", ds.label_noise, "fraction of training labels to flip")->capture_default_str();
  s_ds->add_option("--amplitude-min", ds.amplitude_min)->capture_default_str();
  s_ds->add_option("--amplitude-max", ds.amplitude_max)->capture_default_str();

  TrainArgs tr;
  auto* s_tr = app.add_subcommand("train", "train a model on an IDX dataset");
  add_common(s_tr, tr.common);
  s_tr->add_option("--data", tr.data, "training images (labels at <name>-labels.idx)");
  s_tr->add_option("--eval", tr.eval, "held-out images for evaluation");
  s_tr->add_option("--arch", tr.arch)->check(CLI::IsMember({"mlp", "convnet"}))->capture_default_str();
  s_tr->add_option("--hidden", tr.hidden, "MLP hidden widths")->delimiter(',')->capture_default_str();
  s_tr->add_option("--conv-channels", tr.conv_channels, "convnet channels")->delimiter(',')->capture_default_str();
  s_tr->add_option("--kernel", tr.kernel)->capture_default_str();
  s_tr->add_option("--epochs", tr.epochs)->capture_default_str();
  s_tr->add_option("--step-size", tr.step_size)->capture_default_str();
  s_tr->add_option("--batch-size", tr.batch_size)->capture_default_str();
  s_tr->add_option("--name", tr.name, "output name prefix")->capture_default_str();
  s_tr->add_flag("--svg", tr.svg, "also plot the training curves");

  AttributeArgs at;
  auto* s_at = app.add_subcommand("attribute", "score features of every sample");
  add_common(s_at, at.common);
  add_method_args(s_at, at.method_args);
  s_at->add_option("--model", at.model, "FFCCKPT1 checkpoint");
  s_at->add_option("--data", at.data, "IDX images");
  s_at->add_option("--method", at.methods,
                   "ffc, input_x_gradient, intgrad, smoothgrad, random, sorted_freq, energy, fft_of:<m>, ifft_of:<m>")
      ->delimiter(',')
      ->capture_default_str();
  s_at->add_option("--limit", at.limit, "first N samples only (0: all)")->capture_default_str();
  s_at->add_option("--name", at.name, "manifest name")->capture_default_str();

  GameArgs gm;
  auto* s_gm = app.add_subcommand("game", "deletion game over attribution maps");
  add_common(s_gm, gm.common);
  s_gm->add_option("--manifest", gm.manifest, "attribute manifest JSON");
  s_gm->add_option("--model", gm.model, "checkpoint (default: from manifest)");
  s_gm->add_option("--data", gm.data, "dataset (default: from manifest)");
  s_gm->add_option("--method", gm.methods, "subset of manifest methods")->delimiter(',');
  s_gm->add_option("--domain", gm.domain)->check(CLI::IsMember({"all", "fourier", "spatial"}))->capture_default_str();
  s_gm->add_option("--direction", gm.direction)
      ->check(CLI::IsMember({"both", "least_first", "most_first"}))
      ->capture_default_str();
  s_gm->add_option("--fraction-max", gm.fraction_max)->capture_default_str();
  s_gm->add_option("--fraction-step", gm.fraction_step)->capture_default_str();
  s_gm->add_flag("--no-pair", gm.no_pair, "delete Fourier features without their conjugates");
  s_gm->add_flag("--svg", gm.svg, "plot curves per method");
  s_gm->add_option("--name", gm.name)->capture_default_str();

  SweepArgs sw;
  auto* s_sw = app.add_subcommand("sweep", "FFC loss and AUC over a (lr, iterations) grid");
  add_common(s_sw, sw.common);
  add_method_args(s_sw, sw.method_args);
  s_sw->add_option("--model", sw.model);
  s_sw->add_option("--data", sw.data);
  s_sw->add_option("--lrs", sw.lrs)->delimiter(',')->capture_default_str();
  s_sw->add_option("--iterations", sw.iterations)->delimiter(',')->capture_default_str();
  s_sw->add_option("--limit", sw.limit, "first N samples only (0: all)")->capture_default_str();
  s_sw->add_flag("--svg", sw.svg, "scatter AUC against loss");
  s_sw->add_option("--name", sw.name)->capture_default_str();

  AnalyzeArgs an;
  auto* s_an = app.add_subcommand("analyze", "concentration, specificity and maintain rate");
  add_common(s_an, an.common);
  s_an->add_option("--manifest", an.manifest, "attribute manifest JSON");
  s_an->add_option("--model", an.model, "checkpoint (default: from manifest)");
  s_an->add_option("--data", an.data, "dataset (default: from manifest)");
  s_an->add_option("--method", an.methods, "subset of manifest methods")->delimiter(',');
  s_an->add_option("--keep", an.keep, "keep fractions for the maintain curve")->delimiter(',')->capture_default_str();
  s_an->add_flag("--svg", an.svg, "plot maintain curves");
  s_an->add_option("--name", an.name)->capture_default_str();

  CorrectArgs co;
  auto* s_co = app.add_subcommand("correct", "remove top features of misclassified samples");
  add_common(s_co, co.common);
  add_method_args(s_co, co.method_args);
  s_co->add_option("--model", co.model);
  s_co->add_option("--data", co.data);
  s_co->add_option("--method", co.methods)->delimiter(',')->capture_default_str();
  s_co->add_option("--steps", co.steps)->capture_default_str();
  s_co->add_option("--max-fraction", co.max_fraction, "largest removal as a fraction of all features")
      ->capture_default_str();
  s_co->add_option("--render", co.render, "write PGM renders for the first N corrected samples per method")
      ->capture_default_str();
  s_co->add_option("--name", co.name)->capture_default_str();

  try {
    auto merged = merge_config(args, app);
    std::reverse(merged.begin(), merged.end());
    app.parse(merged);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  }

  try {
    if (s_ds->parsed()) cmd_dataset_gen(ds, out);
    else if (s_tr->parsed()) cmd_train(tr, out);
    else if (s_at->parsed()) cmd_attribute(at, out);
    else if (s_gm->parsed()) cmd_game(gm, out);
    else if (s_sw->parsed()) cmd_sweep(sw, out);
    else if (s_an->parsed()) cmd_analyze(an, out);
    else if (s_co->parsed()) cmd_correct(co, out);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace ffc::cli
