#include "ffc/game.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ffc/error.hpp"
#include "ffc/fourier.hpp"
#include "ffc/parallel.hpp"

namespace ffc {
namespace {

std::size_t conjugate_flat(const ImportanceMap& map, std::size_t flat) {
  const std::size_t plane = map.height * map.width;
  const std::size_t c = flat / plane, u = (flat % plane) / map.width, v = flat % map.width;
  const auto p = conjugate_pair({c, u, v}, map.height, map.width);
  return (p.channel * map.height + p.u) * map.width + p.v;
}

void check_dims(const Tensor& x, const ImportanceMap& map) {
  if (x.rank() != 3 || x.dim(0) != map.channels || x.dim(1) != map.height || x.dim(2) != map.width) {
    throw UsageError("importance map dims do not match input " + shape_string(x.shape()));
  }
}

}  // namespace

std::string to_string(DeletionOrder order) {
  return order == DeletionOrder::least_first ? "least_first" : "most_first";
}

std::string to_string(GameDirection direction) {
  switch (direction) {
    case GameDirection::least_first: return "least_first";
    case GameDirection::most_first: return "most_first";
    case GameDirection::both: return "both";
  }
  return "?";
}

GameDirection parse_game_direction(const std::string& name) {
  if (name == "least_first") return GameDirection::least_first;
  if (name == "most_first") return GameDirection::most_first;
  if (name == "both") return GameDirection::both;
  throw UsageError("unknown game direction '" + name + "'");
}

std::vector<double> GameConfig::default_fractions() {
  std::vector<double> f;
  for (int i = 0; i < 20; ++i) f.push_back(i / 20.0);
  return f;
}

void GameConfig::validate() const {
  if (fractions.empty() || fractions.front() != 0.0) throw UsageError("fraction grid must start at 0");
  for (std::size_t i = 1; i < fractions.size(); ++i) {
    if (!(fractions[i] > fractions[i - 1])) throw UsageError("fraction grid must be strictly ascending");
  }
  if (fractions.back() > 1.0) throw UsageError("fractions must not exceed 1");
}

std::size_t deletion_budget(double fraction, std::size_t features) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw UsageError("deletion fraction must lie in [0,1]");
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(features)));
}

std::vector<std::size_t> ranking(const ImportanceMap& map, DeletionOrder order) {
  std::vector<std::size_t> idx(map.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto& s = map.scores;
  if (order == DeletionOrder::least_first) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
  } else {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  }
  return idx;
}

std::vector<std::size_t> select_deleted(const ImportanceMap& map, std::size_t budget, DeletionOrder order,
                                        bool pair_conjugates) {
  map.validate();
  budget = std::min(budget, map.size());
  std::vector<std::size_t> out;
  if (budget == 0) return out;
  const auto ranked = ranking(map, order);
  if (map.domain == Domain::spatial || !pair_conjugates) {
    out.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(budget));
    std::sort(out.begin(), out.end());
    return out;
  }
  std::vector<bool> taken(map.size(), false);
  std::size_t count = 0;
  for (auto idx : ranked) {
    if (count >= budget) break;
    if (taken[idx]) continue;
    const std::size_t partner = conjugate_flat(map, idx);
    const std::size_t cost = partner == idx ? 1 : 2;
    if (count + cost > budget) break;
    taken[idx] = taken[partner] = true;
    out.push_back(idx);
    if (partner != idx) out.push_back(partner);
    count += cost;
  }
  std::sort(out.begin(), out.end());
  return out;
}

Tensor delete_features(const Tensor& x, const ImportanceMap& map, std::span<const std::size_t> features,
                       bool pair_conjugates) {
  check_dims(x, map);
  if (features.empty()) return x;
  if (map.domain == Domain::spatial) {
    Tensor out = x;
    for (auto f : features) {
      if (f >= out.size()) throw UsageError("spatial feature index out of range");
      out[f] = 0.0;
    }
    return out;
  }
  const MultiSpectrum spec = dft2_channels(x);
  std::vector<FeatureIndex> idx;
  idx.reserve(features.size());
  for (auto f : features) {
    if (f >= map.size()) throw UsageError("Fourier feature index out of range");
    idx.push_back(spec.feature_at(f));
  }
  return idft2_channels(delete_components(spec, idx, pair_conjugates));
}

Tensor delete_fraction(const Tensor& x, const ImportanceMap& map, double fraction, DeletionOrder order,
                       const GameConfig& config) {
  if (map.domain != config.domain) {
    throw UsageError("importance map domain " + to_string(map.domain) + " does not match game domain " +
                     to_string(config.domain));
  }
  const auto deleted = select_deleted(map, deletion_budget(fraction, map.size()), order, config.pair_conjugates);
  return delete_features(x, map, deleted, config.pair_conjugates);
}

double relative_confidence(const Checkpoint& model, const Tensor& x_modified, const Tensor& x_original) {
  const auto base = softmax(forward_one(model, x_original.values()));
  const auto c = static_cast<std::size_t>(std::max_element(base.begin(), base.end()) - base.begin());
  if (x_modified == x_original) return 1.0;
  const auto mod = softmax(forward_one(model, x_modified.values()));
  return mod[c] / base[c];
}

double trapezoid_percent(std::span<const double> fractions, std::span<const double> values) {
  if (fractions.size() != values.size()) throw UsageError("trapezoid: length mismatch");
  double area = 0.0;
  for (std::size_t i = 1; i < fractions.size(); ++i) {
    area += 0.5 * (values[i] + values[i - 1]) * 100.0 * (fractions[i] - fractions[i - 1]);
  }
  return area;
}

MeanStderr mean_and_stderr(std::span<const double> values) {
  MeanStderr out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.standard_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

GameReport deletion_curves(const Checkpoint& model, std::span<const Tensor> samples,
                           std::span<const ImportanceMap> maps, const GameConfig& config, std::size_t workers,
                           bool retain_per_sample) {
  config.validate();
  if (samples.size() != maps.size()) {
    throw UsageError("got " + std::to_string(maps.size()) + " maps for " + std::to_string(samples.size()) + " samples");
  }
  for (const auto& m : maps) {
    if (m.domain != config.domain) throw UsageError("importance map domain does not match game domain");
  }
  std::vector<DeletionOrder> orders;
  if (config.direction != GameDirection::most_first) orders.push_back(DeletionOrder::least_first);
  if (config.direction != GameDirection::least_first) orders.push_back(DeletionOrder::most_first);

  const std::size_t n = samples.size(), nf = config.fractions.size();
  // values[order][sample][fraction]
  std::vector<std::vector<std::vector<double>>> values(orders.size(), std::vector<std::vector<double>>(n));
  parallel_for(n, workers, [&](std::size_t i) {
    const Tensor& x = samples[i];
    const auto base = softmax(forward_one(model, x.values()));
    const auto c = static_cast<std::size_t>(std::max_element(base.begin(), base.end()) - base.begin());
    for (std::size_t o = 0; o < orders.size(); ++o) {
      auto& row = values[o][i];
      row.resize(nf);
      for (std::size_t k = 0; k < nf; ++k) {
        const auto deleted =
            select_deleted(maps[i], deletion_budget(config.fractions[k], maps[i].size()), orders[o], config.pair_conjugates);
        if (deleted.empty()) {
          row[k] = 1.0;
          continue;
        }
        const Tensor modified = delete_features(x, maps[i], deleted, config.pair_conjugates);
        row[k] = softmax(forward_one(model, modified.values()))[c] / base[c];
      }
    }
  });

  GameReport report;
  report.samples = n;
  report.config = config;
  for (std::size_t o = 0; o < orders.size(); ++o) {
    DeletionCurve curve;
    curve.order = orders[o];
    curve.fractions = config.fractions;
    for (std::size_t k = 0; k < nf; ++k) {
      std::vector<double> column(n);
      for (std::size_t i = 0; i < n; ++i) column[i] = values[o][i][k];
      const auto ms = mean_and_stderr(column);
      curve.mean.push_back(ms.mean);
      curve.standard_error.push_back(ms.standard_error);
    }
    if (retain_per_sample) curve.per_sample = values[o];
    (orders[o] == DeletionOrder::least_first ? report.least_first : report.most_first) = std::move(curve);
  }
  if (report.least_first && report.most_first) {
    report.auc = trapezoid_percent(config.fractions, report.least_first->mean) -
                 trapezoid_percent(config.fractions, report.most_first->mean);
    report.per_sample_auc.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      report.per_sample_auc[i] =
          trapezoid_percent(config.fractions, values[0][i]) - trapezoid_percent(config.fractions, values[1][i]);
    }
    report.auc_standard_error = mean_and_stderr(report.per_sample_auc).standard_error;
  }
  return report;
}

}  // namespace ffc
