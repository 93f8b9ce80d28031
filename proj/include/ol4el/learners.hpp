#pragma once

// Trainable models shared by edges and the cloud: mini-batch K-means and a
// one-vs-rest linear SVM trained with Pegasos steps. Both live in a flat
// parameter vector so aggregation and merging are element-wise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ol4el/assignment.hpp"
#include "ol4el/data.hpp"
#include "ol4el/errors.hpp"
#include "ol4el/random.hpp"

namespace ol4el {

enum class ModelKind { KMeans, Svm };

// KMeans layout: K*d centers (row-major), then K cumulative assignment counts.
// Svm layout: for each class c, d weights followed by the bias.
struct ModelParams {
  ModelKind kind = ModelKind::KMeans;
  std::size_t rows = 0;  // K centers or C classes
  std::size_t dim = 0;
  std::vector<double> values;
  std::uint64_t step_counter = 0;  // Svm
  double lambda = 0.0;             // Svm

  static ModelParams kmeans(std::size_t k, std::size_t dim) {
    if (k < 1) throw ConfigError("K-means needs K >= 1", "task.k");
    ModelParams m;
    m.kind = ModelKind::KMeans;
    m.rows = k;
    m.dim = dim;
    m.values.assign(k * dim + k, 0.0);
    return m;
  }

  static ModelParams svm(std::size_t classes, std::size_t dim, double lambda) {
    if (classes < 2) throw ConfigError("SVM needs C >= 2", "task.classes");
    if (!(lambda > 0.0)) throw ConfigError("SVM lambda must be > 0", "task.lambda");
    ModelParams m;
    m.kind = ModelKind::Svm;
    m.rows = classes;
    m.dim = dim;
    m.lambda = lambda;
    m.values.assign(classes * (dim + 1), 0.0);
    return m;
  }

  std::span<double> center(std::size_t k) { return {values.data() + k * dim, dim}; }
  std::span<const double> center(std::size_t k) const { return {values.data() + k * dim, dim}; }
  double& count(std::size_t k) { return values[rows * dim + k]; }
  double count(std::size_t k) const { return values[rows * dim + k]; }
  // Number of leading values that are model coordinates (excludes K-means counts).
  std::size_t coordinate_count() const { return kind == ModelKind::KMeans ? rows * dim : values.size(); }

  std::span<double> weights(std::size_t c) { return {values.data() + c * (dim + 1), dim}; }
  std::span<const double> weights(std::size_t c) const { return {values.data() + c * (dim + 1), dim}; }
  double& bias(std::size_t c) { return values[c * (dim + 1) + dim]; }
  double bias(std::size_t c) const { return values[c * (dim + 1) + dim]; }

  bool same_shape(const ModelParams& o) const {
    return kind == o.kind && rows == o.rows && dim == o.dim && values.size() == o.values.size();
  }

  bool operator==(const ModelParams&) const = default;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::size_t nearest_center(const ModelParams& m, std::span<const double> x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < m.rows; ++k) {
    const double d = squared_distance(m.center(k), x);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

inline void require_same_shape(const ModelParams& a, const ModelParams& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("models differ in kind or shape");
}

}  // namespace detail

// One local iteration on `batch`, in place.
inline void local_iterate_inplace(ModelParams& model, const Batch& batch) {
  if (batch.size() == 0) return;
  if (batch.dim != model.dim)
    throw DimensionMismatch("batch has dimension " + std::to_string(batch.dim) + ", model expects " +
                            std::to_string(model.dim));
  if (model.kind == ModelKind::KMeans) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto x = batch.row(i);
      const std::size_t k = detail::nearest_center(model, x);
      double& n = model.count(k);
      n += 1.0;
      const double step = 1.0 / n;
      auto c = model.center(k);
      for (std::size_t j = 0; j < model.dim; ++j) c[j] += step * (x[j] - c[j]);
    }
    return;
  }

  if (batch.labels.size() != batch.size()) throw DimensionMismatch("SVM training needs one label per point");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto x = batch.row(i);
    const int label = batch.labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= model.rows)
      throw DimensionMismatch("label " + std::to_string(label) + " outside [0, C)");
    model.step_counter += 1;
    const double eta = 1.0 / (model.lambda * static_cast<double>(model.step_counter));
    const double shrink = 1.0 - eta * model.lambda;
    for (std::size_t c = 0; c < model.rows; ++c) {
      const double y = static_cast<std::size_t>(label) == c ? 1.0 : -1.0;
      auto w = model.weights(c);
      double& b = model.bias(c);
      const double margin = y * (detail::dot(w, x) + b);
      // The bias is shrunk like a weight (an appended constant feature);
      // left unregularized it keeps the huge early steps forever.
      for (auto& wj : w) wj *= shrink;
      b *= shrink;
      if (margin < 1.0) {
        for (std::size_t j = 0; j < model.dim; ++j) w[j] += eta * y * x[j];
        b += eta * y;
      }
    }
  }
}

inline ModelParams local_iterate(ModelParams model, const Batch& batch) {
  local_iterate_inplace(model, batch);
  return model;
}

// Weighted element-wise mean. K-means counts are summed instead of averaged;
// the SVM step counter takes the maximum.
inline ModelParams aggregate_weighted(std::span<const ModelParams> models, std::span<const double> weights) {
  if (models.empty()) throw ShapeMismatch("nothing to aggregate");
  if (models.size() != weights.size()) throw ShapeMismatch("one weight per model is required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("aggregation weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ZeroWeightSum("aggregation weights sum to zero");
  for (const auto& m : models) detail::require_same_shape(models.front(), m);

  ModelParams out = models.front();
  const std::size_t coords = out.coordinate_count();
  std::fill(out.values.begin(), out.values.end(), 0.0);
  for (std::size_t i = 0; i < models.size(); ++i) {
    const double w = weights[i] / total;
    const auto& v = models[i].values;
    for (std::size_t j = 0; j < coords; ++j) out.values[j] += w * v[j];
    for (std::size_t j = coords; j < v.size(); ++j) out.values[j] += v[j];
    out.step_counter = std::max(out.step_counter, models[i].step_counter);
  }
  return out;
}

// After aggregating locals that all started from `base`, make the history
// counters describe every sample seen exactly once: K-means counts (summed by
// aggregate_weighted) drop the n-1 extra copies of the base counts, and the
// SVM step counter becomes base + the sum of per-local increments instead of
// the max.
inline void rebase_counts(ModelParams& aggregate, const ModelParams& base, std::span<const ModelParams> locals) {
  if (locals.size() <= 1) return;
  detail::require_same_shape(aggregate, base);
  if (aggregate.kind == ModelKind::KMeans) {
    for (std::size_t k = 0; k < aggregate.rows; ++k)
      aggregate.count(k) -= static_cast<double>(locals.size() - 1) * base.count(k);
    return;
  }
  std::uint64_t steps = base.step_counter;
  for (const auto& m : locals) steps += m.step_counter - std::min(m.step_counter, base.step_counter);
  aggregate.step_counter = steps;
}

// (1 - a) * global + a * local with a = alpha0 / (1 + staleness).
inline ModelParams async_merge(const ModelParams& global, const ModelParams& local, std::uint64_t staleness,
                               double alpha0) {
  detail::require_same_shape(global, local);
  if (!(alpha0 > 0.0 && alpha0 <= 1.0)) throw ConfigError("alpha0 must lie in (0,1]", "mode.alpha0");
  const double alpha = alpha0 / (1.0 + static_cast<double>(staleness));
  const double keep = 1.0 - alpha;
  ModelParams out = global;
  for (std::size_t j = 0; j < out.values.size(); ++j) out.values[j] = keep * global.values[j] + alpha * local.values[j];
  out.step_counter = std::max(global.step_counter, local.step_counter);
  return out;
}

// Euclidean distance between consecutive parameter vectors. K-means centers
// are first paired greedily (closest pair first) so relabeling is free.
inline double parameter_distance(const ModelParams& prev, const ModelParams& next) {
  detail::require_same_shape(prev, next);
  if (prev.kind == ModelKind::Svm) return std::sqrt(detail::squared_distance(prev.values, next.values));

  const std::size_t k = prev.rows;
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  pairs.reserve(k * k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      pairs.emplace_back(detail::squared_distance(next.center(a), prev.center(b)), a, b);
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> next_used(k, false), prev_used(k, false);
  double total = 0.0;
  std::size_t matched = 0;
  for (const auto& [d2, a, b] : pairs) {
    if (next_used[a] || prev_used[b]) continue;
    next_used[a] = prev_used[b] = true;
    total += d2;
    if (++matched == k) break;
  }
  return std::sqrt(total);
}

inline std::vector<int> predict_clusters(const ModelParams& model, const Batch& batch) {
  std::vector<int> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    out[i] = static_cast<int>(detail::nearest_center(model, batch.row(i)));
  return out;
}

// Macro F1 over the test labels after the best one-to-one cluster/label matching.
inline double evaluate_f1(const ModelParams& model, const Batch& testset) {
  if (model.kind != ModelKind::KMeans) throw std::invalid_argument("F1 evaluation expects a K-means model");
  if (testset.size() == 0) throw EmptyTestSet("F1 needs a non-empty test set");
  if (testset.labels.size() != testset.size()) throw MissingTestSet("F1 needs a labeled test set");
  if (testset.dim != model.dim) throw DimensionMismatch("test set dimension differs from model");

  const auto clusters = predict_clusters(model, testset);
  const std::size_t k = model.rows;
  const std::size_t l = static_cast<std::size_t>(*std::max_element(testset.labels.begin(), testset.labels.end())) + 1;
  std::vector<double> joint(k * l, 0.0), cluster_size(k, 0.0), label_size(l, 0.0);
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const auto c = static_cast<std::size_t>(clusters[i]);
    const auto y = static_cast<std::size_t>(testset.labels[i]);
    joint[c * l + y] += 1.0;
    cluster_size[c] += 1.0;
    label_size[y] += 1.0;
  }
  std::vector<double> neg_f1(k * l, 0.0);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t y = 0; y < l; ++y) {
      const double denom = cluster_size[c] + label_size[y];
      neg_f1[c * l + y] = denom > 0.0 ? -2.0 * joint[c * l + y] / denom : 0.0;
    }
  const auto match = solve_assignment(neg_f1, k, l);
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c)
    if (match[c] >= 0) total -= neg_f1[c * l + static_cast<std::size_t>(match[c])];
  std::size_t present = 0;
  for (double s : label_size)
    if (s > 0.0) ++present;
  return total / static_cast<double>(present);
}

inline int predict_class(const ModelParams& model, std::span<const double> x) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < model.rows; ++c) {
    const double s = detail::dot(model.weights(c), x) + model.bias(c);
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return static_cast<int>(best);
}

inline double evaluate_accuracy(const ModelParams& model, const Batch& testset) {
  if (model.kind != ModelKind::Svm) throw std::invalid_argument("accuracy evaluation expects an SVM model");
  if (testset.size() == 0) throw EmptyTestSet("accuracy needs a non-empty test set");
  if (testset.labels.size() != testset.size()) throw MissingTestSet("accuracy needs a labeled test set");
  if (testset.dim != model.dim) throw DimensionMismatch("test set dimension differs from model");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < testset.size(); ++i)
    if (predict_class(model, testset.row(i)) == testset.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(testset.size());
}

// F1 for K-means, accuracy for the SVM.
inline double evaluate(const ModelParams& model, const Batch& testset) {
  return model.kind == ModelKind::KMeans ? evaluate_f1(model, testset) : evaluate_accuracy(model, testset);
}

enum class UtilityMode { ParamDelta, TestSet };

inline constexpr double kUtilityFloor = 1e-6;

// Bandit reward in (0,1]: 1 / (1 + distance) or the floored test metric.
inline double utility(const ModelParams& prev_global, const ModelParams& new_global, UtilityMode mode,
                      const Batch* testset = nullptr) {
  if (mode == UtilityMode::ParamDelta) return 1.0 / (1.0 + parameter_distance(prev_global, new_global));
  if (testset == nullptr || testset->size() == 0 || testset->labels.size() != testset->size())
    throw MissingTestSet("test-set utility needs a labeled test set");
  return std::max(evaluate(new_global, *testset), kUtilityFloor);
}

namespace detail {

// One greedy k-means++ pass: each new center is the best of 2 + ln(k)
// D^2-sampled candidates. Returns the seeding and its potential.
inline std::pair<ModelParams, double> greedy_seeding(const Batch& points, std::size_t k, Rng& rng) {
  ModelParams model = ModelParams::kmeans(k, points.dim);
  const std::size_t n = points.size();
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  auto pick = points.row(first(rng));
  std::copy(pick.begin(), pick.end(), model.center(0).begin());

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = detail::squared_distance(points.row(i), model.center(0));
  std::vector<double> candidate_d2(n);
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t best = 0;
    double best_potential = std::numeric_limits<double>::infinity();
    std::vector<double> best_d2;
    for (std::size_t t = 0; t < trials; ++t) {
      std::size_t chosen = first(rng);
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        const double target = u(rng);
        double acc = 0.0;
        chosen = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          acc += d2[i];
          if (target < acc) {
            chosen = i;
            break;
          }
        }
      }
      double potential = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        candidate_d2[i] = std::min(d2[i], detail::squared_distance(points.row(i), points.row(chosen)));
        potential += candidate_d2[i];
      }
      if (potential < best_potential) {
        best_potential = potential;
        best = chosen;
        best_d2 = candidate_d2;
      }
    }
    auto row = points.row(best);
    std::copy(row.begin(), row.end(), model.center(c).begin());
    d2 = std::move(best_d2);
  }
  return {std::move(model), std::accumulate(d2.begin(), d2.end(), 0.0)};
}

}  // namespace detail

// k-means++ seeding over `points`, keeping the lowest-potential result of
// `restarts` greedy passes so one unlucky draw cannot pick a bad basin.
inline ModelParams kmeans_plus_plus(const Batch& points, std::size_t k, Rng& rng, std::size_t restarts = 10) {
  if (points.size() == 0) throw EmptyTestSet("k-means++ needs at least one point");
  auto [best, best_potential] = detail::greedy_seeding(points, k, rng);
  for (std::size_t r = 1; r < restarts; ++r) {
    auto [model, potential] = detail::greedy_seeding(points, k, rng);
    if (potential < best_potential) {
      best = std::move(model);
      best_potential = potential;
    }
  }
  return best;
}

}  // namespace ol4el
