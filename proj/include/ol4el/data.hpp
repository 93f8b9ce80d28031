#pragma once

// Datasets, CSV ingestion, synthetic generators and edge partitioning.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ol4el/errors.hpp"
#include "ol4el/random.hpp"

namespace ol4el {

// Read-only window onto m consecutive rows. `labels` is empty for unlabeled data.
struct Batch {
  std::span<const double> points;
  std::size_t dim = 0;
  std::span<const int> labels;

  std::size_t size() const { return dim == 0 ? 0 : points.size() / dim; }
  std::span<const double> row(std::size_t i) const { return points.subspan(i * dim, dim); }
  bool labeled() const { return !labels.empty() || size() == 0; }
};

struct Dataset {
  std::string name;
  std::size_t dim = 0;
  std::vector<double> points;  // row-major, size() * dim
  std::vector<int> labels;     // empty, or one per row

  std::size_t size() const { return dim == 0 ? 0 : points.size() / dim; }
  bool labeled() const { return !labels.empty(); }
  std::span<const double> row(std::size_t i) const { return {points.data() + i * dim, dim}; }

  Batch rows(std::size_t begin, std::size_t end) const {
    Batch b;
    b.dim = dim;
    b.points = std::span<const double>(points).subspan(begin * dim, (end - begin) * dim);
    if (labeled()) b.labels = std::span<const int>(labels).subspan(begin, end - begin);
    return b;
  }
  Batch all() const { return rows(0, size()); }

  int num_classes() const {
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  }

  Dataset subset(std::span<const std::size_t> indices, std::string subset_name = {}) const {
    Dataset out;
    out.name = subset_name.empty() ? name : std::move(subset_name);
    out.dim = dim;
    out.points.reserve(indices.size() * dim);
    if (labeled()) out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
      auto r = row(i);
      out.points.insert(out.points.end(), r.begin(), r.end());
      if (labeled()) out.labels.push_back(labels[i]);
    }
    return out;
  }

  void append(const Dataset& other) {
    if (dim == 0) dim = other.dim;
    if (other.dim != dim) throw DimensionMismatch("cannot append datasets of different dimension");
    points.insert(points.end(), other.points.begin(), other.points.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<int> parse_int(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

// Parses CSV text: d feature columns, then an optional integer label column.
// With `labeled` unset the last column is a label iff its header says "label"
// or (without header) every value in it is an integer; rows are numbered from 1,
// excluding the header.
inline Dataset parse_csv(std::string_view text, std::optional<bool> labeled = std::nullopt,
                         std::string name = "csv") {
  std::vector<std::vector<std::string_view>> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = detail::trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty()) continue;
    rows.push_back(detail::split_commas(line));
  }
  Dataset ds;
  ds.name = std::move(name);
  if (rows.empty()) return ds;

  // A header row has no numeric cell; a partly numeric first row is data.
  bool has_header = true;
  for (auto cell : rows.front())
    if (detail::parse_double(cell)) has_header = false;
  std::optional<bool> label_column = labeled;
  if (has_header && !label_column) {
    auto last = rows.front().back();
    label_column = (last == "label" || last == "y" || last == "class");
  }
  const std::size_t first = has_header ? 1 : 0;
  const std::size_t columns = rows.front().size();
  if (!label_column) {
    bool all_int = rows.size() > first && columns >= 2;
    for (std::size_t r = first; r < rows.size() && all_int; ++r)
      if (rows[r].size() != columns || !detail::parse_int(rows[r].back())) all_int = false;
    label_column = all_int;
  }
  const std::size_t dim = *label_column ? columns - 1 : columns;
  if (dim == 0) throw ParseError(1, "no feature columns");
  ds.dim = dim;

  for (std::size_t r = first; r < rows.size(); ++r) {
    const std::size_t row_no = r - first + 1;
    const auto& cells = rows[r];
    if (cells.size() != columns)
      throw ParseError(row_no, "expected " + std::to_string(columns) + " columns, found " +
                                   std::to_string(cells.size()));
    for (std::size_t c = 0; c < dim; ++c) {
      auto v = detail::parse_double(cells[c]);
      if (!v) throw ParseError(row_no, "non-numeric value '" + std::string(cells[c]) + "'");
      ds.points.push_back(*v);
    }
    if (*label_column) {
      auto y = detail::parse_int(cells.back());
      if (!y || *y < 0) throw ParseError(row_no, "invalid label '" + std::string(cells.back()) + "'");
      ds.labels.push_back(*y);
    }
  }
  return ds;
}

inline Dataset load_csv(const std::string& path, std::optional<bool> labeled = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), labeled, path);
}

// Writes a header row (x0,...,x{d-1}[,label]) and shortest round-trip values.
inline std::string to_csv(const Dataset& ds) {
  std::string out;
  for (std::size_t c = 0; c < ds.dim; ++c) {
    if (c) out += ',';
    out += 'x' + std::to_string(c);
  }
  out += ds.labeled() ? ",label\n" : "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto r = ds.row(i);
    for (std::size_t c = 0; c < ds.dim; ++c) {
      if (c) out += ',';
      out += detail::format_double(r[c]);
    }
    if (ds.labeled()) {
      out += ',';
      out += std::to_string(ds.labels[i]);
    }
    out += '\n';
  }
  return out;
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << to_csv(ds);
}

// K isotropic Gaussian clusters whose centers are pairwise >= separation apart.
// Point i belongs to cluster i mod K before shuffling, so clusters are balanced.
inline Dataset gen_blobs(std::size_t k, std::size_t dim, std::size_t n, double separation,
                         double noise_sigma, std::uint64_t seed) {
  if (k < 1) throw ConfigError("blobs need K >= 1", "data.k");
  if (dim < 1) throw ConfigError("blobs need d >= 1", "data.dim");
  if (n < k) throw ConfigError("blobs need n >= K", "data.n");
  if (separation < 0.0 || noise_sigma < 0.0)
    throw ConfigError("separation and sigma must be >= 0", "data.separation");
  Rng rng = make_rng(seed, Stream::Generator, 1);

  // Rejection sampling in a box that grows if placement keeps failing.
  std::vector<double> centers(k * dim);
  double side = separation * static_cast<double>(k) + 1.0;
  for (std::size_t placed = 0; placed < k;) {
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      std::uniform_real_distribution<double> u(0.0, side);
      for (std::size_t c = 0; c < dim; ++c) centers[placed * dim + c] = u(rng);
      ok = true;
      for (std::size_t j = 0; j < placed && ok; ++j) {
        double d2 = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
          const double diff = centers[placed * dim + c] - centers[j * dim + c];
          d2 += diff * diff;
        }
        ok = std::sqrt(d2) >= separation;
      }
    }
    if (ok)
      ++placed;
    else
      side *= 2.0;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  Dataset ds;
  ds.name = "blobs";
  ds.dim = dim;
  ds.points.resize(n * dim);
  ds.labels.resize(n);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cluster = order[i] % k;
    ds.labels[i] = static_cast<int>(cluster);
    for (std::size_t c = 0; c < dim; ++c)
      ds.points[i * dim + c] = centers[cluster * dim + c] + noise_sigma * noise(rng);
  }
  return ds;
}

// Multi-class linear model used to plant labels: score_c(x) = w_c . x + b_c.
struct PlantedLinearModel {
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // classes * dim
  std::vector<double> biases;   // classes

  double score(std::size_t c, std::span<const double> x) const {
    double s = biases[c];
    for (std::size_t j = 0; j < dim; ++j) s += weights[c * dim + j] * x[j];
    return s;
  }

  int predict(std::span<const double> x) const {
    std::size_t best = 0;
    double best_score = score(0, x);
    for (std::size_t c = 1; c < classes; ++c) {
      const double s = score(c, x);
      if (s > best_score) {
        best = c;
        best_score = s;
      }
    }
    return static_cast<int>(best);
  }
};

struct LinearDataset {
  Dataset data;
  PlantedLinearModel planted;
};

// Points x ~ N(0, I_d) labeled by a random unit-norm linear model; points whose
// top-two score gap is below `margin` are rejected and redrawn. A fraction
// `label_noise` of the labels is then reassigned to a different class.
inline LinearDataset gen_linear_multiclass(std::size_t classes, std::size_t dim, std::size_t n,
                                           double margin, std::uint64_t seed, double label_noise = 0.0) {
  if (classes < 2) throw ConfigError("linear data needs C >= 2", "data.classes");
  if (dim < 1) throw ConfigError("linear data needs d >= 1", "data.dim");
  if (margin < 0.0) throw ConfigError("margin must be >= 0", "data.margin");
  if (label_noise < 0.0 || label_noise >= 1.0)
    throw ConfigError("label noise must lie in [0,1)", "data.label_noise");
  Rng rng = make_rng(seed, Stream::Generator, 2);
  std::normal_distribution<double> normal(0.0, 1.0);

  LinearDataset out;
  auto& model = out.planted;
  model.classes = classes;
  model.dim = dim;
  model.weights.resize(classes * dim);
  model.biases.assign(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    double norm = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double w = normal(rng);
      model.weights[c * dim + j] = w;
      norm += w * w;
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < dim; ++j) model.weights[c * dim + j] /= norm;
  }

  auto& ds = out.data;
  ds.name = "linear";
  ds.dim = dim;
  ds.points.reserve(n * dim);
  ds.labels.reserve(n);
  std::vector<double> x(dim);
  std::vector<double> scores(classes);
  while (ds.labels.size() < n) {
    for (auto& v : x) v = normal(rng);
    for (std::size_t c = 0; c < classes; ++c) scores[c] = model.score(c, x);
    std::size_t top = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (scores[c] > scores[top]) top = c;
    double second = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c)
      if (c != top) second = std::max(second, scores[c]);
    if (scores[top] - second < margin) continue;
    ds.points.insert(ds.points.end(), x.begin(), x.end());
    ds.labels.push_back(static_cast<int>(top));
  }

  if (label_noise > 0.0) {
    std::bernoulli_distribution flip(label_noise);
    std::uniform_int_distribution<int> other(1, static_cast<int>(classes) - 1);
    for (auto& y : ds.labels)
      if (flip(rng)) y = (y + other(rng)) % static_cast<int>(classes);
  }
  return out;
}

enum class PartitionScheme { IID, LabelSkew };

struct PartitionSpec {
  PartitionScheme scheme = PartitionScheme::IID;
  double beta = 0.5;  // Dirichlet concentration, LabelSkew only
  std::size_t edges = 1;
  std::uint64_t seed = 0;
};

// Returns per-edge index lists: disjoint, exhaustive, each non-empty.
inline std::vector<std::vector<std::size_t>> partition_indices(const Dataset& ds, const PartitionSpec& spec) {
  const std::size_t n = ds.size();
  if (spec.edges < 1) throw PartitionError("need at least one edge");
  if (spec.edges > n) throw PartitionError("more edges than data points");
  Rng rng = make_rng(spec.seed, Stream::Partition);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  if (spec.scheme == PartitionScheme::IID) {
    std::vector<std::vector<std::size_t>> shards(spec.edges);
    const std::size_t base = n / spec.edges;
    const std::size_t extra = n % spec.edges;
    std::size_t pos = 0;
    for (std::size_t e = 0; e < spec.edges; ++e) {
      const std::size_t len = base + (e < extra ? 1 : 0);
      shards[e].assign(order.begin() + pos, order.begin() + pos + len);
      pos += len;
    }
    return shards;
  }

  if (!ds.labeled()) throw PartitionError("label-skew partition needs labels");
  if (!(spec.beta > 0.0)) throw PartitionError("Dirichlet beta must be > 0");
  const int classes = ds.num_classes();
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i : order) by_class[ds.labels[i]].push_back(i);

  std::gamma_distribution<double> gamma(spec.beta, 1.0);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<std::vector<std::size_t>> shards(spec.edges);
    for (const auto& members : by_class) {
      std::vector<double> props(spec.edges);
      double total = 0.0;
      for (auto& p : props) total += (p = gamma(rng));
      if (!(total > 0.0)) std::fill(props.begin(), props.end(), total = 1.0);
      // Cumulative cut points; the last edge takes the remainder.
      double acc = 0.0;
      std::size_t start = 0;
      for (std::size_t e = 0; e < spec.edges; ++e) {
        acc += props[e] / total;
        const std::size_t end = e + 1 == spec.edges
                                    ? members.size()
                                    : std::min(members.size(), static_cast<std::size_t>(std::llround(
                                                                   acc * static_cast<double>(members.size()))));
        for (std::size_t j = start; j < end; ++j) shards[e].push_back(members[j]);
        start = std::max(start, end);
      }
    }
    if (std::all_of(shards.begin(), shards.end(), [](const auto& s) { return !s.empty(); })) {
      for (auto& s : shards) std::shuffle(s.begin(), s.end(), rng);
      return shards;
    }
  }
  throw PartitionError("could not draw a label-skew partition with every shard non-empty after 100 tries");
}

inline std::vector<Dataset> partition(const Dataset& ds, const PartitionSpec& spec) {
  auto idx = partition_indices(ds, spec);
  std::vector<Dataset> shards;
  shards.reserve(idx.size());
  for (std::size_t e = 0; e < idx.size(); ++e) shards.push_back(ds.subset(idx[e], ds.name + "#" + std::to_string(e)));
  return shards;
}

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

// Moves a random floor(fraction * n) rows of a shard (at least one when n >= 2
// and fraction > 0) into a test split. Remaining rows keep a shuffled order.
inline TrainTestSplit split_test(const Dataset& shard, double fraction, std::uint64_t seed,
                                 std::uint64_t index = 0) {
  const std::size_t n = shard.size();
  std::size_t take = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  if (fraction > 0.0 && take == 0 && n >= 2) take = 1;
  if (take >= n) take = n - 1;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, Stream::Partition, 1 + index);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> test_idx(order.begin(), order.begin() + take);
  std::vector<std::size_t> train_idx(order.begin() + take, order.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {shard.subset(train_idx), shard.subset(test_idx)};
}

}  // namespace ol4el
