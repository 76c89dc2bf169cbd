#include "ducat/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ducat/error.hpp"
#include "ducat/random.hpp"

namespace ducat {

namespace {

constexpr std::uint64_t kCentreStream = 11;
constexpr int kPlacementAttempts = 10000;

std::uint64_t split_stream(Split s) { return s == Split::train ? 101 : 202; }

std::string format17(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string param(double v) { return format_double(v); }

}  // namespace

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// ---------------------------------------------------------------------------

Tensor Dataset::batch_features(std::span<const std::size_t> indices) const {
  std::vector<double> out(indices.size() * dim);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto r = row(indices[i]);
    std::copy(r.begin(), r.end(), out.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return Tensor::from({indices.size(), dim}, std::move(out));
}

std::vector<std::size_t> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = labels[indices[i]];
  return out;
}

Tensor Dataset::all_features() const { return Tensor::from({size(), dim}, features); }

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (auto y : labels) ++counts.at(y);
  return counts;
}

void Dataset::validate() const {
  if (features.size() != labels.size() * dim) throw DatasetError("feature/label counts disagree");
  for (auto y : labels) {
    if (y >= num_classes) {
      throw DatasetError("label " + std::to_string(y) + " out of range for C=" + std::to_string(num_classes));
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<double> gaussian_centers(const GaussianSpec& spec, std::uint64_t seed) {
  if (spec.num_classes < 2) throw DatasetError("gen_gaussians: need C >= 2");
  if (spec.dim < 2) throw DatasetError("gen_gaussians: need d >= 2");
  Rng rng(derive_seed(seed, kCentreStream));
  const std::size_t c = spec.num_classes, d = spec.dim;
  std::vector<double> centres;
  centres.reserve(c * d);
  int attempts = 0;
  std::vector<double> cand(d);
  while (centres.size() < c * d) {
    if (++attempts > kPlacementAttempts) {
      throw DatasetError("gen_gaussians: cannot place " + std::to_string(c) +
                         " centres with separation " + param(spec.separation) + " in d=" +
                         std::to_string(d));
    }
    for (double& v : cand) v = rng.uniform();
    bool ok = true;
    for (std::size_t k = 0; ok && k < centres.size() / d; ++k) {
      double dist2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = cand[j] - centres[k * d + j];
        dist2 += diff * diff;
      }
      ok = std::sqrt(dist2) >= spec.separation;
    }
    if (ok) centres.insert(centres.end(), cand.begin(), cand.end());
  }
  return centres;
}

Dataset gen_gaussians(const GaussianSpec& spec, std::uint64_t seed, Split split) {
  if (spec.noise_sigma < 0.0) throw DatasetError("gen_gaussians: negative noise");
  const auto centres = gaussian_centers(spec, seed);
  const std::size_t c = spec.num_classes, d = spec.dim;
  const double pad = 3.0 * spec.noise_sigma;

  Dataset ds;
  ds.dim = d;
  ds.num_classes = c;
  ds.split = split;
  ds.meta = {"gaussians", seed,
             {{"classes", std::to_string(c)},
              {"dim", std::to_string(d)},
              {"per_class", std::to_string(spec.per_class)},
              {"separation", param(spec.separation)},
              {"noise", param(spec.noise_sigma)},
              {"rescale", spec.rescale ? "true" : "false"}}};
  ds.features.reserve(c * spec.per_class * d);
  Rng rng(derive_seed(seed, split_stream(split)));
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        double v = centres[k * d + j] + spec.noise_sigma * rng.normal();
        if (spec.rescale) v = std::clamp((v + pad) / (1.0 + 2.0 * pad), 0.0, 1.0);
        ds.features.push_back(v);
      }
      ds.labels.push_back(k);
    }
  }
  return ds;
}

double ring_scale(const RingSpec& spec) {
  return 0.5 / (spec.radii.back() + 3.0 * spec.noise);
}

Dataset gen_rings(const RingSpec& spec, std::uint64_t seed, Split split) {
  if (spec.radii.size() < 2) throw DatasetError("gen_rings: need at least two radii");
  if (spec.radii.front() < 0.0 || spec.noise < 0.0) throw DatasetError("gen_rings: negative radius or noise");
  for (std::size_t k = 1; k < spec.radii.size(); ++k) {
    if (!(spec.radii[k] > spec.radii[k - 1])) throw DatasetError("gen_rings: radii must be strictly increasing");
    if (spec.radii[k] - spec.radii[k - 1] < 6.0 * spec.noise) {
      throw DatasetError("gen_rings: rings " + std::to_string(k - 1) + " and " + std::to_string(k) +
                         " overlap at noise " + param(spec.noise));
    }
  }
  const double s = ring_scale(spec);
  Dataset ds;
  ds.dim = 2;
  ds.num_classes = spec.radii.size();
  ds.split = split;
  std::ostringstream radii;
  for (std::size_t k = 0; k < spec.radii.size(); ++k) radii << (k ? ";" : "") << param(spec.radii[k]);
  ds.meta = {"rings", seed,
             {{"radii", radii.str()},
              {"per_class", std::to_string(spec.per_class)},
              {"noise", param(spec.noise)},
              {"rescale", spec.rescale ? "true" : "false"}}};
  Rng rng(derive_seed(seed, split_stream(split)));
  for (std::size_t k = 0; k < spec.radii.size(); ++k) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double r = spec.radii[k] + spec.noise * rng.normal();
      double px = r * std::cos(angle), py = r * std::sin(angle);
      if (spec.rescale) {
        px = std::clamp(0.5 + s * px, 0.0, 1.0);
        py = std::clamp(0.5 + s * py, 0.0, 1.0);
      }
      ds.features.push_back(px);
      ds.features.push_back(py);
      ds.labels.push_back(k);
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DatasetError("cannot open " + path.string() + " for writing");
  out << "label";
  for (std::size_t j = 0; j < data.dim; ++j) out << ",f" << j;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (double v : data.row(i)) out << ',' << format17(v);
    out << '\n';
  }
  if (!out) throw DatasetError("write failed for " + path.string());
}

Dataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  const std::string name = path.string();
  std::string line;
  if (!std::getline(in, line)) throw DatasetError(name + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  Dataset ds;
  {
    std::istringstream hs(line);
    std::string field;
    std::getline(hs, field, ',');
    if (field != "label") throw DatasetError(name + ":1: header must start with 'label'");
    while (std::getline(hs, field, ',')) {
      if (field != "f" + std::to_string(ds.dim)) {
        throw DatasetError(name + ":1: unexpected header field '" + field + "'");
      }
      ++ds.dim;
    }
  }
  if (ds.dim == 0) throw DatasetError(name + ":1: no feature columns");

  std::size_t line_no = 1;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(line_no) + ": ";
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != ds.dim + 1) {
      throw DatasetError(where + "expected " + std::to_string(ds.dim + 1) + " fields, got " +
                         std::to_string(fields.size()));
    }
    std::size_t label = 0;
    auto lr = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), label);
    if (lr.ec != std::errc() || lr.ptr != fields[0].data() + fields[0].size()) {
      throw DatasetError(where + "malformed label '" + std::string(fields[0]) + "'");
    }
    if (num_classes && label >= *num_classes) {
      throw DatasetError(where + "label " + std::to_string(label) + " >= C=" + std::to_string(*num_classes));
    }
    for (std::size_t j = 1; j < fields.size(); ++j) {
      const auto v = parse_double(fields[j]);
      if (!v || !std::isfinite(*v)) {
        throw DatasetError(where + "malformed feature '" + std::string(fields[j]) + "'");
      }
      ds.features.push_back(*v);
    }
    ds.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  if (ds.labels.empty()) throw DatasetError(name + ": dataset is empty");
  ds.num_classes = num_classes.value_or(max_label + 1);
  ds.meta.kind = "csv";
  ds.meta.params = {{"path", name}};
  return ds;
}

}  // namespace ducat
