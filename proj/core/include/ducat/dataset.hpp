#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ducat/tensor.hpp"

namespace ducat {

enum class Split { train, test };

std::string to_string(Split s);

struct GeneratorMeta {
  std::string kind;  // "gaussians", "rings", "csv"
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> params;
};

/// N samples of dimension d with labels in [0, C), features row-major.
struct Dataset {
  std::vector<double> features;
  std::vector<std::size_t> labels;
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  Split split = Split::train;
  GeneratorMeta meta;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }

  /// Rows at `indices` as a [n × d] tensor, with their labels.
  Tensor batch_features(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> batch_labels(std::span<const std::size_t> indices) const;
  Tensor all_features() const;

  std::vector<std::size_t> class_counts() const;
  void validate() const;
};

struct GaussianSpec {
  std::size_t num_classes = 4;
  std::size_t dim = 2;
  std::size_t per_class = 250;
  /// Minimum pairwise centre distance; centres are drawn in the unit cube.
  double separation = 0.4;
  double noise_sigma = 0.05;
  /// Affine squash of the padded unit cube into [0,1] followed by a clamp.
  bool rescale = true;
};

/// Isotropic Gaussian blobs. Centres depend only on `seed`; the samples of
/// each split come from their own stream, so train and test share centres
/// but not points.
Dataset gen_gaussians(const GaussianSpec& spec, std::uint64_t seed, Split split);

/// Centres of the blobs as placed before rescaling, [C × d] row-major.
std::vector<double> gaussian_centers(const GaussianSpec& spec, std::uint64_t seed);

struct RingSpec {
  /// One ring per class, strictly increasing.
  std::vector<double> radii{1.0, 2.0};
  std::size_t per_class = 250;
  double noise = 0.1;
  /// Map the disc of radius r_max + 3·noise onto [0,1]², centred at 0.5.
  bool rescale = true;
};

/// Concentric annuli in 2-D. Throws DatasetError when neighbouring rings are
/// closer than 6·noise.
Dataset gen_rings(const RingSpec& spec, std::uint64_t seed, Split split);

/// Affine map applied by gen_rings when rescaling: x ↦ 0.5 + scale·x.
double ring_scale(const RingSpec& spec);

/// `label,f0,f1,...` with 17 significant digits.
void save_csv(const Dataset& data, const std::filesystem::path& path);
/// num_classes defaults to max label + 1. Malformed rows are reported with
/// their 1-based line number.
Dataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes = {});

/// Locale-independent shortest round-trip formatting.
std::string format_double(double v);
/// Locale-independent parse of a whole field; nullopt on garbage.
std::optional<double> parse_double(std::string_view s);

}  // namespace ducat
