#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ducat/tensor.hpp"

namespace ducat {

/// standard: K = C outputs. ducat: K = 2C, original logits then dummy logits.
enum class HeadMode : std::uint32_t { standard = 0, ducat = 1 };

/// How the appended dummy rows are initialised when the head is doubled.
enum class DummyInit { fresh, copy_with_noise };

struct InitSpec {
  std::uint64_t seed = 0;
  DummyInit dummy_rows = DummyInit::fresh;
  /// Std-dev of the perturbation added under copy_with_noise.
  double copy_noise = 1e-2;
};

/// ReLU multilayer perceptron. Weights are stored [out × in] so that output
/// unit j of a layer is row j of its weight matrix.
///
/// Copies are deep: parameters are never shared between two models.
class MlpModel {
 public:
  struct Layer {
    Tensor weight;  // [out × in]
    Tensor bias;    // [out]
  };

  MlpModel() = default;

  /// `widths` = {d, hidden..., C}. The output layer width is C; the head
  /// starts in standard mode.
  static MlpModel create(std::vector<std::size_t> widths, const InitSpec& init);

  /// Rebuilds a model from raw parts (used by checkpoint loading and tests).
  static MlpModel from_parts(std::vector<std::size_t> widths, std::size_t num_classes,
                             HeadMode head, std::vector<std::size_t> dummy_permutation,
                             std::vector<Layer> layers);

  MlpModel(const MlpModel& other);
  MlpModel& operator=(const MlpModel& other);
  MlpModel(MlpModel&&) noexcept = default;
  MlpModel& operator=(MlpModel&&) noexcept = default;

  /// Logits [B × K]. With track_params=false the parameters enter the graph
  /// as constants, so a backward pass only reaches the input.
  Tensor forward(const Tensor& x, bool track_params = true) const;

  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }
  std::size_t num_classes() const { return num_classes_; }
  HeadMode head_mode() const { return head_; }
  const std::vector<std::size_t>& widths() const { return widths_; }

  /// π: original class k pairs with output slot C + π(k).
  const std::vector<std::size_t>& dummy_permutation() const { return permutation_; }
  void set_dummy_permutation(std::vector<std::size_t> pi);
  std::size_t dummy_slot(std::size_t cls) const { return num_classes_ + permutation_.at(cls); }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::vector<std::size_t> widths_;
  std::size_t num_classes_ = 0;
  HeadMode head_ = HeadMode::standard;
  std::vector<std::size_t> permutation_;
  std::vector<Layer> layers_;
};

/// Widens the final layer from C to 2C outputs. Rows 0..C-1 are copied bit
/// for bit; dummy slot C+π(k) is either freshly initialised or a noisy copy
/// of row k. Throws InvalidArgument on an already doubled model.
MlpModel double_last_layer(const MlpModel& model, const InitSpec& init);

/// Checkpoint layout (all integers little-endian):
///   "DUCATCKP" | u32 version | u32 C | u32 head_mode | u32 π[C] |
///   u32 n_widths | u32 widths[n] | per layer: f64 W[out×in], f64 b[out]
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_checkpoint(const std::filesystem::path& path);

/// Exact equality of metadata and every parameter bit.
bool bitwise_equal(const MlpModel& a, const MlpModel& b);

}  // namespace ducat
