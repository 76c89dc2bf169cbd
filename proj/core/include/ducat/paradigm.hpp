#pragma once

/// @file paradigm.hpp
/// Dummy-class supervision: two-hot labels, the weighted benign/adversarial
/// cross-entropy objective, the inference-time projection of dummy slots back
/// to their original classes, and the 0-1 risk used as a diagnostic.
///
/// Only the (α, β1, β2) instantiation of the dummy-label paradigm is
/// implemented; arbitrary per-sample label weightings are not.

#include <cstddef>
#include <span>
#include <vector>

#include "ducat/mlp.hpp"
#include "ducat/tensor.hpp"

namespace ducat {

using Labels = std::vector<std::size_t>;

/// Length-2C supervision vector: mass β at y, 1−β at C+π(y).
struct TwoHotLabel {
  std::vector<double> mass;

  std::size_t num_classes() const { return mass.size() / 2; }
  /// First C entries (the original-class part).
  std::span<const double> original() const { return {mass.data(), num_classes()}; }
  /// Last C entries, indexed by dummy slot.
  std::span<const double> dummy() const { return {mass.data() + num_classes(), num_classes()}; }
};

struct DucatHyper {
  double alpha = 0.5;  // weight of the benign term
  double beta1 = 0.75; // benign mass on the original class
  double beta2 = 1.0;  // adversarial mass on the dummy class
  int start_epoch = 0;

  void validate() const;
};

TwoHotLabel make_two_hot(std::size_t y, std::size_t num_classes, double beta,
                         std::span<const std::size_t> pi);

/// Row-stacked two-hot targets [B × 2C] for a batch of labels.
Tensor two_hot_batch(std::span<const std::size_t> y, std::size_t num_classes, double beta,
                     std::span<const std::size_t> pi);

/// One-hot targets [B × width].
Tensor one_hot_batch(std::span<const std::size_t> y, std::size_t width);

/// α·CE(f(x), l(y,β1)) + (1−α)·CE(f(x_adv), l(y,1−β2)), batch-averaged.
/// Requires a doubled head.
Tensor ducat_loss(const MlpModel& model, const Tensor& x, const Tensor& x_adv,
                  std::span<const std::size_t> y, const DucatHyper& hyper);

/// Maps a raw index over 2C slots to an original class: identity below C,
/// π⁻¹(k − C) above.
std::size_t project_prediction(std::size_t k, std::size_t num_classes,
                               std::span<const std::size_t> pi);

struct Prediction {
  std::size_t raw_index = 0;
  std::size_t projected_class = 0;
  bool is_dummy = false;
};

/// Argmax with ties going to the lowest index.
std::size_t argmax(std::span<const double> values);

/// Prediction from one row of logits. A standard head (K = C) never reports
/// a dummy hit; a doubled head is projected.
Prediction predict_row(std::span<const double> logits, std::size_t num_classes,
                       std::span<const std::size_t> pi);

std::vector<Prediction> predict(const MlpModel& model, const Tensor& x);

/// Mean over the batch of the weighted 0-1 risk on raw predictions:
///   α·(β1·[g(x)≠y] + (1−β1)·[g(x)≠C+π(y)])
/// + (1−α)·(β2·[g(x′)≠C+π(y)] + (1−β2)·[g(x′)≠y])
double zero_one_risk(const MlpModel& model, const Tensor& x, const Tensor& x_adv,
                     std::span<const std::size_t> y, const DucatHyper& hyper);

}  // namespace ducat
