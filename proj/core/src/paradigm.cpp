#include "ducat/paradigm.hpp"

#include <string>

#include "ducat/error.hpp"

namespace ducat {

namespace {

void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw InvalidArgument(std::string(name) + " must lie in [0,1], got " + std::to_string(v));
  }
}

void check_label(std::size_t y, std::size_t c) {
  if (y >= c) {
    throw InvalidArgument("label " + std::to_string(y) + " out of range for C=" + std::to_string(c));
  }
}

}  // namespace

void DucatHyper::validate() const {
  check_unit(alpha, "alpha");
  check_unit(beta1, "beta1");
  check_unit(beta2, "beta2");
  if (start_epoch < 0) throw InvalidArgument("start epoch must be non-negative");
}

TwoHotLabel make_two_hot(std::size_t y, std::size_t num_classes, double beta,
                         std::span<const std::size_t> pi) {
  check_label(y, num_classes);
  check_unit(beta, "beta");
  if (pi.size() != num_classes) throw InvalidArgument("dummy permutation must have C entries");
  TwoHotLabel l{std::vector<double>(2 * num_classes, 0.0)};
  l.mass[y] = beta;
  l.mass[num_classes + pi[y]] = 1.0 - beta;
  return l;
}

Tensor two_hot_batch(std::span<const std::size_t> y, std::size_t num_classes, double beta,
                     std::span<const std::size_t> pi) {
  const std::size_t width = 2 * num_classes;
  std::vector<double> t(y.size() * width, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto l = make_two_hot(y[i], num_classes, beta, pi);
    std::copy(l.mass.begin(), l.mass.end(), t.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  return Tensor::from({y.size(), width}, std::move(t));
}

Tensor one_hot_batch(std::span<const std::size_t> y, std::size_t width) {
  std::vector<double> t(y.size() * width, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    check_label(y[i], width);
    t[i * width + y[i]] = 1.0;
  }
  return Tensor::from({y.size(), width}, std::move(t));
}

Tensor ducat_loss(const MlpModel& model, const Tensor& x, const Tensor& x_adv,
                  std::span<const std::size_t> y, const DucatHyper& hyper) {
  if (model.head_mode() != HeadMode::ducat) {
    throw InvalidArgument("ducat_loss requires a model with a doubled head");
  }
  hyper.validate();
  if (x.shape() != x_adv.shape() || x.rows() != y.size()) {
    throw ShapeError("ducat_loss: benign, adversarial and label batches disagree");
  }
  const auto c = model.num_classes();
  const auto& pi = model.dummy_permutation();
  const Tensor benign = cross_entropy(model.forward(x), two_hot_batch(y, c, hyper.beta1, pi));
  const Tensor adv = cross_entropy(model.forward(x_adv), two_hot_batch(y, c, 1.0 - hyper.beta2, pi));
  return add(scale(benign, hyper.alpha), scale(adv, 1.0 - hyper.alpha));
}

std::size_t project_prediction(std::size_t k, std::size_t num_classes,
                               std::span<const std::size_t> pi) {
  if (k >= 2 * num_classes) {
    throw InvalidArgument("raw index " + std::to_string(k) + " out of range for 2C=" +
                          std::to_string(2 * num_classes));
  }
  if (k < num_classes) return k;
  const std::size_t slot = k - num_classes;
  for (std::size_t cls = 0; cls < pi.size(); ++cls) {
    if (pi[cls] == slot) return cls;
  }
  throw InvalidArgument("dummy permutation does not cover slot " + std::to_string(slot));
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Prediction predict_row(std::span<const double> logits, std::size_t num_classes,
                       std::span<const std::size_t> pi) {
  const std::size_t k = argmax(logits);
  if (logits.size() == num_classes) return {k, k, false};
  if (logits.size() != 2 * num_classes) throw ShapeError("predict: logits width is neither C nor 2C");
  return {k, project_prediction(k, num_classes, pi), k >= num_classes};
}

std::vector<Prediction> predict(const MlpModel& model, const Tensor& x) {
  const Tensor logits = model.forward(x, false);
  const std::size_t k = logits.cols();
  const auto data = logits.data();
  std::vector<Prediction> out(logits.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = predict_row(data.subspan(i * k, k), model.num_classes(), model.dummy_permutation());
  }
  return out;
}

double zero_one_risk(const MlpModel& model, const Tensor& x, const Tensor& x_adv,
                     std::span<const std::size_t> y, const DucatHyper& hyper) {
  if (model.head_mode() != HeadMode::ducat) {
    throw InvalidArgument("zero_one_risk requires a model with a doubled head");
  }
  hyper.validate();
  if (x.shape() != x_adv.shape() || x.rows() != y.size() || y.empty()) {
    throw ShapeError("zero_one_risk: benign, adversarial and label batches disagree");
  }
  const auto pb = predict(model, x);
  const auto pa = predict(model, x_adv);
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t orig = y[i];
    const std::size_t dummy = model.dummy_slot(y[i]);
    const auto miss = [](std::size_t g, std::size_t target) { return g != target ? 1.0 : 0.0; };
    total += hyper.alpha * (hyper.beta1 * miss(pb[i].raw_index, orig) +
                            (1.0 - hyper.beta1) * miss(pb[i].raw_index, dummy)) +
             (1.0 - hyper.alpha) * (hyper.beta2 * miss(pa[i].raw_index, dummy) +
                                    (1.0 - hyper.beta2) * miss(pa[i].raw_index, orig));
  }
  return total / static_cast<double>(y.size());
}

}  // namespace ducat
