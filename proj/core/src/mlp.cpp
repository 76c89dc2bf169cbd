#include "ducat/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "ducat/error.hpp"
#include "ducat/random.hpp"

namespace ducat {

namespace {

// Stream ids keep the head-doubling draws independent of the base init.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kDummyStream = 2;

MlpModel::Layer init_layer(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(out * in), b(out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  for (double& v : b) v = rng.uniform(-bound, bound);
  return {Tensor::from({out, in}, std::move(w), true), Tensor::from({out}, std::move(b), true)};
}

void check_permutation(const std::vector<std::size_t>& pi, std::size_t c) {
  if (pi.size() != c) throw InvalidArgument("dummy permutation must have C entries");
  std::vector<bool> hit(c, false);
  for (auto v : pi) {
    if (v >= c || hit[v]) throw InvalidArgument("dummy permutation is not a bijection on [0,C)");
    hit[v] = true;
  }
}

}  // namespace

MlpModel MlpModel::create(std::vector<std::size_t> widths, const InitSpec& init) {
  if (widths.size() < 2) throw InvalidArgument("MLP needs at least input and output widths");
  if (widths.back() < 2) throw InvalidArgument("MLP needs C >= 2 output classes");
  if (std::find(widths.begin(), widths.end(), std::size_t{0}) != widths.end()) {
    throw InvalidArgument("MLP layer widths must be positive");
  }
  Rng rng(derive_seed(init.seed, kInitStream));
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.push_back(init_layer(widths[i], widths[i + 1], rng));
  }
  const std::size_t c = widths.back();
  std::vector<std::size_t> pi(c);
  std::iota(pi.begin(), pi.end(), std::size_t{0});
  return from_parts(std::move(widths), c, HeadMode::standard, std::move(pi), std::move(layers));
}

MlpModel MlpModel::from_parts(std::vector<std::size_t> widths, std::size_t num_classes,
                              HeadMode head, std::vector<std::size_t> pi,
                              std::vector<Layer> layers) {
  if (widths.size() != layers.size() + 1) throw InvalidArgument("widths/layers count mismatch");
  const std::size_t expected_out = head == HeadMode::ducat ? 2 * num_classes : num_classes;
  if (widths.back() != expected_out) {
    throw InvalidArgument("output width " + std::to_string(widths.back()) +
                          " inconsistent with C=" + std::to_string(num_classes) + " and head mode");
  }
  check_permutation(pi, num_classes);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weight.shape() != Shape{widths[i + 1], widths[i]} ||
        layers[i].bias.numel() != widths[i + 1]) {
      throw ShapeError("layer " + std::to_string(i) + " parameters do not match widths");
    }
  }
  MlpModel m;
  m.widths_ = std::move(widths);
  m.num_classes_ = num_classes;
  m.head_ = head;
  m.permutation_ = std::move(pi);
  m.layers_ = std::move(layers);
  return m;
}

MlpModel::MlpModel(const MlpModel& other)
    : widths_(other.widths_),
      num_classes_(other.num_classes_),
      head_(other.head_),
      permutation_(other.permutation_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) {
    layers_.push_back({l.weight.detached(true), l.bias.detached(true)});
  }
}

MlpModel& MlpModel::operator=(const MlpModel& other) {
  if (this != &other) *this = MlpModel(other);
  return *this;
}

Tensor MlpModel::forward(const Tensor& x, bool track_params) const {
  if (layers_.empty()) throw InvalidArgument("forward on an empty model");
  if (x.shape().size() != 2 || x.cols() != input_dim()) {
    throw ShapeError("forward: expected input [B x " + std::to_string(input_dim()) + "]");
  }
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    h = track_params ? linear(h, l.weight, l.bias)
                     : linear(h, l.weight.detached(), l.bias.detached());
    if (i + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

void MlpModel::set_dummy_permutation(std::vector<std::size_t> pi) {
  check_permutation(pi, num_classes_);
  permutation_ = std::move(pi);
}

std::vector<Tensor> MlpModel::parameters() const {
  std::vector<Tensor> p;
  for (const auto& l : layers_) {
    p.push_back(l.weight);
    p.push_back(l.bias);
  }
  return p;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < widths_.size(); ++i) n += widths_[i] * widths_[i + 1] + widths_[i + 1];
  return n;
}

void MlpModel::zero_grad() {
  for (auto& t : parameters()) t.zero_grad();
}

MlpModel double_last_layer(const MlpModel& model, const InitSpec& init) {
  if (model.head_mode() != HeadMode::standard) {
    throw InvalidArgument("double_last_layer: head is already doubled");
  }
  const std::size_t c = model.num_classes();
  const auto& last = model.layers().back();
  const std::size_t in = last.weight.cols();
  const auto& pi = model.dummy_permutation();

  std::vector<double> w(2 * c * in), b(2 * c);
  std::copy(last.weight.data().begin(), last.weight.data().end(), w.begin());
  std::copy(last.bias.data().begin(), last.bias.data().end(), b.begin());

  Rng rng(derive_seed(init.seed, kDummyStream));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (std::size_t k = 0; k < c; ++k) {
    const std::size_t slot = c + pi[k];
    for (std::size_t p = 0; p < in; ++p) {
      w[slot * in + p] = init.dummy_rows == DummyInit::fresh
                             ? rng.uniform(-bound, bound)
                             : w[k * in + p] + init.copy_noise * rng.normal();
    }
    b[slot] = init.dummy_rows == DummyInit::fresh ? rng.uniform(-bound, bound)
                                                   : b[k] + init.copy_noise * rng.normal();
  }

  std::vector<MlpModel::Layer> layers;
  for (std::size_t i = 0; i + 1 < model.layers().size(); ++i) {
    const auto& l = model.layers()[i];
    layers.push_back({l.weight.detached(true), l.bias.detached(true)});
  }
  layers.push_back({Tensor::from({2 * c, in}, std::move(w), true),
                    Tensor::from({2 * c}, std::move(b), true)});
  auto widths = model.widths();
  widths.back() = 2 * c;
  return MlpModel::from_parts(std::move(widths), c, HeadMode::ducat, pi, std::move(layers));
}

bool bitwise_equal(const MlpModel& a, const MlpModel& b) {
  if (a.widths() != b.widths() || a.num_classes() != b.num_classes() ||
      a.head_mode() != b.head_mode() || a.dummy_permutation() != b.dummy_permutation()) {
    return false;
  }
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto da = pa[i].data();
    const auto db = pb[i].data();
    if (da.size() != db.size() ||
        std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace ducat
