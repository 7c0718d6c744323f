#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "stacknov/rng.hpp"

namespace stacknov {

using Matrix = Eigen::MatrixXd;   // rows = batch, cols = features
using Vector = Eigen::VectorXd;

// Shape-tagged flat value array; the interchange form for weights and
// activations at module boundaries.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t size() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  void check() const {
    if (data.size() != size())
      throw std::invalid_argument("Tensor: data length does not match shape");
  }
};

inline void ensure_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite())
    throw std::runtime_error("non-finite values in " + what);
}

struct ParamRef {
  Vector* value;
  Vector* grad;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Matrix forward(const Matrix& x) = 0;
  virtual Matrix backward(const Matrix& gy) = 0;
  virtual void collect_params(std::vector<ParamRef>&) {}
  virtual void init(Rng&) {}

 protected:
  void require_forward(bool have) const {
    if (!have)
      throw std::logic_error("Layer::backward called before forward");
  }
};

class Dense : public Layer {
 public:
  Dense(int in, int out) : in_(in), out_(out) {
    w_ = Vector::Zero(out_ * in_ + out_);
    gw_ = Vector::Zero(w_.size());
  }

  void init(Rng& rng) override {
    double limit = std::sqrt(6.0 / (in_ + out_));
    for (int i = 0; i < out_ * in_; ++i) w_[i] = rng.uniform(-limit, limit);
    w_.tail(out_).setZero();
  }

  Matrix forward(const Matrix& x) override {
    if (x.cols() != in_)
      throw std::invalid_argument("Dense: input width mismatch");
    x_ = x;
    have_ = true;
    return (x * weights().transpose()).rowwise() + bias().transpose();
  }

  Matrix backward(const Matrix& gy) override {
    require_forward(have_);
    grad_weights().noalias() += gy.transpose() * x_;
    grad_bias() += gy.colwise().sum().transpose();
    return gy * weights();
  }

  void collect_params(std::vector<ParamRef>& out) override {
    out.push_back({&w_, &gw_});
  }

  Eigen::Map<Matrix> weights() {
    return Eigen::Map<Matrix>(w_.data(), out_, in_);
  }
  Eigen::Map<Vector> bias() { return Eigen::Map<Vector>(w_.data() + out_ * in_, out_); }
  Eigen::Map<Matrix> grad_weights() {
    return Eigen::Map<Matrix>(gw_.data(), out_, in_);
  }
  Eigen::Map<Vector> grad_bias() {
    return Eigen::Map<Vector>(gw_.data() + out_ * in_, out_);
  }

 private:
  int in_, out_;
  Vector w_, gw_;
  Matrix x_;
  bool have_ = false;
};

// Valid (unpadded) 1D cross-correlation over rows laid out channel-major:
// column index = channel * length + position. Implemented as im2col + GEMM.
class Conv1d : public Layer {
 public:
  Conv1d(int in_ch, int out_ch, int ksize, int stride)
      : in_ch_(in_ch), out_ch_(out_ch), k_(ksize), stride_(stride) {
    w_ = Vector::Zero(out_ch_ * in_ch_ * k_ + out_ch_);
    gw_ = Vector::Zero(w_.size());
  }

  static int out_length(int length, int ksize, int stride) {
    if (length < ksize)
      throw std::invalid_argument("Conv1d: input shorter than filter");
    return (length - ksize) / stride + 1;
  }

  void init(Rng& rng) override {
    int fan_in = in_ch_ * k_;
    double limit = std::sqrt(6.0 / (fan_in + out_ch_));
    for (int i = 0; i < out_ch_ * fan_in; ++i) w_[i] = rng.uniform(-limit, limit);
    w_.tail(out_ch_).setZero();
  }

  Matrix forward(const Matrix& x) override {
    if (x.cols() % in_ch_ != 0)
      throw std::invalid_argument("Conv1d: input width not divisible by channels");
    len_ = static_cast<int>(x.cols()) / in_ch_;
    lout_ = out_length(len_, k_, stride_);
    batch_ = static_cast<int>(x.rows());

    cols_.resize(batch_ * lout_, in_ch_ * k_);
    for (int b = 0; b < batch_; ++b)
      for (int t = 0; t < lout_; ++t)
        for (int c = 0; c < in_ch_; ++c)
          for (int i = 0; i < k_; ++i)
            cols_(b * lout_ + t, c * k_ + i) = x(b, c * len_ + t * stride_ + i);

    Matrix y = cols_ * weights().transpose();  // (batch*lout) x out_ch
    y.rowwise() += bias().transpose();

    Matrix out(batch_, out_ch_ * lout_);
    for (int b = 0; b < batch_; ++b)
      for (int oc = 0; oc < out_ch_; ++oc)
        for (int t = 0; t < lout_; ++t)
          out(b, oc * lout_ + t) = y(b * lout_ + t, oc);
    have_ = true;
    return out;
  }

  Matrix backward(const Matrix& gy) override {
    require_forward(have_);
    Matrix g(batch_ * lout_, out_ch_);
    for (int b = 0; b < batch_; ++b)
      for (int oc = 0; oc < out_ch_; ++oc)
        for (int t = 0; t < lout_; ++t)
          g(b * lout_ + t, oc) = gy(b, oc * lout_ + t);

    grad_weights().noalias() += g.transpose() * cols_;
    grad_bias() += g.colwise().sum().transpose();

    Matrix gcols = g * weights();  // (batch*lout) x (in_ch*k)
    Matrix gx = Matrix::Zero(batch_, in_ch_ * len_);
    for (int b = 0; b < batch_; ++b)
      for (int t = 0; t < lout_; ++t)
        for (int c = 0; c < in_ch_; ++c)
          for (int i = 0; i < k_; ++i)
            gx(b, c * len_ + t * stride_ + i) += gcols(b * lout_ + t, c * k_ + i);
    return gx;
  }

  void collect_params(std::vector<ParamRef>& out) override {
    out.push_back({&w_, &gw_});
  }

  Eigen::Map<Matrix> weights() {
    return Eigen::Map<Matrix>(w_.data(), out_ch_, in_ch_ * k_);
  }
  Eigen::Map<Vector> bias() {
    return Eigen::Map<Vector>(w_.data() + out_ch_ * in_ch_ * k_, out_ch_);
  }
  Eigen::Map<Matrix> grad_weights() {
    return Eigen::Map<Matrix>(gw_.data(), out_ch_, in_ch_ * k_);
  }
  Eigen::Map<Vector> grad_bias() {
    return Eigen::Map<Vector>(gw_.data() + out_ch_ * in_ch_ * k_, out_ch_);
  }

 private:
  int in_ch_, out_ch_, k_, stride_;
  int len_ = 0, lout_ = 0, batch_ = 0;
  Vector w_, gw_;
  Matrix cols_;
  bool have_ = false;
};

class ReLU : public Layer {
 public:
  Matrix forward(const Matrix& x) override {
    mask_ = (x.array() > 0).cast<double>();
    have_ = true;
    return x.cwiseMax(0.0);
  }
  Matrix backward(const Matrix& gy) override {
    require_forward(have_);
    return gy.cwiseProduct(mask_);
  }

 private:
  Matrix mask_;
  bool have_ = false;
};

// Inverted dropout: active only while a trainer has armed it with an RNG.
// Inference (and any forward while inactive) is the identity, so deployed
// outputs stay deterministic. Keeping units randomly silenced during training
// spreads class evidence across many units instead of letting a few dominate,
// which keeps per-unit activation variability meaningful downstream.
class Dropout : public Layer {
 public:
  explicit Dropout(double p) : p_(p) {
    if (p_ < 0.0 || p_ >= 1.0)
      throw std::invalid_argument("Dropout: rate must be in [0, 1)");
  }

  void arm(Rng* rng) { rng_ = rng; }
  void disarm() { rng_ = nullptr; }

  Matrix forward(const Matrix& x) override {
    have_ = true;
    if (rng_ == nullptr || p_ == 0.0) {
      identity_ = true;
      return x;
    }
    identity_ = false;
    mask_.resize(x.rows(), x.cols());
    const double keep = 1.0 - p_;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        mask_(i, j) = rng_->uniform(0.0, 1.0) < keep ? 1.0 / keep : 0.0;
    return x.cwiseProduct(mask_);
  }

  Matrix backward(const Matrix& gy) override {
    require_forward(have_);
    return identity_ ? gy : gy.cwiseProduct(mask_);
  }

 private:
  double p_;
  Rng* rng_ = nullptr;
  Matrix mask_;
  bool identity_ = true;
  bool have_ = false;
};

class Tanh : public Layer {
 public:
  Matrix forward(const Matrix& x) override {
    y_ = x.array().tanh();
    have_ = true;
    return y_;
  }
  Matrix backward(const Matrix& gy) override {
    require_forward(have_);
    return gy.cwiseProduct((1.0 - y_.array().square()).matrix());
  }

 private:
  Matrix y_;
  bool have_ = false;
};

class Net {
 public:
  Net() = default;
  Net(Net&&) = default;
  Net& operator=(Net&&) = default;

  template <typename L, typename... Args>
  L* add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    layers_.push_back(std::move(layer));
    return raw;
  }

  Matrix forward(const Matrix& x) {
    Matrix h = x;
    for (auto& l : layers_) h = l->forward(h);
    ensure_finite(h, "network forward pass");
    return h;
  }

  // Forward through the first `count` layers only (e.g. to read a hidden
  // layer's activations). Overwrites the layers' cached inputs.
  Matrix forward_prefix(const Matrix& x, std::size_t count) {
    if (count > layers_.size())
      throw std::invalid_argument("Net: prefix longer than network");
    Matrix h = x;
    for (std::size_t i = 0; i < count; ++i) h = layers_[i]->forward(h);
    ensure_finite(h, "network prefix forward pass");
    return h;
  }

  std::size_t layer_count() const { return layers_.size(); }

  Matrix backward(const Matrix& gy) {
    Matrix g = gy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      g = (*it)->backward(g);
    return g;
  }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    for (auto& l : layers_) l->collect_params(out);
    return out;
  }

  void init(Rng& rng) {
    for (auto& l : layers_) l->init(rng);
  }

  void zero_grads() {
    for (auto& p : params()) p.grad->setZero();
  }

  Vector flat_params() const {
    std::vector<ParamRef> refs = const_cast<Net*>(this)->params();
    std::size_t n = 0;
    for (auto& p : refs) n += p.value->size();
    Vector out(n);
    std::size_t at = 0;
    for (auto& p : refs) {
      out.segment(at, p.value->size()) = *p.value;
      at += p.value->size();
    }
    return out;
  }

  void set_flat_params(const Vector& flat) {
    std::size_t at = 0;
    for (auto& p : params()) {
      if (at + p.value->size() > static_cast<std::size_t>(flat.size()))
        throw std::invalid_argument("Net: flat parameter size mismatch");
      *p.value = flat.segment(at, p.value->size());
      at += p.value->size();
    }
    if (at != static_cast<std::size_t>(flat.size()))
      throw std::invalid_argument("Net: flat parameter size mismatch");
  }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Row-wise numerically stable softmax.
inline Matrix softmax(const Matrix& logits) {
  Matrix z = logits.colwise() - logits.rowwise().maxCoeff();
  Matrix e = z.array().exp();
  return e.array().colwise() / e.rowwise().sum().array();
}

struct LossResult {
  double loss = 0.0;
  Matrix grad;   // d loss / d input
};

// Mean cross-entropy over the batch; grad = (softmax - target) / batch.
// With label smoothing eps > 0 the target puts 1 - eps on the true class and
// spreads eps over the others, which bounds the optimal logit gap and so
// keeps late-training activations from growing without limit.
inline LossResult cross_entropy(const Matrix& logits,
                                const std::vector<int>& labels,
                                double label_smoothing = 0.0) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw std::invalid_argument("cross_entropy: batch size mismatch");
  const Eigen::Index k = logits.cols();
  if (label_smoothing < 0.0 || label_smoothing >= 1.0 || (label_smoothing > 0.0 && k < 2))
    throw std::invalid_argument("cross_entropy: bad label smoothing");
  const double off = k > 1 ? label_smoothing / static_cast<double>(k - 1) : 0.0;
  Matrix p = softmax(logits);
  LossResult res;
  res.grad = p;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k)
      throw std::invalid_argument("cross_entropy: label out of range");
    for (Eigen::Index j = 0; j < k; ++j) {
      double q = (j == y) ? 1.0 - label_smoothing : off;
      if (q > 0.0) res.loss -= q * std::log(std::max(p(i, j), 1e-300));
      res.grad(i, j) -= q;
    }
  }
  res.loss /= static_cast<double>(logits.rows());
  res.grad /= static_cast<double>(logits.rows());
  return res;
}

// Mean squared error over all elements.
inline LossResult mse(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("mse: shape mismatch");
  LossResult res;
  Matrix diff = pred - target;
  res.loss = diff.squaredNorm() / static_cast<double>(diff.size());
  res.grad = 2.0 * diff / static_cast<double>(diff.size());
  return res;
}

}  // namespace stacknov
