#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace refvos::ad {

using Array = Eigen::ArrayXd;
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One tape entry. `value` is flat row-major; `grad` is allocated lazily by
// backward() and persists on leaves so the optimizer can read it.
struct Node {
  std::vector<int> shape;
  Array value;
  Array grad;
  bool requires_grad = false;
  bool is_leaf = false;
  std::uint64_t id = 0;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;

  std::int64_t numel() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad = Array::Zero(value.size());
  }
};

// Value-semantics handle to a tape node. Graphs are built implicitly by the
// free functions below; backward() walks the tape in reverse creation order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor constant(std::vector<int> shape, Array data);
  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double v);
  static Tensor parameter(std::vector<int> shape, Array data);
  static Tensor scalar_const(double v) { return full({1, 1}, v); }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rows() const { return node_->shape.at(0); }
  int cols() const { return node_->shape.at(1); }
  std::int64_t numel() const { return node_->numel(); }
  const Array& value() const { return node_->value; }
  Array& value_mut() { return node_->value; }
  Array& grad() { node_->ensure_grad(); return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;

  NodePtr node() const { return node_; }

  // Reverse-mode sweep from a scalar root.
  void backward() const;

 private:
  NodePtr node_;
};

// Disables tape construction in scope; forward values are identical either way.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
// a [M,K] x b [N,K]^T -> [M,N]; saves an explicit transpose node.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- shape ----
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor slice_cols(const Tensor& a, int c0, int c1);

// ---- broadcast ----
Tensor add_rowvec(const Tensor& x, const Tensor& b);   // b has x.cols() entries
Tensor add_colvec(const Tensor& x, const Tensor& b);   // b has x.rows() entries

// ---- reductions ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor mean_rows(const Tensor& a);  // [M,N] -> [1,N]
Tensor dot_all(const Tensor& a, const Tensor& b);

// ---- softmax / normalization ----
Tensor softmax_rows(const Tensor& a);
// `allowed` flags columns per row; rows with nothing allowed fall back to a
// full softmax. Mask is a constant, no gradient flows through it.
Tensor softmax_rows_masked(const Tensor& a, const std::vector<std::uint8_t>& allowed);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-5);

// ---- conv / resampling (feature maps stored as [C, H*W]) ----
Tensor conv2d_s2(const Tensor& x, int h, int w, const Tensor& weight, const Tensor& bias);
Tensor upsample2x(const Tensor& x, int h, int w);

// ---- losses / similarity ----
Tensor cosine_sim(const Tensor& a, const Tensor& b);  // zero vectors -> constant 0
Tensor bce_mean_probs(const Tensor& p, const Array& targets, double eps = 1e-6);
Tensor dice_loss(const Tensor& p, const Array& targets);  // soft dice, +1 smoothing
Tensor softmax_xent_rows(const Tensor& logits, const std::vector<int>& labels);
Tensor bce_logits_mean(const Tensor& z, const Array& targets);

// linear(x [M,in], W [out,in], b [out]) -> [M,out]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul_nt(x, w), b);
}

}  // namespace refvos::ad
