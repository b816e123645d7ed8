#include "refvos/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace refvos::ad {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::int64_t numel_of(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (const int d : shape) n *= d;
  return n;
}

NodePtr make_node(std::vector<int> shape, Array value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p->requires_grad) { needs = true; break; }
  }
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

Eigen::Map<const MatRM> as_mat(const Node& n) {
  return {n.value.data(), n.shape.at(0), n.shape.at(1)};
}

Eigen::Map<MatRM> grad_mat(Node& n) {
  n.ensure_grad();
  return {n.grad.data(), n.shape.at(0), n.shape.at(1)};
}

Eigen::Map<const MatRM> grad_mat_const(const Node& n) {
  return {n.grad.data(), n.shape.at(0), n.shape.at(1)};
}

void require_2d(const Tensor& t, const char* who) {
  check(t.shape().size() == 2, std::string(who) + ": expected a 2-D tensor");
}

}  // namespace

Tensor Tensor::constant(std::vector<int> shape, Array data) {
  check(numel_of(shape) == data.size(), "constant: shape/data size mismatch");
  return Tensor(make_node(std::move(shape), std::move(data), {}, nullptr));
}

Tensor Tensor::zeros(std::vector<int> shape) {
  const auto n = numel_of(shape);
  return Tensor(make_node(std::move(shape), Array::Zero(n), {}, nullptr));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  const auto n = numel_of(shape);
  return Tensor(make_node(std::move(shape), Array::Constant(n, v), {}, nullptr));
}

Tensor Tensor::parameter(std::vector<int> shape, Array data) {
  check(numel_of(shape) == data.size(), "parameter: shape/data size mismatch");
  auto node = make_node(std::move(shape), std::move(data), {}, nullptr);
  node->requires_grad = true;
  node->is_leaf = true;
  return Tensor(node);
}

double Tensor::item() const {
  check(node_ && node_->numel() == 1, "item: tensor is not a scalar");
  return node_->value[0];
}

void Tensor::backward() const {
  check(node_ && node_->numel() == 1, "backward: root must be a scalar");
  if (!node_->requires_grad) return;

  // Reachable subgraph, then reverse creation order (parents always precede
  // children, so descending id is a valid topological order).
  std::vector<Node*> order;
  std::vector<Node*> stack{node_.get()};
  std::unordered_set<const Node*> seen;
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& p : n->parents)
      if (p->requires_grad) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });

  for (Node* n : order) n->ensure_grad();
  node_->grad[0] += 1.0;
  for (Node* n : order)
    if (n->backward_fn) n->backward_fn(*n);
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "add: shape mismatch");
  auto pa = a.node(), pb = b.node();
  return Tensor(make_node(a.shape(), pa->value + pb->value, {pa, pb}, [pa, pb](Node& n) {
    if (pa->requires_grad) { pa->ensure_grad(); pa->grad += n.grad; }
    if (pb->requires_grad) { pb->ensure_grad(); pb->grad += n.grad; }
  }));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "sub: shape mismatch");
  auto pa = a.node(), pb = b.node();
  return Tensor(make_node(a.shape(), pa->value - pb->value, {pa, pb}, [pa, pb](Node& n) {
    if (pa->requires_grad) { pa->ensure_grad(); pa->grad += n.grad; }
    if (pb->requires_grad) { pb->ensure_grad(); pb->grad -= n.grad; }
  }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "mul: shape mismatch");
  auto pa = a.node(), pb = b.node();
  return Tensor(make_node(a.shape(), pa->value * pb->value, {pa, pb}, [pa, pb](Node& n) {
    if (pa->requires_grad) { pa->ensure_grad(); pa->grad += n.grad * pb->value; }
    if (pb->requires_grad) { pb->ensure_grad(); pb->grad += n.grad * pa->value; }
  }));
}

Tensor scale(const Tensor& a, double c) {
  auto pa = a.node();
  return Tensor(make_node(a.shape(), pa->value * c, {pa}, [pa, c](Node& n) {
    pa->ensure_grad();
    pa->grad += n.grad * c;
  }));
}

Tensor relu(const Tensor& a) {
  auto pa = a.node();
  return Tensor(make_node(a.shape(), pa->value.max(0.0), {pa}, [pa](Node& n) {
    pa->ensure_grad();
    pa->grad += n.grad * (pa->value > 0.0).cast<double>();
  }));
}

Tensor sigmoid(const Tensor& a) {
  auto pa = a.node();
  Array y(pa->value.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double x = pa->value[i];
    y[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return Tensor(make_node(a.shape(), std::move(y), {pa}, [pa](Node& n) {
    pa->ensure_grad();
    pa->grad += n.grad * n.value * (1.0 - n.value);
  }));
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  check(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  auto pa = a.node(), pb = b.node();
  const int m = a.rows(), n2 = b.cols();
  Array out(static_cast<std::int64_t>(m) * n2);
  Eigen::Map<MatRM>(out.data(), m, n2).noalias() = as_mat(*pa) * as_mat(*pb);
  return Tensor(make_node({m, n2}, std::move(out), {pa, pb}, [pa, pb](Node& n) {
    const auto dC = grad_mat_const(n);
    if (pa->requires_grad) grad_mat(*pa).noalias() += dC * as_mat(*pb).transpose();
    if (pb->requires_grad) grad_mat(*pb).noalias() += as_mat(*pa).transpose() * dC;
  }));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  check(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  auto pa = a.node(), pb = b.node();
  const int m = a.rows(), n2 = b.rows();
  Array out(static_cast<std::int64_t>(m) * n2);
  Eigen::Map<MatRM>(out.data(), m, n2).noalias() = as_mat(*pa) * as_mat(*pb).transpose();
  return Tensor(make_node({m, n2}, std::move(out), {pa, pb}, [pa, pb](Node& n) {
    const auto dC = grad_mat_const(n);
    if (pa->requires_grad) grad_mat(*pa).noalias() += dC * as_mat(*pb);
    if (pb->requires_grad) grad_mat(*pb).noalias() += dC.transpose() * as_mat(*pa);
  }));
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  auto pa = a.node();
  const int m = a.rows(), n2 = a.cols();
  Array out(pa->value.size());
  Eigen::Map<MatRM>(out.data(), n2, m) = as_mat(*pa).transpose();
  return Tensor(make_node({n2, m}, std::move(out), {pa}, [pa, m, n2](Node& n) {
    grad_mat(*pa).noalias() += Eigen::Map<const MatRM>(n.grad.data(), n2, m).transpose();
  }));
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  check(numel_of(shape) == a.numel(), "reshape: element count mismatch");
  auto pa = a.node();
  return Tensor(make_node(std::move(shape), pa->value, {pa}, [pa](Node& n) {
    pa->ensure_grad();
    pa->grad += n.grad;
  }));
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_rows: no inputs");
  const int cols = parts.front().cols();
  int rows = 0;
  std::vector<NodePtr> parents;
  parents.reserve(parts.size());
  for (const auto& p : parts) {
    check(p.shape().size() == 2 && p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
    parents.push_back(p.node());
  }
  Array out(static_cast<std::int64_t>(rows) * cols);
  std::int64_t off = 0;
  for (const auto& p : parents) {
    out.segment(off, p->value.size()) = p->value;
    off += p->value.size();
  }
  auto ps = parents;
  return Tensor(make_node({rows, cols}, std::move(out), std::move(parents), [ps](Node& n) {
    std::int64_t o = 0;
    for (const auto& p : ps) {
      if (p->requires_grad) {
        p->ensure_grad();
        p->grad += n.grad.segment(o, p->value.size());
      }
      o += p->value.size();
    }
  }));
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_2d(a, "concat_cols");
  require_2d(b, "concat_cols");
  check(a.rows() == b.rows(), "concat_cols: row mismatch");
  auto pa = a.node(), pb = b.node();
  const int m = a.rows(), ca = a.cols(), cb = b.cols();
  Array out(static_cast<std::int64_t>(m) * (ca + cb));
  Eigen::Map<MatRM> O(out.data(), m, ca + cb);
  O.leftCols(ca) = as_mat(*pa);
  O.rightCols(cb) = as_mat(*pb);
  return Tensor(make_node({m, ca + cb}, std::move(out), {pa, pb}, [pa, pb, ca, cb](Node& n) {
    const auto dC = grad_mat_const(n);
    if (pa->requires_grad) grad_mat(*pa) += dC.leftCols(ca);
    if (pb->requires_grad) grad_mat(*pb) += dC.rightCols(cb);
  }));
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  require_2d(a, "slice_rows");
  check(0 <= r0 && r0 < r1 && r1 <= a.rows(), "slice_rows: range out of bounds");
  auto pa = a.node();
  const int cols = a.cols();
  Array out(static_cast<std::int64_t>(r1 - r0) * cols);
  out = pa->value.segment(static_cast<std::int64_t>(r0) * cols, out.size());
  return Tensor(make_node({r1 - r0, cols}, std::move(out), {pa}, [pa, r0, cols](Node& n) {
    pa->ensure_grad();
    pa->grad.segment(static_cast<std::int64_t>(r0) * cols, n.grad.size()) += n.grad;
  }));
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  require_2d(a, "slice_cols");
  check(0 <= c0 && c0 < c1 && c1 <= a.cols(), "slice_cols: range out of bounds");
  auto pa = a.node();
  const int m = a.rows(), w = c1 - c0;
  Array out(static_cast<std::int64_t>(m) * w);
  Eigen::Map<MatRM>(out.data(), m, w) = as_mat(*pa).middleCols(c0, w);
  return Tensor(make_node({m, w}, std::move(out), {pa}, [pa, c0, w, m](Node& n) {
    grad_mat(*pa).middleCols(c0, w) += Eigen::Map<const MatRM>(n.grad.data(), m, w);
  }));
}

// ---------------------------------------------------------------------------
// broadcast
// ---------------------------------------------------------------------------

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  require_2d(x, "add_rowvec");
  check(b.numel() == x.cols(), "add_rowvec: bias length mismatch");
  auto px = x.node(), pb = b.node();
  const int m = x.rows(), c = x.cols();
  Array out(px->value.size());
  Eigen::Map<MatRM> O(out.data(), m, c);
  O = as_mat(*px);
  O.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(pb->value.data(), c);
  return Tensor(make_node(x.shape(), std::move(out), {px, pb}, [px, pb, m, c](Node& n) {
    const auto dC = grad_mat_const(n);
    if (px->requires_grad) { px->ensure_grad(); px->grad += n.grad; }
    if (pb->requires_grad) {
      pb->ensure_grad();
      Eigen::Map<Eigen::RowVectorXd>(pb->grad.data(), c) += dC.colwise().sum();
    }
  }));
}

Tensor add_colvec(const Tensor& x, const Tensor& b) {
  require_2d(x, "add_colvec");
  check(b.numel() == x.rows(), "add_colvec: bias length mismatch");
  auto px = x.node(), pb = b.node();
  const int m = x.rows(), c = x.cols();
  Array out(px->value.size());
  Eigen::Map<MatRM> O(out.data(), m, c);
  O = as_mat(*px);
  O.colwise() += Eigen::Map<const Eigen::VectorXd>(pb->value.data(), m);
  return Tensor(make_node(x.shape(), std::move(out), {px, pb}, [px, pb, m, c](Node& n) {
    const auto dC = grad_mat_const(n);
    if (px->requires_grad) { px->ensure_grad(); px->grad += n.grad; }
    if (pb->requires_grad) {
      pb->ensure_grad();
      Eigen::Map<Eigen::VectorXd>(pb->grad.data(), m) += dC.rowwise().sum();
    }
  }));
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
  auto pa = a.node();
  Array out(1);
  out[0] = pa->value.sum();
  return Tensor(make_node({1, 1}, std::move(out), {pa}, [pa](Node& n) {
    pa->ensure_grad();
    pa->grad += n.grad[0];
  }));
}

Tensor mean_all(const Tensor& a) {
  auto pa = a.node();
  const double inv = 1.0 / static_cast<double>(pa->value.size());
  Array out(1);
  out[0] = pa->value.sum() * inv;
  return Tensor(make_node({1, 1}, std::move(out), {pa}, [pa, inv](Node& n) {
    pa->ensure_grad();
    pa->grad += n.grad[0] * inv;
  }));
}

Tensor mean_rows(const Tensor& a) {
  require_2d(a, "mean_rows");
  auto pa = a.node();
  const int m = a.rows(), c = a.cols();
  const double inv = 1.0 / static_cast<double>(m);
  Array out(c);
  Eigen::Map<Eigen::RowVectorXd>(out.data(), c) = as_mat(*pa).colwise().sum() * inv;
  return Tensor(make_node({1, c}, std::move(out), {pa}, [pa, m, c, inv](Node& n) {
    auto dX = grad_mat(*pa);
    const Eigen::Map<const Eigen::RowVectorXd> dO(n.grad.data(), c);
    dX.rowwise() += dO * inv;
  }));
}

Tensor dot_all(const Tensor& a, const Tensor& b) {
  check(a.numel() == b.numel(), "dot_all: size mismatch");
  auto pa = a.node(), pb = b.node();
  Array out(1);
  out[0] = (pa->value * pb->value).sum();
  return Tensor(make_node({1, 1}, std::move(out), {pa, pb}, [pa, pb](Node& n) {
    const double g = n.grad[0];
    if (pa->requires_grad) { pa->ensure_grad(); pa->grad += g * pb->value; }
    if (pb->requires_grad) { pb->ensure_grad(); pb->grad += g * pa->value; }
  }));
}

// ---------------------------------------------------------------------------
// softmax / normalization
// ---------------------------------------------------------------------------

namespace {

Array masked_softmax_values(const Node& in, int m, int c, const std::vector<std::uint8_t>* allowed) {
  Array out(in.value.size());
  for (int i = 0; i < m; ++i) {
    const std::int64_t off = static_cast<std::int64_t>(i) * c;
    bool any = false;
    if (allowed) {
      for (int j = 0; j < c; ++j)
        if ((*allowed)[off + j]) { any = true; break; }
    }
    const bool use_mask = allowed && any;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j)
      if (!use_mask || (*allowed)[off + j]) mx = std::max(mx, in.value[off + j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
      if (!use_mask || (*allowed)[off + j]) {
        const double e = std::exp(in.value[off + j] - mx);
        out[off + j] = e;
        sum += e;
      } else {
        out[off + j] = 0.0;
      }
    }
    for (int j = 0; j < c; ++j) out[off + j] /= sum;
  }
  return out;
}

Tensor softmax_impl(const Tensor& a, const std::vector<std::uint8_t>* allowed) {
  require_2d(a, "softmax_rows");
  auto pa = a.node();
  const int m = a.rows(), c = a.cols();
  Array y = masked_softmax_values(*pa, m, c, allowed);
  return Tensor(make_node(a.shape(), std::move(y), {pa}, [pa, m, c](Node& n) {
    pa->ensure_grad();
    for (int i = 0; i < m; ++i) {
      const std::int64_t off = static_cast<std::int64_t>(i) * c;
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += n.grad[off + j] * n.value[off + j];
      for (int j = 0; j < c; ++j)
        pa->grad[off + j] += n.value[off + j] * (n.grad[off + j] - dot);
    }
  }));
}

}  // namespace

Tensor softmax_rows(const Tensor& a) { return softmax_impl(a, nullptr); }

Tensor softmax_rows_masked(const Tensor& a, const std::vector<std::uint8_t>& allowed) {
  check(static_cast<std::int64_t>(allowed.size()) == a.numel(),
        "softmax_rows_masked: mask size mismatch");
  return softmax_impl(a, &allowed);
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_2d(x, "layer_norm_rows");
  check(gain.numel() == x.cols() && bias.numel() == x.cols(), "layer_norm_rows: param size mismatch");
  auto px = x.node(), pg = gain.node(), pb = bias.node();
  const int m = x.rows(), c = x.cols();
  Array xhat(px->value.size());
  Array inv_std(m);
  for (int i = 0; i < m; ++i) {
    const std::int64_t off = static_cast<std::int64_t>(i) * c;
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += px->value[off + j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = px->value[off + j] - mu;
      var += d * d;
    }
    var /= c;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (int j = 0; j < c; ++j) xhat[off + j] = (px->value[off + j] - mu) * is;
  }
  Array out(px->value.size());
  for (int i = 0; i < m; ++i) {
    const std::int64_t off = static_cast<std::int64_t>(i) * c;
    for (int j = 0; j < c; ++j) out[off + j] = xhat[off + j] * pg->value[j] + pb->value[j];
  }
  auto xh = std::make_shared<Array>(std::move(xhat));
  auto is_ = std::make_shared<Array>(std::move(inv_std));
  return Tensor(make_node(x.shape(), std::move(out), {px, pg, pb},
                          [px, pg, pb, xh, is_, m, c](Node& n) {
    for (int i = 0; i < m; ++i) {
      const std::int64_t off = static_cast<std::int64_t>(i) * c;
      double sum_dxh = 0.0, sum_dxh_xh = 0.0;
      for (int j = 0; j < c; ++j) {
        const double dxh = n.grad[off + j] * pg->value[j];
        sum_dxh += dxh;
        sum_dxh_xh += dxh * (*xh)[off + j];
      }
      if (px->requires_grad) {
        px->ensure_grad();
        const double is = (*is_)[i];
        for (int j = 0; j < c; ++j) {
          const double dxh = n.grad[off + j] * pg->value[j];
          px->grad[off + j] +=
              is * (dxh - sum_dxh / c - (*xh)[off + j] * sum_dxh_xh / c);
        }
      }
      if (pg->requires_grad) {
        pg->ensure_grad();
        for (int j = 0; j < c; ++j) pg->grad[j] += n.grad[off + j] * (*xh)[off + j];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int j = 0; j < c; ++j) pb->grad[j] += n.grad[off + j];
      }
    }
  }));
}

// ---------------------------------------------------------------------------
// conv / resampling
// ---------------------------------------------------------------------------

Tensor conv2d_s2(const Tensor& x, int h, int w, const Tensor& weight, const Tensor& bias) {
  require_2d(x, "conv2d_s2");
  check(h % 2 == 0 && w % 2 == 0, "conv2d_s2: input dims must be even");
  const int cin = x.rows();
  check(x.cols() == h * w, "conv2d_s2: input size mismatch");
  const int cout = weight.rows();
  check(weight.cols() == cin * 9, "conv2d_s2: weight shape mismatch");
  check(bias.numel() == cout, "conv2d_s2: bias size mismatch");
  const int oh = h / 2, ow = w / 2;
  const std::int64_t opix = static_cast<std::int64_t>(oh) * ow;

  auto px = x.node(), pw = weight.node(), pb = bias.node();

  // im2col: rows = cin*9 patch entries, cols = output pixels (3x3, pad 1).
  auto cols = std::make_shared<MatRM>(cin * 9, opix);
  cols->setZero();
  for (int ci = 0; ci < cin; ++ci) {
    const double* src = px->value.data() + static_cast<std::int64_t>(ci) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* dst = cols->row(ci * 9 + ky * 3 + kx).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = 2 * oy + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = 2 * ox + kx - 1;
            if (ix < 0 || ix >= w) continue;
            dst[static_cast<std::int64_t>(oy) * ow + ox] = src[static_cast<std::int64_t>(iy) * w + ix];
          }
        }
      }
    }
  }

  Array out(static_cast<std::int64_t>(cout) * opix);
  Eigen::Map<MatRM> O(out.data(), cout, opix);
  O.noalias() = as_mat(*pw) * (*cols);
  O.colwise() += Eigen::Map<const Eigen::VectorXd>(pb->value.data(), cout);

  return Tensor(make_node({cout, static_cast<int>(opix)}, std::move(out), {px, pw, pb},
                          [px, pw, pb, cols, h, w, cin, cout, oh, ow, opix](Node& n) {
    const Eigen::Map<const MatRM> dO(n.grad.data(), cout, opix);
    if (pw->requires_grad) grad_mat(*pw).noalias() += dO * cols->transpose();
    if (pb->requires_grad) {
      pb->ensure_grad();
      Eigen::Map<Eigen::VectorXd>(pb->grad.data(), cout) += dO.rowwise().sum();
    }
    if (px->requires_grad) {
      px->ensure_grad();
      MatRM dCols(cin * 9, opix);
      dCols.noalias() = as_mat(*pw).transpose() * dO;
      for (int ci = 0; ci < cin; ++ci) {
        double* dst = px->grad.data() + static_cast<std::int64_t>(ci) * h * w;
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const double* src = dCols.row(ci * 9 + ky * 3 + kx).data();
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = 2 * oy + ky - 1;
              if (iy < 0 || iy >= h) continue;
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = 2 * ox + kx - 1;
                if (ix < 0 || ix >= w) continue;
                dst[static_cast<std::int64_t>(iy) * w + ix] += src[static_cast<std::int64_t>(oy) * ow + ox];
              }
            }
          }
        }
      }
    }
  }));
}

Tensor upsample2x(const Tensor& x, int h, int w) {
  require_2d(x, "upsample2x");
  const int c = x.rows();
  check(x.cols() == h * w, "upsample2x: input size mismatch");
  auto px = x.node();
  const int oh = h * 2, ow = w * 2;
  Array out(static_cast<std::int64_t>(c) * oh * ow);
  for (int ci = 0; ci < c; ++ci) {
    const double* src = px->value.data() + static_cast<std::int64_t>(ci) * h * w;
    double* dst = out.data() + static_cast<std::int64_t>(ci) * oh * ow;
    for (int y = 0; y < h; ++y)
      for (int x2 = 0; x2 < w; ++x2) {
        const double v = src[static_cast<std::int64_t>(y) * w + x2];
        dst[static_cast<std::int64_t>(2 * y) * ow + 2 * x2] = v;
        dst[static_cast<std::int64_t>(2 * y) * ow + 2 * x2 + 1] = v;
        dst[static_cast<std::int64_t>(2 * y + 1) * ow + 2 * x2] = v;
        dst[static_cast<std::int64_t>(2 * y + 1) * ow + 2 * x2 + 1] = v;
      }
  }
  return Tensor(make_node({c, oh * ow}, std::move(out), {px}, [px, c, h, w, oh, ow](Node& n) {
    px->ensure_grad();
    for (int ci = 0; ci < c; ++ci) {
      double* dst = px->grad.data() + static_cast<std::int64_t>(ci) * h * w;
      const double* src = n.grad.data() + static_cast<std::int64_t>(ci) * oh * ow;
      for (int y = 0; y < h; ++y)
        for (int x2 = 0; x2 < w; ++x2)
          dst[static_cast<std::int64_t>(y) * w + x2] +=
              src[static_cast<std::int64_t>(2 * y) * ow + 2 * x2] +
              src[static_cast<std::int64_t>(2 * y) * ow + 2 * x2 + 1] +
              src[static_cast<std::int64_t>(2 * y + 1) * ow + 2 * x2] +
              src[static_cast<std::int64_t>(2 * y + 1) * ow + 2 * x2 + 1];
    }
  }));
}

// ---------------------------------------------------------------------------
// losses / similarity
// ---------------------------------------------------------------------------

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
  check(a.numel() == b.numel(), "cosine_sim: size mismatch");
  auto pa = a.node(), pb = b.node();
  const double saa = (pa->value * pa->value).sum();
  const double sbb = (pb->value * pb->value).sum();
  if (saa < 1e-24 || sbb < 1e-24) return Tensor::scalar_const(0.0);
  const double sab = (pa->value * pb->value).sum();
  const double denom = std::sqrt(saa * sbb);
  Array out(1);
  out[0] = sab / denom;
  return Tensor(make_node({1, 1}, std::move(out), {pa, pb},
                          [pa, pb, saa, sbb, denom](Node& n) {
    const double g = n.grad[0];
    const double c = n.value[0];
    if (pa->requires_grad) {
      pa->ensure_grad();
      pa->grad += g * (pb->value / denom - c * pa->value / saa);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      pb->grad += g * (pa->value / denom - c * pb->value / sbb);
    }
  }));
}

Tensor bce_mean_probs(const Tensor& p, const Array& targets, double eps) {
  check(p.numel() == targets.size(), "bce_mean_probs: target size mismatch");
  auto pp = p.node();
  const std::int64_t n = pp->value.size();
  auto t = std::make_shared<Array>(targets);
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double pc = std::min(std::max(pp->value[i], eps), 1.0 - eps);
    acc += -(targets[i] * std::log(pc) + (1.0 - targets[i]) * std::log(1.0 - pc));
  }
  Array out(1);
  out[0] = acc / static_cast<double>(n);
  return Tensor(make_node({1, 1}, std::move(out), {pp}, [pp, t, eps, n](Node& nd) {
    pp->ensure_grad();
    const double g = nd.grad[0] / static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
      const double raw = pp->value[i];
      if (raw < eps || raw > 1.0 - eps) continue;  // clamped region, zero slope
      pp->grad[i] += g * (-(*t)[i] / raw + (1.0 - (*t)[i]) / (1.0 - raw));
    }
  }));
}

Tensor dice_loss(const Tensor& p, const Array& targets) {
  check(p.numel() == targets.size(), "dice_loss: target size mismatch");
  auto pp = p.node();
  auto t = std::make_shared<Array>(targets);
  const double inter = (pp->value * targets).sum();
  const double num = 2.0 * inter + 1.0;
  const double den = pp->value.sum() + targets.sum() + 1.0;
  Array out(1);
  out[0] = 1.0 - num / den;
  return Tensor(make_node({1, 1}, std::move(out), {pp}, [pp, t, num, den](Node& nd) {
    pp->ensure_grad();
    const double g = nd.grad[0];
    pp->grad += g * ((num - 2.0 * (*t) * den) / (den * den));
  }));
}

Tensor softmax_xent_rows(const Tensor& logits, const std::vector<int>& labels) {
  require_2d(logits, "softmax_xent_rows");
  check(static_cast<int>(labels.size()) == logits.rows(), "softmax_xent_rows: label count mismatch");
  auto pl = logits.node();
  const int m = logits.rows(), c = logits.cols();
  for (const int l : labels) check(0 <= l && l < c, "softmax_xent_rows: label out of range");
  Array probs = masked_softmax_values(*pl, m, c, nullptr);
  double acc = 0.0;
  for (int i = 0; i < m; ++i) {
    const double pi = probs[static_cast<std::int64_t>(i) * c + labels[i]];
    acc += -std::log(std::max(pi, 1e-300));
  }
  Array out(1);
  out[0] = acc / m;
  auto pr = std::make_shared<Array>(std::move(probs));
  auto lb = std::make_shared<std::vector<int>>(labels);
  return Tensor(make_node({1, 1}, std::move(out), {pl}, [pl, pr, lb, m, c](Node& nd) {
    pl->ensure_grad();
    const double g = nd.grad[0] / m;
    for (int i = 0; i < m; ++i) {
      const std::int64_t off = static_cast<std::int64_t>(i) * c;
      for (int j = 0; j < c; ++j)
        pl->grad[off + j] += g * ((*pr)[off + j] - (j == (*lb)[i] ? 1.0 : 0.0));
    }
  }));
}

Tensor bce_logits_mean(const Tensor& z, const Array& targets) {
  check(z.numel() == targets.size(), "bce_logits_mean: target size mismatch");
  auto pz = z.node();
  const std::int64_t n = pz->value.size();
  auto t = std::make_shared<Array>(targets);
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double zi = pz->value[i];
    acc += std::max(zi, 0.0) - zi * targets[i] + std::log1p(std::exp(-std::abs(zi)));
  }
  Array out(1);
  out[0] = acc / static_cast<double>(n);
  return Tensor(make_node({1, 1}, std::move(out), {pz}, [pz, t, n](Node& nd) {
    pz->ensure_grad();
    const double g = nd.grad[0] / static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
      const double zi = pz->value[i];
      const double s = zi >= 0.0 ? 1.0 / (1.0 + std::exp(-zi)) : std::exp(zi) / (1.0 + std::exp(zi));
      pz->grad[i] += g * (s - (*t)[i]);
    }
  }));
}

}  // namespace refvos::ad
