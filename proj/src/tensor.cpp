#include "alnp3/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace alnp3 {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace ad {

namespace {

thread_local std::size_t t_nodes_created = 0;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void check_shape(const Shape& shape, std::size_t n) {
  if (shape.empty()) throw ShapeError("tensor: empty shape");
  for (auto e : shape)
    if (e == 0) throw ShapeError("tensor: zero extent in " + shape_str(shape));
  if (shape_numel(shape) != n)
    throw ShapeError("tensor: " + std::to_string(n) + " values for shape " + shape_str(shape));
}

void require_finite(const char* op, std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) throw DomainError(std::string(op) + ": non-finite input");
}

void require_2d(const char* op, const Tensor& t) {
  if (t.dim() != 2) throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_str(t.shape()));
}

Tensor make(Op op, Shape shape, std::vector<double> value, std::vector<NodePtr> inputs, Adjoint adjoint) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& n) { return n->requires_grad; });
  node->inputs = std::move(inputs);
  if (node->requires_grad) node->adjoint = std::move(adjoint);
  ++t_nodes_created;
  return Tensor::from_node(std::move(node));
}

std::size_t leading(const Shape& s) { return shape_numel(s) / s.back(); }

// Shared implementation for binary elementwise ops with scalar broadcast.
// fwd(a, b) -> out; da(a, b) and db(a, b) are the partials.
template <typename Fwd, typename Da, typename Db>
Tensor binary(Op op, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  const bool a_scalar = a.numel() == 1 && b.numel() != 1;
  const bool b_scalar = b.numel() == 1 && !a_scalar;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) shape_fail(op_name(op), a.shape(), b.shape());
  // Two one-element operands keep the left shape.
  const Shape out_shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  return make(op, out_shape, std::move(out), {a.node(), b.node()},
              [a_scalar, b_scalar, da, db](const Node& self, std::span<const double> g,
                                           std::span<std::vector<double>* const> gin) {
                const auto& x = self.inputs[0]->value;
                const auto& y = self.inputs[1]->value;
                for (std::size_t i = 0; i < g.size(); ++i) {
                  const double xi = x[a_scalar ? 0 : i];
                  const double yi = y[b_scalar ? 0 : i];
                  if (gin[0]) (*gin[0])[a_scalar ? 0 : i] += g[i] * da(xi, yi);
                  if (gin[1]) (*gin[1])[b_scalar ? 0 : i] += g[i] * db(xi, yi);
                }
              });
}

template <typename Fwd, typename Dx>
Tensor unary(Op op, const Tensor& a, Fwd fwd, Dx dx) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make(op, a.shape(), std::move(out), {a.node()},
              [dx](const Node& self, std::span<const double> g, std::span<std::vector<double>* const> gin) {
                const auto& x = self.inputs[0]->value;
                auto& gx = *gin[0];
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dx(x[i], self.value[i]);
              });
}

// out (R x C) = a (R x K) * b (K x C), accumulating when accumulate is set.
void gemm(const double* a, const double* b, double* out, std::size_t r, std::size_t k, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    double* orow = out + i * c;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * c;
      for (std::size_t j = 0; j < c; ++j) orow[j] += aip * brow[j];
    }
  }
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::ConcatCols: return "concat";
    case Op::ConcatRows: return "concat_rows";
    case Op::Mean: return "mean";
    case Op::Sum: return "sum";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Softmax: return "softmax";
    case Op::LogSoftmax: return "log_softmax";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::Square: return "square";
    case Op::L2Norm: return "l2_norm";
    case Op::GatherRows: return "gather_rows";
    case Op::Reshape: return "reshape";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  check_shape(shape, values.size());
  return make(Op::Leaf, std::move(shape), std::move(values), {}, {});
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
  const std::size_t n = shape_numel(shape);
  return constant(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) { return constant({1}, {v}); }

std::size_t Tensor::rows() const { return leading(shape()); }
std::size_t Tensor::cols() const { return shape().back(); }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value.at(r * cols() + c); }

std::span<double> Tensor::mutable_values() {
  if (!is_leaf()) throw ContractError("mutable_values: only leaf tensors may be written");
  return node_->value;
}

// ---------------------------------------------------------------------------
// Backward

Tensor Gradients::of(const Tensor& t) const {
  auto it = grads_.find(t.node().get());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return Tensor::constant(t.shape(), it->second.grad);
}

std::span<const double> Gradients::values_of(const Tensor& t) const {
  auto it = grads_.find(t.node().get());
  if (it == grads_.end()) return {};
  return it->second.grad;
}

bool Gradients::contains(const Tensor& t) const { return grads_.count(t.node().get()) != 0; }

Gradients backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  Gradients out;
  if (!loss.requires_grad()) return out;

  // Iterative post-order DFS; inputs visited in declaration order so the
  // schedule depends only on the graph.
  std::vector<Node*> order;
  std::unordered_set<const Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto buffer = [&](const NodePtr& n) -> std::vector<double>* {
    auto [it, inserted] = out.grads_.try_emplace(n.get());
    if (inserted) {
      it->second.node = n;
      it->second.grad.assign(n->value.size(), 0.0);
    }
    return &it->second.grad;
  };

  buffer(loss.node())->at(0) = 1.0;
  std::vector<std::vector<double>*> gin;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->adjoint) continue;
    gin.assign(node->inputs.size(), nullptr);
    for (std::size_t i = 0; i < node->inputs.size(); ++i)
      if (node->inputs[i]->requires_grad) gin[i] = buffer(node->inputs[i]);
    const auto& g = out.grads_.at(node).grad;
    node->adjoint(*node, g, gin);
  }
  return out;
}

OpCounter::OpCounter() : start_(t_nodes_created) {}
std::size_t OpCounter::count() const { return t_nodes_created - start_; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      Op::Add, a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      Op::Sub, a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      Op::Mul, a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double y : b.values())
    if (y == 0.0) throw DomainError("div: division by zero");
  return binary(
      Op::Div, a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& a, double c) {
  return unary(
      Op::Scale, a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary(
      Op::AddScalar, a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(
      Op::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      Op::Tanh, a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor log(const Tensor& a) {
  for (double x : a.values())
    if (!std::isfinite(x) || x <= 0.0) throw DomainError("log: input must be finite and positive");
  return unary(
      Op::Log, a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return unary(
      Op::Exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& a) {
  return unary(
      Op::Square, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  const std::size_t r = a.shape()[0], k = a.shape()[1], c = b.shape()[1];
  if (b.shape()[0] != k) shape_fail("matmul", a.shape(), b.shape());
  std::vector<double> out(r * c, 0.0);
  gemm(a.values().data(), b.values().data(), out.data(), r, k, c);
  return make(Op::MatMul, {r, c}, std::move(out), {a.node(), b.node()},
              [r, k, c](const Node& self, std::span<const double> g, std::span<std::vector<double>* const> gin) {
                const auto& av = self.inputs[0]->value;
                const auto& bv = self.inputs[1]->value;
                if (gin[0]) {
                  // dA = G * B^T
                  auto& ga = *gin[0];
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                      double acc = 0.0;
                      const double* brow = bv.data() + p * c;
                      const double* grow = g.data() + i * c;
                      for (std::size_t j = 0; j < c; ++j) acc += grow[j] * brow[j];
                      ga[i * k + p] += acc;
                    }
                }
                if (gin[1]) {
                  // dB = A^T * G
                  auto& gb = *gin[1];
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                      const double aip = av[i * k + p];
                      if (aip == 0.0) continue;
                      double* gbrow = gb.data() + p * c;
                      const double* grow = g.data() + i * c;
                      for (std::size_t j = 0; j < c; ++j) gbrow[j] += aip * grow[j];
                    }
                }
              });
}

Tensor transpose(const Tensor& a) {
  require_2d("transpose", a);
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  auto av = a.values();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return make(Op::Transpose, {c, r}, std::move(out), {a.node()},
              [r, c](const Node&, std::span<const double> g, std::span<std::vector<double>* const> gin) {
                auto& ga = *gin[0];
                for (std::size_t i = 0; i < r; ++i)
                  for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
              });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts[0].shape();
  Shape lead(first.begin(), first.end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead) shape_fail("concat", first, p.shape());
    widths.push_back(p.cols());
    total += p.cols();
  }
  const std::size_t rows = shape_numel(lead);
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  Shape shape = lead;
  shape.push_back(total);
  std::vector<NodePtr> inputs;
  for (const auto& p : parts) inputs.push_back(p.node());
  return make(Op::ConcatCols, std::move(shape), std::move(out), std::move(inputs),
              [rows, total, widths](const Node&, std::span<const double> g,
                                    std::span<std::vector<double>* const> gin) {
                std::size_t off = 0;
                for (std::size_t k = 0; k < widths.size(); ++k) {
                  if (gin[k]) {
                    auto& gk = *gin[k];
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t j = 0; j < widths[k]; ++j) gk[r * widths[k] + j] += g[r * total + off + j];
                  }
                  off += widths[k];
                }
              });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::vector<double> out;
  std::vector<std::size_t> sizes;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_2d("concat_rows", p);
    if (p.cols() != c) shape_fail("concat_rows", parts[0].shape(), p.shape());
    out.insert(out.end(), p.values().begin(), p.values().end());
    sizes.push_back(p.numel());
    rows += p.shape()[0];
  }
  std::vector<NodePtr> inputs;
  for (const auto& p : parts) inputs.push_back(p.node());
  return make(Op::ConcatRows, {rows, c}, std::move(out), std::move(inputs),
              [sizes](const Node&, std::span<const double> g, std::span<std::vector<double>* const> gin) {
                std::size_t off = 0;
                for (std::size_t k = 0; k < sizes.size(); ++k) {
                  if (gin[k])
                    for (std::size_t i = 0; i < sizes[k]; ++i) (*gin[k])[i] += g[off + i];
                  off += sizes[k];
                }
              });
}

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& rows) {
  require_2d("gather_rows", a);
  if (rows.empty()) throw ContractError("gather_rows: empty index list");
  const std::size_t n = a.shape()[0], c = a.shape()[1];
  auto av = a.values();
  std::vector<double> out(rows.size() * c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n)
      throw ShapeError("gather_rows: index " + std::to_string(rows[i]) + " out of range for " + shape_str(a.shape()));
    std::copy_n(av.data() + rows[i] * c, c, out.data() + i * c);
  }
  return make(Op::GatherRows, {rows.size(), c}, std::move(out), {a.node()},
              [rows, c](const Node&, std::span<const double> g, std::span<std::vector<double>* const> gin) {
                auto& ga = *gin[0];
                for (std::size_t i = 0; i < rows.size(); ++i)
                  for (std::size_t j = 0; j < c; ++j) ga[rows[i] * c + j] += g[i * c + j];
              });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) shape_fail("reshape", a.shape(), shape);
  std::vector<double> out(a.values().begin(), a.values().end());
  return make(Op::Reshape, std::move(shape), std::move(out), {a.node()},
              [](const Node&, std::span<const double> g, std::span<std::vector<double>* const> gin) {
                auto& ga = *gin[0];
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
              });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return make(Op::Sum, {1}, {s}, {a.node()},
              [](const Node&, std::span<const double> g, std::span<std::vector<double>* const> gin) {
                for (auto& x : *gin[0]) x += g[0];
              });
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  const double n = static_cast<double>(a.numel());
  return make(Op::Mean, {1}, {s / n}, {a.node()},
              [n](const Node&, std::span<const double> g, std::span<std::vector<double>* const> gin) {
                for (auto& x : *gin[0]) x += g[0] / n;
              });
}

// ---------------------------------------------------------------------------
// Last-axis ops

Tensor softmax(const Tensor& a) {
  require_finite("softmax", a.values());
  const std::size_t r = a.rows(), c = a.cols();
  auto av = a.values();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = av.data() + i * c;
    double* y = out.data() + i * c;
    const double m = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - m));
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  return make(Op::Softmax, a.shape(), std::move(out), {a.node()},
              [r, c](const Node& self, std::span<const double> g, std::span<std::vector<double>* const> gin) {
                auto& ga = *gin[0];
                for (std::size_t i = 0; i < r; ++i) {
                  const double* y = self.value.data() + i * c;
                  const double* gi = g.data() + i * c;
                  double dot = 0.0;
                  for (std::size_t j = 0; j < c; ++j) dot += gi[j] * y[j];
                  for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += y[j] * (gi[j] - dot);
                }
              });
}

Tensor log_softmax(const Tensor& a) {
  require_finite("log_softmax", a.values());
  const std::size_t r = a.rows(), c = a.cols();
  auto av = a.values();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = av.data() + i * c;
    double* y = out.data() + i * c;
    const double m = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - m);
    const double lz = m + std::log(z);
    for (std::size_t j = 0; j < c; ++j) y[j] = x[j] - lz;
  }
  return make(Op::LogSoftmax, a.shape(), std::move(out), {a.node()},
              [r, c](const Node& self, std::span<const double> g, std::span<std::vector<double>* const> gin) {
                auto& ga = *gin[0];
                for (std::size_t i = 0; i < r; ++i) {
                  const double* y = self.value.data() + i * c;
                  const double* gi = g.data() + i * c;
                  double gs = 0.0;
                  for (std::size_t j = 0; j < c; ++j) gs += gi[j];
                  for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += gi[j] - std::exp(y[j]) * gs;
                }
              });
}

Tensor l2_norm(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  auto av = a.values();
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += av[i * c + j] * av[i * c + j];
    out[i] = std::sqrt(s);
  }
  Shape shape = a.shape();
  shape.back() = 1;
  return make(Op::L2Norm, std::move(shape), std::move(out), {a.node()},
              [r, c](const Node& self, std::span<const double> g, std::span<std::vector<double>* const> gin) {
                const auto& x = self.inputs[0]->value;
                auto& ga = *gin[0];
                for (std::size_t i = 0; i < r; ++i) {
                  const double n = self.value[i];
                  if (n == 0.0) continue;  // subgradient 0 at the origin
                  for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i] * x[i * c + j] / n;
                }
              });
}

// ---------------------------------------------------------------------------
// Finite differences

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
  std::vector<double> base(x.values().begin(), x.values().end());
  std::vector<double> grad(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto plus = base;
    auto minus = base;
    plus[i] += h;
    minus[i] -= h;
    const double fp = f(Tensor::constant(x.shape(), std::move(plus)));
    const double fm = f(Tensor::constant(x.shape(), std::move(minus)));
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor::constant(x.shape(), std::move(grad));
}

std::vector<double> finite_diff_leaf(const std::function<double()>& f, Tensor& leaf,
                                     const std::vector<std::size_t>& coords, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_leaf: step must be positive");
  auto v = leaf.mutable_values();
  std::vector<double> grad;
  grad.reserve(coords.size());
  for (std::size_t i : coords) {
    const double orig = v[i];
    v[i] = orig + h;
    const double fp = f();
    v[i] = orig - h;
    const double fm = f();
    v[i] = orig;
    grad.push_back((fp - fm) / (2.0 * h));
  }
  return grad;
}

}  // namespace ad
}  // namespace alnp3
