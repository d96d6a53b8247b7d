#pragma once

// Dense f64 tensors with define-by-run reverse-mode differentiation.
//
// Every op creates a graph node holding its forward value, its inputs and an
// adjoint closure. backward() sorts the nodes reachable from a scalar loss
// topologically and runs the adjoints once each, in reverse order. Gradients
// are returned in a Gradients map rather than written into the tensors, so a
// graph built on one thread never mutates state shared with another.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "alnp3/errors.hpp"

namespace alnp3 {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace ad {

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Scale,
  AddScalar,
  MatMul,
  Transpose,
  ConcatCols,
  ConcatRows,
  Mean,
  Sum,
  Relu,
  Tanh,
  Softmax,
  LogSoftmax,
  Log,
  Exp,
  Square,
  L2Norm,
  GatherRows,
  Reshape,
};

const char* op_name(Op op);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Adjoint: given d(loss)/d(output), accumulate into the gradient buffers of the
// inputs. A buffer pointer is null when that input does not require a gradient.
using Adjoint = std::function<void(const Node& self, std::span<const double> grad_out,
                                   std::span<std::vector<double>* const> grad_in)>;

struct Node {
  Op op = Op::Leaf;
  Shape shape;
  std::vector<double> value;
  std::vector<NodePtr> inputs;
  bool requires_grad = false;
  Adjoint adjoint;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);

  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t dim() const { return node_->shape.size(); }
  // Product of all leading extents, and the last extent.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return node_->value; }
  double item() const;
  double at(std::size_t i) const { return node_->value.at(i); }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->op == Op::Leaf; }
  Op op() const { return node_->op; }

  // Leaves only: parameters are updated in place by the optimizer between
  // graph constructions.
  std::span<double> mutable_values();

  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

  static Tensor from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  NodePtr node_;
};

// Gradients produced by one backward pass, keyed by graph node.
class Gradients {
 public:
  // Zero tensor of matching shape for tensors the loss does not depend on.
  Tensor of(const Tensor& t) const;
  std::span<const double> values_of(const Tensor& t) const;
  bool contains(const Tensor& t) const;

 private:
  friend Gradients backward(const Tensor& loss);
  struct Entry {
    NodePtr node;
    std::vector<double> grad;
  };
  std::unordered_map<const Node*, Entry> grads_;
};

Gradients backward(const Tensor& loss);

// Counts nodes created on this thread while alive.
class OpCounter {
 public:
  OpCounter();
  std::size_t count() const;

 private:
  std::size_t start_;
};

// Elementwise binary ops: equal shapes, or either side with one element.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

// 2-D only.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor concat_rows(const std::vector<Tensor>& parts);
// Concatenate along the last axis; leading extents must agree.
Tensor concat(const std::vector<Tensor>& parts);

// Full reductions to shape {1}.
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);

// Last-axis ops. softmax subtracts the row max before exponentiating.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
// Shape [..., n] -> [..., 1].
Tensor l2_norm(const Tensor& a);

// 2-D: select rows by index (repeats allowed).
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& rows);
Tensor reshape(const Tensor& a, Shape shape);

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h = 1e-5);

// Same, perturbing a leaf in place at the listed coordinates; f re-reads the
// leaf on each call. The leaf is restored bitwise afterwards.
std::vector<double> finite_diff_leaf(const std::function<double()>& f, Tensor& leaf,
                                     const std::vector<std::size_t>& coords, double h = 1e-5);

}  // namespace ad
}  // namespace alnp3
