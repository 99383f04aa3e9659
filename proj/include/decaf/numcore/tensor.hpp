#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace decaf::nc {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

/// Storage for every tensor: a row-major matrix whose column count is the
/// size of the last axis and whose row count is the product of all leading
/// axes. Rank 0 and rank 1 tensors are stored as a single row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One value in the computation graph. Leaves (parameters, constants) have no
/// backward rule; recorded intermediates carry their inputs and a rule that
/// pushes `grad` into the inputs' gradients.
struct Node {
  Shape shape;
  Matrix value;
  Matrix grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward;

  void accumulate(const Eigen::Ref<const Matrix>& g);
  template <typename Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

/// Shared handle to a graph node. Copies alias the same node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  /// Constant (no gradient). `value` must hold numel(shape) entries laid out
  /// as storage_rows(shape) x storage_cols(shape).
  static Tensor constant(Shape shape, Matrix value);
  static Tensor zeros(Shape shape);
  static Tensor scalar(double v);
  /// Vector of length n from any Eigen expression.
  static Tensor vector(const Eigen::Ref<const Vector>& v);
  /// Trainable leaf.
  static Tensor parameter(Shape shape, Matrix value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(Index axis) const;
  Index numel() const { return node_->value.size(); }

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  /// Accumulated gradient, zeros when nothing has flowed into this tensor.
  Matrix grad() const;
  void zero_grad();

  /// Same value, cut from the graph.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

Index storage_rows(const Shape& shape);
Index storage_cols(const Shape& shape);

/// Records operations for reverse-mode differentiation. A tape is confined to
/// one thread and is single-use: backward() consumes it, and a second call
/// raises ContractError.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(NodePtr node);
  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule once, newest
  /// first. Gradients accumulate into leaves with requires_grad.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<NodePtr> nodes_;
  bool consumed_ = false;
};

/// Makes `tape` the recording target for ops issued on this thread while the
/// scope is alive. Scopes nest; the innermost wins.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording (inference inside a training step).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Runs backward on the active tape.
void backward(const Tensor& loss);

namespace detail {

/// Builds an op result. When a tape is active and any input requires
/// gradients, the node is recorded with `rule`; otherwise it is a constant.
Tensor make_result(Shape shape, Matrix value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> rule);

inline Node& in(Node& self, std::size_t i) { return *self.inputs[i]; }

}  // namespace detail

}  // namespace decaf::nc
