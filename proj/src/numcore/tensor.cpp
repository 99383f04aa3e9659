#include "decaf/numcore/tensor.hpp"

#include "decaf/error.hpp"

#include <numeric>
#include <sstream>

namespace decaf::nc {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Index storage_cols(const Shape& shape) { return shape.empty() ? 1 : shape.back(); }

Index storage_rows(const Shape& shape) {
  if (shape.size() <= 1) return 1;
  return numel(shape) / shape.back();
}

void Node::accumulate(const Eigen::Ref<const Matrix>& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Tensor Tensor::constant(Shape shape, Matrix value) {
  for (auto d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + to_string(shape));
  }
  if (value.rows() != storage_rows(shape) || value.cols() != storage_cols(shape)) {
    throw DimensionError("storage " + std::to_string(value.rows()) + "x" +
                         std::to_string(value.cols()) + " does not match shape " +
                         to_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape) {
  Matrix m = Matrix::Zero(storage_rows(shape), storage_cols(shape));
  return constant(std::move(shape), std::move(m));
}

Tensor Tensor::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant({}, std::move(m));
}

Tensor Tensor::vector(const Eigen::Ref<const Vector>& v) {
  Matrix m = v.transpose();
  return constant({v.size()}, std::move(m));
}

Tensor Tensor::parameter(Shape shape, Matrix value) {
  Tensor t = constant(std::move(shape), std::move(value));
  t.node_->requires_grad = true;
  return t;
}

Index Tensor::dim(Index axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(shape()));
  }
  return node_->shape[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return node_->value(0, 0);
}

Matrix Tensor::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(node_->value.rows(), node_->value.cols());
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.resize(0, 0); }

Tensor Tensor::detach() const { return constant(node_->shape, node_->value); }

void Tape::record(NodePtr node) {
  if (consumed_) throw ContractError("tape already consumed by backward()");
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("backward() called twice on the same tape");
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss");
  }
  const Node* target = loss.node().get();
  auto it = std::find_if(nodes_.rbegin(), nodes_.rend(),
                         [&](const NodePtr& n) { return n.get() == target; });
  if (it == nodes_.rend()) throw ContractError("loss is not recorded on this tape");

  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (; it != nodes_.rend(); ++it) {
    Node& node = **it;
    if (node.grad.size() != 0 && node.backward) node.backward(node);
  }
  for (auto& node : nodes_) {
    node->backward = nullptr;
    node->inputs.clear();
  }
  nodes_.clear();
  consumed_ = true;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& loss) {
  if (g_active_tape == nullptr) throw ContractError("backward() without an active tape");
  g_active_tape->backward(loss);
}

namespace detail {

Tensor make_result(Shape shape, Matrix value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> rule) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  Tape* tape = g_active_tape;
  if (tape != nullptr) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& t : inputs) node->inputs.push_back(t.node());
      node->backward = std::move(rule);
      tape->record(node);
    }
  }
  return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace decaf::nc
