#include "cfine/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "cfine/errors.hpp"

namespace cfine {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(const char* op, Shape dims, std::vector<double> data) {
  for (auto d : dims) {
    if (d == 0) {
      throw ShapeError(std::string(op) + ": zero-length axis in shape " + shape_string(dims));
    }
  }
  if (shape_size(dims) != data.size()) {
    throw ShapeError(std::string(op) + ": shape " + shape_string(dims) + " needs " +
                     std::to_string(shape_size(dims)) + " values, got " +
                     std::to_string(data.size()));
  }
  detail::check_finite(op, data);
  auto node = std::make_shared<detail::Node>();
  node->dims = std::move(dims);
  node->data = std::move(data);
  node->op = op;
  node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::size_t shape_size(const Shape& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string shape_string(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

void detail::check_finite(const char* op, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(op) + ": non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

Tensor::Tensor(Shape dims, std::vector<double> data, bool requires_grad)
    : node_(new_node("leaf", std::move(dims), std::move(data))) {
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape dims, bool requires_grad) { return full(std::move(dims), 0.0, requires_grad); }

Tensor Tensor::full(Shape dims, double value, bool requires_grad) {
  auto n = shape_size(dims);
  return Tensor(std::move(dims), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  auto n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::dims() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->dims;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& d = dims();
  if (axis >= d.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(d));
  }
  return d[axis];
}

std::size_t Tensor::size() const { return shape_size(dims()); }

std::span<const double> Tensor::data() const {
  dims();
  return node_->data;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(dims()));
  return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw ShapeError("at(row, col) needs a matrix, got " + shape_string(dims()));
  return node_->data[row * node_->dims[1] + col];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  dims();
  if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

std::span<double> Tensor::mutable_data() {
  dims();
  if (!node_->parents.empty() || node_->backward) {
    throw ContractError("mutable_data() is only allowed on leaf tensors");
  }
  return node_->data;
}

void Tensor::backward() const {
  if (size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(dims()));
  }
  if (!node_->requires_grad) return;

  // Collect every node reachable from the loss, then sweep in reverse
  // creation order so each node's grad is complete before it propagates.
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<detail::Node*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  node_->ensure_grad()[0] += 1.0;
  for (auto* n : order) {
    n->ensure_grad();
    if (n->backward) n->backward(*n);
  }
}

Tensor Tensor::detach() const {
  dims();
  return Tensor(node_->dims, node_->data, false);
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_mode_enabled() { return t_grad_enabled; }

Tensor detail::make_result(const char* op, Shape dims, std::vector<double> data,
                           std::vector<Tensor> parents, BackwardFn backward) {
  auto node = new_node(op, std::move(dims), std::move(data));
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace cfine
