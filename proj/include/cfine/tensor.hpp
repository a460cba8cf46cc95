#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cfine {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& dims);
std::string shape_string(const Shape& dims);

namespace detail {

// One recorded value in the autodiff graph. Nodes are ordered by `seq`, which
// is assigned from a global monotonically increasing counter at creation, so
// every parent has a smaller seq than its children.
struct Node {
  Shape dims;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major f64 tensor with optional reverse-mode gradient tracking.
///
/// A Tensor is a cheap handle; copies share the underlying buffer. Values are
/// checked for finiteness on construction and a NumericError is raised if any
/// NaN or Inf appears.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape dims, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape dims, bool requires_grad = false);
  static Tensor full(Shape dims, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& dims() const;
  std::size_t rank() const { return dims().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  bool has_grad() const;
  /// Gradient buffer; all zeros if nothing has flowed into this tensor yet.
  std::vector<double> grad() const;
  void zero_grad();

  /// Direct write access to a leaf's values (parameter updates, finite
  /// differences). Throws ContractError on non-leaf tensors.
  std::span<double> mutable_data();

  /// Reverse-mode sweep from a scalar. Visits every reachable node once, in
  /// reverse creation order, accumulating into the grads of requires_grad
  /// leaves.
  void backward() const;

  /// A new leaf holding a copy of the values, cut from any graph.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

namespace detail {

using BackwardFn = std::function<void(Node&)>;

// Creates an op result. The node is attached to the graph only when grad mode
// is on and at least one parent requires a gradient.
Tensor make_result(const char* op, Shape dims, std::vector<double> data,
                   std::vector<Tensor> parents, BackwardFn backward);

void check_finite(const char* op, std::span<const double> values);

}  // namespace detail

}  // namespace cfine
