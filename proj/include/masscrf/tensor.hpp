#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "masscrf/error.hpp"

namespace masscrf {

using Array = Eigen::ArrayXd;
using Index = Eigen::Index;
using Shape = std::vector<Index>;

// Row-major dense matrix view used by all gemm-backed operators.
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

Index shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  Array values;  // flat, row-major over shape
  bool requires_grad = false;
  Array grad;  // empty until first accumulation
};

class Tape;

// Value-semantic handle to an immutable dense array, optionally recorded on
// the active tape. Storage layout is batch x channel x height x width for
// order-4 tensors; lower orders drop leading axes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_array(Shape shape, Array values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  Index size() const { return impl_->values.size(); }
  Index dim(int i) const { return impl_->shape.at(static_cast<std::size_t>(i)); }
  int order() const { return static_cast<int>(impl_->shape.size()); }

  const Array& value() const { return impl_->values; }
  // For in-place initialization before the tensor enters any computation.
  Array& mutable_value() { return impl_->values; }
  double scalar_value() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  bool has_grad() const { return impl_ && impl_->grad.size() == impl_->values.size(); }
  const Array& grad() const;
  void zero_grad();

  // Same storage, excluded from gradient tracking.
  Tensor detached() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

  // Tape linkage -- used by operator implementations.
  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  void bind(Tape* tape, int node) { tape_ = tape; node_ = node; }
  bool tracked_on(const Tape* tape) const;

 private:
  std::shared_ptr<TensorImpl> impl_;
  Tape* tape_ = nullptr;
  int node_ = -1;
  bool track_ = true;  // false after detach()
};

// Gradient callback: gout is the upstream gradient for the node output;
// pgrads[i] aims at the accumulation buffer of parent i (nullptr when that
// parent does not participate in differentiation).
using BackwardFn = std::function<void(const Array& gout, const std::vector<Array*>& pgrads)>;

// Define-by-run record of one forward pass. Construction makes the tape
// active for the current thread; destruction deactivates it. backward() may
// run once; a second call without re-running the forward throws.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  // Accumulates gradients of `loss` into the .grad buffer of every
  // participating leaf tensor.
  void backward(const Tensor& loss);

  // Gradients of `loss` w.r.t. the given leaves only; leaf .grad buffers are
  // left untouched. A leaf that never entered the graph yields zeros.
  std::vector<Array> gradients(const Tensor& loss, std::span<const Tensor> wrt);

  std::size_t node_count() const { return nodes_.size(); }

  // --- recording API (operator implementations only) ---
  int record(std::vector<int> parents, Index out_size, BackwardFn fn);
  // Get-or-create the leaf node for a tracked input tensor.
  int leaf(const Tensor& t);
  // Node id of `t` on this tape, creating a leaf node if needed;
  // -1 when `t` does not participate.
  int input_node(const Tensor& t);

 private:
  struct Node {
    std::vector<int> parents;
    BackwardFn back;  // null for leaves
    std::shared_ptr<TensorImpl> leaf_impl;
    Index size = 0;
  };

  void run_backward(const Tensor& loss);

  std::vector<Node> nodes_;
  std::unordered_map<const TensorImpl*, int> leaf_ids_;
  std::vector<Array> grads_;
  bool consumed_ = false;
};

void check_finite(const Array& values, const char* op);

}  // namespace masscrf
