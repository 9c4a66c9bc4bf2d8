#include "masscrf/tensor.hpp"

#include <cmath>
#include <sstream>

namespace masscrf {

namespace {

thread_local std::vector<Tape*> g_tape_stack;

}  // namespace

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from_array(std::move(shape), Array(), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Index n = shape_size(shape);
  return from_array(std::move(shape), Array::Constant(n, value), requires_grad);
}

Tensor Tensor::from_array(Shape shape, Array values, bool requires_grad) {
  Index n = shape_size(shape);
  if (values.size() == 0) values = Array::Zero(n);
  if (values.size() != n)
    throw ShapeMismatchError("tensor data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
  Tensor t;
  t.impl_ = std::make_shared<TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->values = std::move(values);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_array({1}, Array::Constant(1, value), requires_grad);
}

double Tensor::scalar_value() const {
  if (size() != 1) throw NotScalarError("expected scalar tensor, got shape " + shape_str(shape()));
  return impl_->values[0];
}

const Array& Tensor::grad() const {
  if (!has_grad())
    throw BadParamError("gradient requested before any backward pass reached this tensor");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.resize(0);
}

Tensor Tensor::detached() const {
  Tensor t;
  t.impl_ = impl_;
  t.track_ = false;
  return t;
}

bool Tensor::tracked_on(const Tape* tape) const {
  if (!impl_) return false;
  if (node_ >= 0 && tape_ == tape) return true;
  return track_ && impl_->requires_grad;
}

Tape::Tape() { g_tape_stack.push_back(this); }

Tape::~Tape() {
  // Tapes nest lexically, so this tape is the innermost active one.
  if (!g_tape_stack.empty() && g_tape_stack.back() == this) g_tape_stack.pop_back();
}

Tape* Tape::active() { return g_tape_stack.empty() ? nullptr : g_tape_stack.back(); }

int Tape::record(std::vector<int> parents, Index out_size, BackwardFn fn) {
  Node node;
  node.parents = std::move(parents);
  node.back = std::move(fn);
  node.size = out_size;
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(const Tensor& t) {
  auto it = leaf_ids_.find(t.impl());
  if (it != leaf_ids_.end()) return it->second;
  Node node;
  node.leaf_impl = t.impl_ptr();
  node.size = t.size();
  nodes_.push_back(std::move(node));
  int id = static_cast<int>(nodes_.size()) - 1;
  leaf_ids_.emplace(t.impl(), id);
  return id;
}

int Tape::input_node(const Tensor& t) {
  if (!t.tracked_on(this)) return -1;
  if (t.node() >= 0 && t.tape() == this) return t.node();
  return leaf(t);
}

void Tape::run_backward(const Tensor& loss) {
  if (consumed_)
    throw TapeConsumedError("backward already ran on this tape; rebuild the forward pass");
  if (loss.size() != 1)
    throw NotScalarError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  if (loss.tape() != this || loss.node() < 0)
    throw BadParamError("loss tensor was not produced under this tape");
  consumed_ = true;

  grads_.assign(nodes_.size(), Array());
  grads_[static_cast<std::size_t>(loss.node())] = Array::Constant(1, 1.0);

  std::vector<Array*> pgrads;
  for (int u = loss.node(); u >= 0; --u) {
    Node& node = nodes_[static_cast<std::size_t>(u)];
    Array& g = grads_[static_cast<std::size_t>(u)];
    if (g.size() == 0) continue;  // not on the path from loss
    if (!node.back) continue;     // leaf: gradient stays for collection
    pgrads.clear();
    for (int p : node.parents) {
      if (p < 0) {
        pgrads.push_back(nullptr);
        continue;
      }
      Array& pg = grads_[static_cast<std::size_t>(p)];
      if (pg.size() == 0) pg = Array::Zero(nodes_[static_cast<std::size_t>(p)].size);
      pgrads.push_back(&pg);
    }
    node.back(g, pgrads);
    g.resize(0);  // free scratch before moving down the tape
  }
}

void Tape::backward(const Tensor& loss) {
  run_backward(loss);
  for (std::size_t u = 0; u < nodes_.size(); ++u) {
    Node& node = nodes_[u];
    if (!node.leaf_impl || grads_[u].size() == 0) continue;
    TensorImpl* impl = node.leaf_impl.get();
    if (impl->grad.size() != impl->values.size()) impl->grad = Array::Zero(impl->values.size());
    impl->grad += grads_[u];
  }
  grads_.clear();
  grads_.shrink_to_fit();
}

std::vector<Array> Tape::gradients(const Tensor& loss, std::span<const Tensor> wrt) {
  run_backward(loss);
  std::vector<Array> out;
  out.reserve(wrt.size());
  for (const Tensor& t : wrt) {
    auto it = leaf_ids_.find(t.impl());
    if (it == leaf_ids_.end() || grads_[static_cast<std::size_t>(it->second)].size() == 0) {
      out.push_back(Array::Zero(t.size()));
    } else {
      out.push_back(std::move(grads_[static_cast<std::size_t>(it->second)]));
    }
  }
  grads_.clear();
  grads_.shrink_to_fit();
  return out;
}

void check_finite(const Array& values, const char* op) {
  if (!values.allFinite())
    throw NonFiniteError(std::string(op) + " produced a non-finite value");
}

}  // namespace masscrf
