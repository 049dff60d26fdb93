#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lai/errors.hpp"

namespace lai {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ContractError("tensor dims must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
};

// Dense row-major tensor with shared-node semantics: copies alias the same
// storage, which is what the tape and the optimizer both rely on.
template <typename T>
class Tensor {
 public:
  using Node = TensorNode<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value.assign(shape_numel(t.node_->shape), T(0));
    return t;
  }

  static Tensor full(Shape shape, T v) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.node_->value) x = v;
    return t;
  }

  static Tensor from_data(Shape shape, std::vector<T> data) {
    if (shape_numel(shape) != data.size())
      throw ContractError("from_data: shape " + shape_str(shape) +
                          " does not match data length " +
                          std::to_string(data.size()));
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    return t;
  }

  static Tensor scalar(T v) { return from_data({1}, {v}); }

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const {
    if (node_->grad.empty())
      throw ContractError("grad accessed before backward populated it");
    return node_->grad;
  }
  // allocate-on-demand mutable gradient buffer
  std::span<T> grad_buffer() {
    if (node_->grad.empty()) node_->grad.assign(numel(), T(0));
    return node_->grad;
  }
  void zero_grad() {
    for (auto& g : node_->grad) g = T(0);
  }

  T item() const {
    if (numel() != 1) throw ContractError("item() on non-scalar tensor");
    return node_->value[0];
  }

  // flat N,C,H,W indexing helpers (no bounds checks beyond debug asserts)
  T& at(int n, int c, int h, int w) {
    const auto& s = node_->shape;
    return node_->value[((static_cast<std::size_t>(n) * s[1] + c) * s[2] + h) *
                            s[3] +
                        w];
  }
  T at(int n, int c, int h, int w) const {
    return const_cast<Tensor*>(this)->at(n, c, h, w);
  }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Per-backward-call adjoint buffers, keyed by node identity.
template <typename T>
class Adjoints {
 public:
  std::vector<T>& at(const std::shared_ptr<TensorNode<T>>& n) {
    auto& buf = bufs_[n.get()];
    if (buf.empty()) buf.assign(n->value.size(), T(0));
    return buf;
  }
  std::vector<T>* find(const std::shared_ptr<TensorNode<T>>& n) {
    auto it = bufs_.find(n.get());
    return it == bufs_.end() ? nullptr : &it->second;
  }
  auto begin() { return bufs_.begin(); }
  auto end() { return bufs_.end(); }

 private:
  std::unordered_map<TensorNode<T>*, std::vector<T>> bufs_;
};

// Reverse-mode tape. Ops append entries in execution order, so the list is
// topologically sorted by construction; backward() walks it once in reverse.
template <typename T>
class Tape {
 public:
  using NodePtr = std::shared_ptr<TensorNode<T>>;

  struct Entry {
    NodePtr output;
    std::vector<NodePtr> inputs;
    std::function<void(const std::vector<T>& out_adj, Adjoints<T>& adj)>
        backprop;
  };

  static Tape& current() {
    thread_local Tape tape;
    return tape;
  }

  bool recording() const { return recording_; }
  void set_recording(bool v) { recording_ = v; }

  void record(Entry e) { entries_.push_back(std::move(e)); }

  std::size_t size() const { return entries_.size(); }

  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss) = 1, sweeps entries in reverse, then flushes the
  // adjoints additively into every requires_grad node reached.
  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1)
      throw ContractError("backward: loss must be a scalar");
    Adjoints<T> adj;
    adj.at(loss.node())[0] = T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      const std::vector<T>* out_adj = adj.find(it->output);
      if (!out_adj) continue;  // not on the path from loss
      it->backprop(*out_adj, adj);
    }
    for (auto& [node, buf] : adj) {
      if (!node->requires_grad) continue;
      if (node->grad.empty()) node->grad.assign(node->value.size(), T(0));
      for (std::size_t i = 0; i < buf.size(); ++i) node->grad[i] += buf[i];
    }
  }

 private:
  std::vector<Entry> entries_;
  bool recording_ = true;
};

template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>::current().backward(loss);
}

// Disables recording for both precisions in scope (inference / oracle evals).
class NoGradGuard {
 public:
  NoGradGuard()
      : prev_f_(Tape<float>::current().recording()),
        prev_d_(Tape<double>::current().recording()) {
    Tape<float>::current().set_recording(false);
    Tape<double>::current().set_recording(false);
  }
  ~NoGradGuard() {
    Tape<float>::current().set_recording(prev_f_);
    Tape<double>::current().set_recording(prev_d_);
  }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_f_;
  bool prev_d_;
};

}  // namespace lai
