#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ectg {

/// Base class for every error the library raises on bad input or state.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ectg

namespace ectg::nn {

class ShapeError : public Error {
 public:
  using Error::Error;
};

// 64-byte aligned storage. Vectorized reductions peel differently depending
// on the start address, so without a fixed alignment the same computation
// can round differently from run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the autodiff tape. Values are row-major, rank 2.
struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Buffer value;
  Buffer grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t seq = 0;  // creation order, used to order the backward sweep
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

/// Dense rank-2 tensor with an optional gradient slot.
///
/// Vectors are 1 x n rows and scalars are 1 x 1. Copies share the
/// underlying node, so a Tensor behaves like a handle.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  std::vector<std::size_t> shape() const { return {node_->rows, node_->cols}; }
  std::string shape_str() const;

  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
  double item() const;

  /// Gradient buffer; empty span when backward never reached this tensor.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  /// Runs reverse-mode differentiation from this scalar.
  void backward() const;

  /// Copy of the values without any tape history.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// True while graph recording is enabled on this thread.
bool grad_enabled();

/// Disables tape recording for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {
// Creates the result node of an op; parents are recorded only when one of
// them needs a gradient and recording is on.
NodePtr make_result(std::size_t rows, std::size_t cols, std::vector<NodePtr> parents,
                    std::function<void(Node&)> backward);
}  // namespace detail

}  // namespace ectg::nn
