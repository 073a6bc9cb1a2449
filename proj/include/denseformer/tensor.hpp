#pragma once

// Dense tensors and the reverse-mode tape.
//
// A Tensor is a cheap handle to a shared Node. Nodes own (or alias) a flat
// row-major value buffer and, once backward has reached them, a gradient
// buffer of the same length. Ops append a Record to the Tape when at least one
// input requires a gradient; records are created in execution order, so the
// tape is topologically sorted by construction.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace denseformer::ag {

using Shape = std::vector<std::size_t>;

// Tensor buffers start on a 64-byte boundary. Vectorized kernels treat the
// unaligned head of a buffer with scalar code, so a fixed alignment keeps
// results independent of where the allocator placed the data.
inline constexpr std::size_t kBufferAlign = 64;

template <typename T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kBufferAlign}));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{kBufferAlign}); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

inline constexpr std::size_t kMaxRank = 3;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename T>
struct Node {
  Shape shape;
  // May be shared with a SliceAccumulator buffer; this node covers [0, size).
  std::shared_ptr<Buffer<T>> storage;
  std::size_t size = 0;
  Buffer<T> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;

  T* values() { return storage->data(); }
  const T* values() const { return storage->data(); }

  Buffer<T>& grad_buffer() {
    if (grad.size() != size) grad.assign(size, T(0));
    return grad;
  }
};

std::uint64_t next_node_id();

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  // View over the first numel_of(shape) values of an existing buffer.
  static Tensor alias(Shape shape, std::shared_ptr<Buffer<T>> storage);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t extent(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->size; }
  std::uint64_t id() const { return node_->id; }

  std::span<T> data() { return {node_->values(), node_->size}; }
  std::span<const T> data() const { return {node_->values(), node_->size}; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return node_->grad.size() == node_->size && node_->size > 0; }
  std::span<const T> grad() const;
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void clear_grad() { node_->grad.clear(); }

  // Deep copy of the values; keeps requires_grad, drops the gradient.
  Tensor clone() const;

  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }
  Node<T>& node() const { return *node_; }

 private:
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
class Tape {
 public:
  struct Record {
    std::vector<std::uint64_t> inputs;
    std::uint64_t output = 0;
    std::function<void()> backward;
  };

  explicit Tape(bool enabled = true) : enabled_(enabled) {}

  static Tape inference() { return Tape(false); }

  bool enabled() const { return enabled_; }

  // True when an op over `inputs` has to be recorded.
  bool wants(std::initializer_list<const Tensor<T>*> inputs) const;
  bool wants(std::span<const Tensor<T>> inputs) const;

  // Marks `output` as requiring grad and appends its backward rule.
  void record(Tensor<T>& output, std::vector<std::uint64_t> inputs, std::function<void()> backward);

  // Seeds d(loss) = 1 and runs every record in reverse order. One call per
  // recorded program; reset() re-arms the tape.
  void backward(const Tensor<T>& loss);
  void reset();

  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

 private:
  bool enabled_ = true;
  bool consumed_ = false;
  std::vector<Record> records_;
  std::vector<std::shared_ptr<Node<T>>> outputs_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace denseformer::ag
