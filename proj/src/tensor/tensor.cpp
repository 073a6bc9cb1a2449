#include "denseformer/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

namespace denseformer::ag {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

namespace {

void check_rank(const Shape& shape) {
  if (shape.empty() || shape.size() > kMaxRank) {
    throw ShapeError("tensor rank must be 1.." + std::to_string(kMaxRank) + ", got " + shape_str(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  check_rank(shape);
  auto node = std::make_shared<Node<T>>();
  node->size = numel_of(shape);
  node->shape = std::move(shape);
  node->storage = std::make_shared<Buffer<T>>(node->size, value);
  node->requires_grad = requires_grad;
  node->id = next_node_id();
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  check_rank(shape);
  if (values.size() != numel_of(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->size = values.size();
  node->storage = std::make_shared<Buffer<T>>(values.begin(), values.end());
  node->requires_grad = requires_grad;
  node->id = next_node_id();
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::alias(Shape shape, std::shared_ptr<Buffer<T>> storage) {
  check_rank(shape);
  const std::size_t n = numel_of(shape);
  if (!storage || storage->size() < n) throw ShapeError("alias exceeds backing storage");
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->size = n;
  node->storage = std::move(storage);
  node->id = next_node_id();
  return Tensor(std::move(node));
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->values()[0];
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) throw TapeError("tensor has no gradient");
  return node_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  std::vector<T> copy(data().begin(), data().end());
  return from(shape(), std::move(copy), requires_grad());
}

template <typename T>
bool Tape<T>::wants(std::initializer_list<const Tensor<T>*> inputs) const {
  if (!enabled_) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>* t) { return t->requires_grad(); });
}

template <typename T>
bool Tape<T>::wants(std::span<const Tensor<T>> inputs) const {
  if (!enabled_) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
}

template <typename T>
void Tape<T>::record(Tensor<T>& output, std::vector<std::uint64_t> inputs, std::function<void()> backward) {
  if (consumed_) throw TapeError("recording onto a tape that already ran backward; call reset()");
  output.set_requires_grad(true);
  records_.push_back(Record{std::move(inputs), output.id(), std::move(backward)});
  outputs_.push_back(output.node_ptr());
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (consumed_) throw TapeError("backward called twice without reset");
  if (loss.size() != 1) throw ShapeError("backward needs a scalar loss, got " + shape_str(loss.shape()));
  if (records_.empty() || outputs_.back() != loss.node_ptr()) {
    const bool found = std::any_of(outputs_.begin(), outputs_.end(),
                                   [&](const auto& n) { return n == loss.node_ptr(); });
    if (!found) throw TapeError("loss tensor was not produced on this tape");
  }
  consumed_ = true;
  loss.node().grad_buffer()[0] = T(1);
  for (std::size_t r = records_.size(); r-- > 0;) {
    if (outputs_[r]->grad.size() == outputs_[r]->size) records_[r].backward();
  }
}

template <typename T>
void Tape<T>::reset() {
  records_.clear();
  outputs_.clear();
  consumed_ = false;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace denseformer::ag
