#include "denseformer/accumulator.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace denseformer::ag {

template <typename T>
SliceAccumulator<T>::SliceAccumulator(std::size_t capacity, Shape slot_shape)
    : capacity_(capacity), slot_shape_(std::move(slot_shape)), slot_size_(numel_of(slot_shape_)) {
  if (capacity_ == 0 || slot_shape_.empty() || slot_size_ == 0) {
    throw ShapeError("SliceAccumulator: capacity and slot shape must be non-empty");
  }
  buffer_ = std::make_shared<Buffer<T>>(capacity_ * slot_size_, T(0));
}

template <typename T>
Tensor<T> SliceAccumulator<T>::push_at(Tape<T>& tape, std::size_t index, const Tensor<T>& x) {
  if (fill_ >= capacity_) {
    throw std::out_of_range("SliceAccumulator: capacity " + std::to_string(capacity_) + " exceeded");
  }
  if (index != fill_) {
    throw std::logic_error("SliceAccumulator: append-only, expected slot " + std::to_string(fill_) + " got " +
                           std::to_string(index));
  }
  if (x.shape() != slot_shape_) {
    throw ShapeError("SliceAccumulator: pushed " + shape_str(x.shape()) + " into slots of " + shape_str(slot_shape_));
  }
  std::copy(x.data().begin(), x.data().end(), buffer_->begin() + static_cast<std::ptrdiff_t>(index * slot_size_));
  fill_ = index + 1;

  const std::size_t width = slot_shape_.back();
  auto view = Tensor<T>::alias({fill_, slot_size_ / width, width}, buffer_);
  const bool prev_tracked = view_.defined() && view_.requires_grad();
  if (tape.enabled() && (x.requires_grad() || prev_tracked)) {
    std::vector<std::uint64_t> inputs{x.id()};
    std::shared_ptr<Node<T>> prev;
    if (view_.defined()) {
      inputs.insert(inputs.begin(), view_.id());
      prev = view_.node_ptr();
    }
    auto xn = x.node_ptr();
    auto vn = view.node_ptr();
    const std::size_t n = slot_size_;
    tape.record(view, std::move(inputs), [xn, vn, prev, index, n] {
      const T* g = vn->grad.data();
      if (index > 0 && prev && prev->requires_grad) {
        T* d = prev->grad_buffer().data();
        for (std::size_t e = 0; e < index * n; ++e) d[e] += g[e];
      }
      if (xn->requires_grad) {
        T* d = xn->grad_buffer().data();
        const T* gs = g + index * n;
        for (std::size_t e = 0; e < n; ++e) d[e] += gs[e];
      }
    });
  }
  view_ = view;
  return view;
}

template <typename T>
std::span<const T> SliceAccumulator<T>::slot(std::size_t index) const {
  if (index >= fill_) {
    throw std::out_of_range("SliceAccumulator: slot " + std::to_string(index) + " not written (fill " +
                            std::to_string(fill_) + ")");
  }
  return {buffer_->data() + index * slot_size_, slot_size_};
}

template class SliceAccumulator<float>;
template class SliceAccumulator<double>;

}  // namespace denseformer::ag
