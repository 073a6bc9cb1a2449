#pragma once

#include <memory>
#include <span>
#include <vector>

#include "denseformer/tensor.hpp"

namespace denseformer::ag {

// Pre-allocated stack of same-shape slices, filled strictly in order.
//
// Each push copies x into the next slot of one shared buffer and returns a
// gradient-tracked view of shape [fill, rows, width] over the filled prefix.
// The views alias the buffer, so earlier views stay valid after later pushes.
// In backward, the gradient of view k splits into its last slot (routed to
// the pushed x) and the prefix (routed to view k-1); the first view only
// feeds x.
template <typename T>
class SliceAccumulator {
 public:
  SliceAccumulator(std::size_t capacity, Shape slot_shape);

  std::size_t capacity() const { return capacity_; }
  std::size_t fill_count() const { return fill_; }
  const Shape& slot_shape() const { return slot_shape_; }
  std::size_t slot_size() const { return slot_size_; }

  // Writes x at `index`, which must equal fill_count().
  Tensor<T> push_at(Tape<T>& tape, std::size_t index, const Tensor<T>& x);
  Tensor<T> push(Tape<T>& tape, const Tensor<T>& x) { return push_at(tape, fill_, x); }

  std::span<const T> slot(std::size_t index) const;

  // View returned by the latest push (undefined before the first push).
  const Tensor<T>& view() const { return view_; }

 private:
  std::size_t capacity_;
  Shape slot_shape_;
  std::size_t slot_size_;
  std::size_t fill_ = 0;
  std::shared_ptr<Buffer<T>> buffer_;
  Tensor<T> view_;
};

extern template class SliceAccumulator<float>;
extern template class SliceAccumulator<double>;

}  // namespace denseformer::ag
