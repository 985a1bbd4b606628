#pragma once

// Dense arrays and a tape for reverse-mode differentiation.
//
// A Tape owns every intermediate value of one forward pass. Nodes are appended
// in evaluation order, so replaying them backwards is a valid topological
// order. Parameters live outside any tape (in a ParameterStore) and are bound
// to a tape with `Tape::param`; `backward` accumulates into Parameter::grad.
//
// Only float and double are instantiated.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <new>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ponita::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Array storage is 64-byte aligned so that SIMD kernels never peel an
/// address-dependent prefix: results are then bit-reproducible run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <class T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

template <class T>
struct Array {
  Shape shape;
  Buffer<T> data;

  Array() = default;
  explicit Array(Shape s, T fill = T(0));
  Array(Shape s, std::vector<T> values);

  static Array scalar(T v) { return Array(Shape{}, std::vector<T>{v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T item() const;

  template <class U>
  Array<U> cast() const {
    Array<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

template <class T>
struct Parameter {
  std::string name;
  Array<T> value;
  Array<T> grad;

  void zero_grad();
};

template <class T>
class ParameterStore {
 public:
  using value_type = T;

  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter<T>& add(std::string name, Array<T> init);
  Parameter<T>* find(std::string_view name);
  const Parameter<T>* find(std::string_view name) const;
  Parameter<T>& at(std::string_view name);

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <class T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <class T>
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape<T>& tape() const;
  std::size_t id() const { return id_; }
  const Array<T>& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <class T>
class Tape {
 public:
  /// Receives the gradient of the node's output and accumulates into the
  /// gradients of its parents through `grad_sink`.
  using Backward = std::function<void(Tape&, const Array<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Array<T> value);
  /// A differentiable input whose gradient is read back with `grad`.
  Var<T> leaf(Array<T> value);
  /// Binds a parameter; repeated calls for the same parameter reuse the node.
  Var<T> param(Parameter<T>& p);

  Var<T> record(Array<T> value, std::initializer_list<Var<T>> parents, Backward fn);
  Var<T> record(Array<T> value, const std::vector<Var<T>>& parents, Backward fn);

  /// Seeds d(loss)/d(loss) = 1 and replays the tape. One call per tape.
  void backward(const Var<T>& loss);
  bool consumed() const { return consumed_; }

  /// Gradient of a leaf or parameter node after `backward` (zeros when the
  /// loss does not depend on it).
  Array<T> grad(const Var<T>& v) const;

  const Array<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  /// Gradient accumulator of node `id`, allocated on first use; nullptr when
  /// the node does not need a gradient.
  Array<T>* grad_sink(std::size_t id);
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Kind { Constant, Leaf, Param, Op };
  struct Node {
    Array<T> value;
    Array<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    Kind kind = Kind::Constant;
    Parameter<T>* param = nullptr;
    Backward backward;
  };

  Var<T> push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> bound_;
  bool consumed_ = false;
};

template <class T>
Tape<T>& Var<T>::tape() const {
  if (tape_ == nullptr) throw TapeError("use of an empty Var");
  return *tape_;
}

template <class T>
const Array<T>& Var<T>::value() const {
  return tape().value(id_);
}

template <class T>
bool Var<T>::requires_grad() const {
  return tape().requires_grad(id_);
}

template <class T>
std::size_t Var<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(s));
  return s[axis];
}

}  // namespace ponita::ad
