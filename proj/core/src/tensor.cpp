#include "ponita/tensor.hpp"

#include <sstream>

namespace ponita::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

template <class T>
Array<T>::Array(Shape s, T fill) : shape(std::move(s)), data(numel(shape), fill) {}

template <class T>
Array<T>::Array(Shape s, std::vector<T> values) : shape(std::move(s)), data(values.begin(), values.end()) {
  if (data.size() != numel(shape)) {
    throw ShapeError("array of shape " + shape_string(shape) + " needs " + std::to_string(numel(shape)) +
                     " values, got " + std::to_string(data.size()));
  }
}

template <class T>
T Array<T>::item() const {
  if (data.size() != 1) throw ShapeError("item() on array of shape " + shape_string(shape));
  return data[0];
}

template <class T>
void Parameter<T>::zero_grad() {
  grad = Array<T>(value.shape);
}

template <class T>
Parameter<T>& ParameterStore<T>::add(std::string name, Array<T> init) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_.emplace(name, params_.size());
  Array<T> grad(init.shape);
  params_.push_back(Parameter<T>{std::move(name), std::move(init), std::move(grad)});
  return params_.back();
}

template <class T>
Parameter<T>* ParameterStore<T>::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <class T>
const Parameter<T>* ParameterStore<T>::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <class T>
Parameter<T>& ParameterStore<T>::at(std::string_view name) {
  auto* p = find(name);
  if (p == nullptr) throw std::out_of_range("no parameter named " + std::string(name));
  return *p;
}

template <class T>
std::size_t ParameterStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <class T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <class T>
Var<T> Tape<T>::push(Node node) {
  if (consumed_) throw TapeError("cannot record on a tape after backward()");
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Tape<T>::constant(Array<T> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <class T>
Var<T> Tape<T>::leaf(Array<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.kind = Kind::Leaf;
  return push(std::move(n));
}

template <class T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var<T>(this, it->second);
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.kind = Kind::Param;
  n.param = &p;
  Var<T> v = push(std::move(n));
  bound_.emplace(&p, v.id());
  return v;
}

template <class T>
Var<T> Tape<T>::record(Array<T> value, std::initializer_list<Var<T>> parents, Backward fn) {
  return record(std::move(value), std::vector<Var<T>>(parents), std::move(fn));
}

template <class T>
Var<T> Tape<T>::record(Array<T> value, const std::vector<Var<T>>& parents, Backward fn) {
  bool needs = false;
  for (const auto& p : parents) {
    if (p.tape_ != this) throw TapeError("operands recorded on different tapes");
    needs = needs || nodes_[p.id_].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.kind = Kind::Op;
  n.requires_grad = needs;
  if (needs) n.backward = std::move(fn);
  return push(std::move(n));
}

template <class T>
Array<T>* Tape<T>::grad_sink(std::size_t id) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Array<T>(n.value.shape);
    n.has_grad = true;
  }
  return &n.grad;
}

template <class T>
void Tape<T>::backward(const Var<T>& loss) {
  if (consumed_) throw TapeError("backward() called twice on the same tape; re-run the forward pass");
  if (loss.tape_ != this) throw TapeError("loss belongs to a different tape");
  if (nodes_[loss.id_].value.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(nodes_[loss.id_].value.shape));
  }
  consumed_ = true;
  if (!nodes_[loss.id_].requires_grad) return;
  grad_sink(loss.id_)->data[0] = T(1);

  for (std::size_t k = loss.id_ + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.has_grad) continue;
    if (n.kind == Kind::Op) {
      if (n.backward) n.backward(*this, n.grad);
      // intermediate adjoints are dead once propagated
      n.grad = Array<T>();
      n.has_grad = false;
      n.backward = nullptr;
    } else if (n.kind == Kind::Param) {
      auto& dst = n.param->grad;
      if (dst.shape != n.value.shape) dst = Array<T>(n.value.shape);
      for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += n.grad.data[i];
    }
  }
}

template <class T>
Array<T> Tape<T>::grad(const Var<T>& v) const {
  if (v.tape_ != this) throw TapeError("variable belongs to a different tape");
  if (!consumed_) throw TapeError("grad() requested before backward()");
  const Node& n = nodes_[v.id_];
  if (n.kind == Kind::Op) throw TapeError("gradients are kept for leaves and parameters only");
  if (!n.has_grad) return Array<T>(n.value.shape);
  return n.grad;
}

template struct Array<float>;
template struct Array<double>;
template struct Parameter<float>;
template struct Parameter<double>;
template class ParameterStore<float>;
template class ParameterStore<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace ponita::ad
