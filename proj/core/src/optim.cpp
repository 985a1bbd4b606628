#include "ponita/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ponita::optim {

template <class T>
void Adam<T>::step(ad::ParameterStore<T>& params) {
  step(params, options_.lr);
}

template <class T>
void Adam<T>::step(ad::ParameterStore<T>& params, double lr) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("Adam: parameter set changed between steps");
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& p : params) {
    auto& m = m_[k];
    auto& v = v_[k];
    ++k;
    if (p.grad.size() != p.value.size()) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = static_cast<double>(p.grad.data[i]);
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      p.value.data[i] -= static_cast<T>(lr * mh / (std::sqrt(vh) + options_.eps));
    }
  }
}

double cosine_lr(std::size_t epoch, std::size_t total, std::size_t warmup, double base_lr) {
  if (total == 0 || epoch >= total) throw std::invalid_argument("cosine_lr: need 0 <= epoch < total");
  if (epoch < warmup) return base_lr * static_cast<double>(epoch + 1) / static_cast<double>(warmup);
  const std::size_t span = total - warmup;
  if (span <= 1) return base_lr;
  const double t = static_cast<double>(epoch - warmup) / static_cast<double>(span - 1);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

template class Adam<float>;
template class Adam<double>;

}  // namespace ponita::optim
