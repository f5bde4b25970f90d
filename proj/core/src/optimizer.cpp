#include "crossview/optimizer.hpp"

#include <cmath>

namespace crossview {

template <typename T>
Adam<T>::Adam(std::vector<Param<T>*> params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Param<T>* p : params) {
    if (!p->trainable) continue;
    params_.push_back(p);
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param<T>& p = *params_[i];
    Tensor<T>& m = m_[i];
    Tensor<T>& v = v_[i];
    for (std::int64_t j = 0; j < p.value.numel(); ++j) {
      const double g = p.grad[j];
      const double mj = beta1_ * m[j] + (1.0 - beta1_) * g;
      const double vj = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      p.value[j] = static_cast<T>(p.value[j] - lr_ * (mj / bc1) / (std::sqrt(vj / bc2) + eps_));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (Param<T>* p : params_) p->grad.zero();
}

template <typename T>
std::vector<typename Adam<T>::Slot> Adam<T>::slots() {
  std::vector<Slot> out;
  out.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back(Slot{&params_[i]->name, &m_[i], &v_[i]});
  }
  return out;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace crossview
