#include "mdchain/numeric/optimizer.hpp"

#include <cmath>

#include "mdchain/error.hpp"

namespace mdchain::num {

Adam::Adam(std::vector<ad::Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const ad::Parameter* p : params_) {
    first_.emplace_back(p->value.shape());
    second_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  for (const ad::Parameter* p : params_) {
    if (!p->grad.same_shape(p->value)) throw DimensionError("Adam: gradient shape differs for " + p->name);
    if (!p->grad.all_finite()) throw NumericError("Adam: non-finite gradient for " + p->name);
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Parameter& p = *params_[i];
    Tensor& m = first_[i];
    Tensor& v = second_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p.value[j] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (ad::Parameter* p : params_) p->zero_grad();
}

}  // namespace mdchain::num
