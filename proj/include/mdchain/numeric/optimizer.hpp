#pragma once

#include <cstdint>
#include <vector>

#include "mdchain/numeric/graph.hpp"

namespace mdchain::num {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment optimizer with bias correction over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<ad::Parameter*> params, AdamConfig config = {});

  // Applies one update from the gradients stored in each Parameter::grad.
  // Non-finite gradients raise NumericError and leave all state untouched.
  void step();
  void zero_grad();

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const Tensor& first_moment(std::size_t i) const { return first_[i]; }
  const Tensor& second_moment(std::size_t i) const { return second_[i]; }

 private:
  std::vector<ad::Parameter*> params_;
  AdamConfig config_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  std::uint64_t steps_ = 0;
};

}  // namespace mdchain::num
