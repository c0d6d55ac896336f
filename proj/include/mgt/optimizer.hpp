#pragma once

#include <span>
#include <vector>

#include "mgt/autograd.hpp"

namespace mgt {

/// L2 norm over the gradients of all parameters taken together.
double global_grad_norm(std::span<ag::Parameter* const> params);

/// Scales every gradient by max_norm / norm when the global norm exceeds
/// `max_norm`. Returns the norm before clipping.
double clip_grad_norm(std::span<ag::Parameter* const> params, double max_norm);

class Adam {
 public:
  struct Options {
    double lr = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::span<ag::Parameter* const> params, Options options);

  /// One bias-corrected update from the current gradients. Parameters must be
  /// the same set, in the same order, as at construction.
  void step(std::span<ag::Parameter* const> params);
  long steps() const { return t_; }

 private:
  Options opt_;
  long t_ = 0;
  std::vector<ag::Matrix> m_;
  std::vector<ag::Matrix> v_;
};

}  // namespace mgt
