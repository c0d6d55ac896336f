#include "mgt/optimizer.hpp"

#include <cmath>

#include "mgt/errors.hpp"

namespace mgt {

double global_grad_norm(std::span<ag::Parameter* const> params) {
  double sq = 0.0;
  for (const ag::Parameter* p : params) {
    sq += p->grad.squaredNorm();
  }
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<ag::Parameter* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) {
    throw NumericError("gradient norm is not finite");
  }
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (ag::Parameter* p : params) {
      p->grad *= factor;
    }
  }
  return norm;
}

Adam::Adam(std::span<ag::Parameter* const> params, Options options) : opt_(options) {
  for (const ag::Parameter* p : params) {
    m_.push_back(ag::Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(ag::Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(std::span<ag::Parameter* const> params) {
  if (params.size() != m_.size()) {
    throw ContractError("Adam::step called with a different parameter set");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ag::Parameter& p = *params[i];
    m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * p.grad;
    v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -=
        opt_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + opt_.eps);
    if (!p.value.allFinite()) {
      throw NumericError("parameter " + p.name + " became non-finite after an Adam step");
    }
  }
}

}  // namespace mgt
