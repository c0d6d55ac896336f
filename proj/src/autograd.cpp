#include "mgt/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mgt/errors.hpp"

namespace mgt::ag {

namespace {

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

Tape& tape_of(const Tensor& t) {
  if (!t.valid()) {
    throw ContractError("operation on an unbound tensor");
  }
  return *t.tape();
}

Tape& common_tape(const Tensor& a, const Tensor& b) {
  if (a.tape() != b.tape()) {
    throw ContractError("operands recorded on different tapes");
  }
  return tape_of(a);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Eigen::Index Tensor::rows() const { return value().rows(); }
Eigen::Index Tensor::cols() const { return value().cols(); }
const Matrix& Tensor::value() const { return tape_of(*this).value_of(id_); }
Matrix Tensor::grad() const { return tape_of(*this).grad_of(id_); }
bool Tensor::requires_grad() const { return tape_of(*this).requires_grad_of(id_); }

double Tensor::item() const {
  const Matrix& v = value();
  if (v.size() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_str(*this));
  }
  return v(0, 0);
}

// ---- Tape -------------------------------------------------------------------

Tensor Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::constant(Matrix value) {
  if (!all_finite(value)) {
    throw NumericError("constant tensor contains non-finite values");
  }
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Tensor Tape::variable(Matrix value) {
  if (!all_finite(value)) {
    throw NumericError("variable tensor contains non-finite values");
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_;
  return push(std::move(n));
}

Tensor Tape::parameter(Parameter& param, bool trainable) {
  Node n;
  n.external = &param.value;
  n.requires_grad = record_ && trainable;
  n.param = n.requires_grad ? &param : nullptr;
  return push(std::move(n));
}

Tensor Tape::frozen(const Parameter& param) {
  Node n;
  n.external = &param.value;
  return push(std::move(n));
}

const Matrix& Tape::value_of(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external != nullptr ? *n.external : n.value;
}

Matrix& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Matrix& v = value_of(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

Matrix Tape::grad_of(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Matrix& v = value_of(id);
    return Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

Tensor Tape::emit(Matrix value, std::initializer_list<Tensor> inputs, const char* op_name,
                  BackwardFn backward) {
  return emit(std::move(value), std::span<const Tensor>(inputs.begin(), inputs.size()), op_name,
              std::move(backward));
}

Tensor Tape::emit(Matrix value, std::span<const Tensor> inputs, const char* op_name,
                  BackwardFn backward) {
  if (!all_finite(value)) {
    throw NumericError(std::string(op_name) + " produced a non-finite value");
  }
  bool needs_grad = false;
  for (const Tensor& t : inputs) {
    needs_grad = needs_grad || nodes_[t.id()].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_ && needs_grad;
  Tensor out = push(std::move(n));
  if (out.requires_grad()) {
    ops_.push_back(Op{out.id(), std::move(backward)});
  }
  return out;
}

void Tape::backward(const Tensor& root) {
  if (!record_) {
    throw ContractError("backward() on a tape created without recording");
  }
  if (root.tape() != this) {
    throw ContractError("backward() root belongs to another tape");
  }
  if (root.value().size() != 1) {
    throw ContractError("backward() requires a scalar root, got " + shape_str(root));
  }
  if (consumed_) {
    throw ContractError("backward() already ran on this tape; clear() and rebuild first");
  }
  consumed_ = true;
  if (!nodes_[root.id()].requires_grad) {
    return;
  }
  grad_slot(root.id())(0, 0) += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    const Node& out = nodes_[it->output];
    if (out.grad.size() == 0) {
      continue;
    }
    it->backward(*this, it->output, out.grad);
  }
  for (Node& n : nodes_) {
    if (n.param != nullptr && n.grad.size() != 0) {
      n.param->grad += n.grad;
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  ops_.clear();
  consumed_ = false;
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a) + " · " +
                         shape_str(b));
  }
  Matrix out = a.value() * b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.emit(std::move(out), {a, b}, "matmul",
                   [ia, ib](Tape& t, std::size_t, const Matrix& g) {
                     if (t.requires_grad_of(ia)) {
                       t.accumulate(ia, g * t.value_of(ib).transpose());
                     }
                     if (t.requires_grad_of(ib)) {
                       t.accumulate(ib, t.value_of(ia).transpose() * g);
                     }
                   });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ " + shape_str(a) + " · " +
                         shape_str(b) + "ᵀ");
  }
  Matrix out = a.value() * b.value().transpose();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.emit(std::move(out), {a, b}, "matmul_nt",
                   [ia, ib](Tape& t, std::size_t, const Matrix& g) {
                     if (t.requires_grad_of(ia)) {
                       t.accumulate(ia, g * t.value_of(ib));
                     }
                     if (t.requires_grad_of(ib)) {
                       t.accumulate(ib, g.transpose() * t.value_of(ia));
                     }
                   });
}

// ---- elementwise ------------------------------------------------------------

Tensor elementwise(Elementwise op, const Tensor& a, const Tensor* b) {
  const bool binary = op == Elementwise::add || op == Elementwise::mul;
  if (binary && b == nullptr) {
    throw ContractError("binary elementwise op without second operand");
  }
  switch (op) {
    case Elementwise::add:
      return add(a, *b);
    case Elementwise::mul:
      return mul(a, *b);
    case Elementwise::tanh:
      return tanh(a);
    case Elementwise::sigmoid:
      return sigmoid(a);
  }
  throw ContractError("unknown elementwise op");
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  require_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.emit(std::move(out), {a, b}, "add", [ia, ib](Tape& t, std::size_t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  require_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.emit(std::move(out), {a, b}, "sub", [ia, ib](Tape& t, std::size_t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.emit(std::move(out), {a, b}, "mul", [ia, ib](Tape& t, std::size_t, const Matrix& g) {
    if (t.requires_grad_of(ia)) {
      t.accumulate(ia, g.cwiseProduct(t.value_of(ib)));
    }
    if (t.requires_grad_of(ib)) {
      t.accumulate(ib, g.cwiseProduct(t.value_of(ia)));
    }
  });
}

Tensor tanh(const Tensor& a) {
  Tape& tape = tape_of(a);
  Matrix out = a.value().array().tanh().matrix();
  const std::size_t ia = a.id();
  return tape.emit(std::move(out), {a}, "tanh", [ia](Tape& t, std::size_t out_id, const Matrix& g) {
    const Matrix& y = t.value_of(out_id);
    t.accumulate(ia, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Tensor sigmoid(const Tensor& a) {
  Tape& tape = tape_of(a);
  Matrix out = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  const std::size_t ia = a.id();
  return tape.emit(std::move(out), {a}, "sigmoid",
                   [ia](Tape& t, std::size_t out_id, const Matrix& g) {
                     const Matrix& y = t.value_of(out_id);
                     t.accumulate(ia, (g.array() * y.array() * (1.0 - y.array())).matrix());
                   });
}

Tensor scale(const Tensor& a, double factor) {
  Tape& tape = tape_of(a);
  Matrix out = a.value() * factor;
  const std::size_t ia = a.id();
  return tape.emit(std::move(out), {a}, "scale",
                   [ia, factor](Tape& t, std::size_t, const Matrix& g) { t.accumulate(ia, g * factor); });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  Tape& tape = common_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: row " + shape_str(row) + " does not match " + shape_str(a));
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  const std::size_t ia = a.id(), ir = row.id();
  return tape.emit(std::move(out), {a, row}, "add_row",
                   [ia, ir](Tape& t, std::size_t, const Matrix& g) {
                     t.accumulate(ia, g);
                     if (t.requires_grad_of(ir)) {
                       t.accumulate(ir, g.colwise().sum());
                     }
                   });
}

// ---- structural -------------------------------------------------------------

Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  Tape& tape = tape_of(a);
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + shape_str(a));
  }
  Matrix out = a.value().middleRows(begin, count);
  const std::size_t ia = a.id();
  return tape.emit(std::move(out), {a}, "slice_rows",
                   [ia, begin, count](Tape& t, std::size_t, const Matrix& g) {
                     if (t.requires_grad_of(ia)) {
                       t.grad_slot(ia).middleRows(begin, count) += g;
                     }
                   });
}

Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  Tape& tape = tape_of(a);
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + shape_str(a));
  }
  Matrix out = a.value().middleCols(begin, count);
  const std::size_t ia = a.id();
  return tape.emit(std::move(out), {a}, "slice_cols",
                   [ia, begin, count](Tape& t, std::size_t, const Matrix& g) {
                     if (t.requires_grad_of(ia)) {
                       t.grad_slot(ia).middleCols(begin, count) += g;
                     }
                   });
}

Tensor gather_rows(const Tensor& a, std::span<const int> indices) {
  Tape& tape = tape_of(a);
  const Matrix& src = a.value();
  Matrix out(static_cast<Eigen::Index>(indices.size()), src.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int r = indices[i];
    if (r < 0 || r >= src.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(r) + " outside " +
                           shape_str(a));
    }
    out.row(static_cast<Eigen::Index>(i)) = src.row(r);
  }
  const std::size_t ia = a.id();
  std::vector<int> idx(indices.begin(), indices.end());
  return tape.emit(std::move(out), {a}, "gather_rows",
                   [ia, idx = std::move(idx)](Tape& t, std::size_t, const Matrix& g) {
                     if (!t.requires_grad_of(ia)) {
                       return;
                     }
                     Matrix& slot = t.grad_slot(ia);
                     for (std::size_t i = 0; i < idx.size(); ++i) {
                       slot.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                     }
                   });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) {
    throw ContractError("concat_rows of nothing");
  }
  Tape& tape = tape_of(parts[0]);
  Eigen::Index rows = 0;
  for (const Tensor& p : parts) {
    if (p.tape() != &tape) {
      throw ContractError("concat_rows: operands on different tapes");
    }
    if (p.cols() != parts[0].cols()) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(p) + " vs " +
                           shape_str(parts[0]));
    }
    rows += p.rows();
  }
  Matrix out(rows, parts[0].cols());
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const Tensor& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.rows();
  }
  return tape.emit(std::move(out), parts, "concat_rows",
                   [layout = std::move(layout)](Tape& t, std::size_t, const Matrix& g) {
                     for (const auto& [id, offset] : layout) {
                       if (t.requires_grad_of(id)) {
                         const Eigen::Index n = t.value_of(id).rows();
                         t.accumulate(id, g.middleRows(offset, n));
                       }
                     }
                   });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) {
    throw ContractError("concat_cols of nothing");
  }
  Tape& tape = tape_of(parts[0]);
  Eigen::Index cols = 0;
  for (const Tensor& p : parts) {
    if (p.tape() != &tape) {
      throw ContractError("concat_cols: operands on different tapes");
    }
    if (p.rows() != parts[0].rows()) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(p) + " vs " +
                           shape_str(parts[0]));
    }
    cols += p.cols();
  }
  Matrix out(parts[0].rows(), cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const Tensor& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.cols();
  }
  return tape.emit(std::move(out), parts, "concat_cols",
                   [layout = std::move(layout)](Tape& t, std::size_t, const Matrix& g) {
                     for (const auto& [id, offset] : layout) {
                       if (t.requires_grad_of(id)) {
                         const Eigen::Index n = t.value_of(id).cols();
                         t.accumulate(id, g.middleCols(offset, n));
                       }
                     }
                   });
}

// ---- reductions and losses --------------------------------------------------

Tensor sum(const Tensor& a) {
  Tape& tape = tape_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const std::size_t ia = a.id();
  return tape.emit(std::move(out), {a}, "sum", [ia](Tape& t, std::size_t, const Matrix& g) {
    const Matrix& v = t.value_of(ia);
    t.accumulate(ia, Matrix::Constant(v.rows(), v.cols(), g(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  if (a.value().size() == 0) {
    throw DomainError("mean of an empty tensor");
  }
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Tensor softmax_cross_entropy(const Tensor& logits, int target) {
  Tape& tape = tape_of(logits);
  const Matrix& z = logits.value();
  if (z.size() == 0) {
    throw DomainError("softmax_cross_entropy: empty logits");
  }
  if (z.rows() != 1 && z.cols() != 1) {
    throw DimensionError("softmax_cross_entropy expects a vector, got " + shape_str(logits));
  }
  if (target < 0 || target >= z.size()) {
    throw ContractError("softmax_cross_entropy: target " + std::to_string(target) +
                        " outside [0, " + std::to_string(z.size()) + ")");
  }
  const double* data = z.data();
  const auto k = static_cast<std::size_t>(z.size());
  const double m = *std::max_element(data, data + k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    total += std::exp(data[i] - m);
  }
  const double log_partition = m + std::log(total);
  Matrix out(1, 1);
  out(0, 0) = log_partition - data[target];
  const std::size_t il = logits.id();
  return tape.emit(std::move(out), {logits}, "softmax_cross_entropy",
                   [il, target, log_partition](Tape& t, std::size_t, const Matrix& g) {
                     const Matrix& zz = t.value_of(il);
                     Matrix d = (zz.array() - log_partition).exp().matrix();
                     d.data()[target] -= 1.0;
                     t.accumulate(il, d * g(0, 0));
                   });
}

Tensor sigmoid_binary_cross_entropy(const Tensor& logits, const Matrix& targets) {
  Tape& tape = tape_of(logits);
  const Matrix& z = logits.value();
  if (z.rows() != targets.rows() || z.cols() != targets.cols()) {
    throw DimensionError("sigmoid_binary_cross_entropy: targets do not match " +
                         shape_str(logits));
  }
  // max(z, 0) − z·y + log(1 + exp(−|z|))
  const auto za = z.array();
  const double loss =
      (za.max(0.0) - za * targets.array() + (-za.abs()).exp().log1p()).sum();
  Matrix out(1, 1);
  out(0, 0) = loss;
  const std::size_t il = logits.id();
  return tape.emit(std::move(out), {logits}, "sigmoid_binary_cross_entropy",
                   [il, targets](Tape& t, std::size_t, const Matrix& g) {
                     const Matrix& zz = t.value_of(il);
                     Matrix d = zz.unaryExpr([](double x) { return stable_sigmoid(x); }) - targets;
                     t.accumulate(il, d * g(0, 0));
                   });
}

// ---- helpers ----------------------------------------------------------------

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) {
    throw DomainError("softmax of an empty vector");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    total += p[i];
  }
  for (double& v : p) {
    v /= total;
  }
  return p;
}

bool all_finite(const Matrix& m) {
  // NaN and ±Inf survive summation; a vectorized sum is far cheaper than an
  // element-wise test. Finite entries large enough to overflow the sum are
  // reported too, which is what the caller wants anyway.
  return std::isfinite(m.sum());
}

}  // namespace mgt::ag
