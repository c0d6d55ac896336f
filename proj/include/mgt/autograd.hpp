#pragma once

// Tape-based reverse-mode differentiation over dense 2-D double matrices.
//
// A Tape owns every node created while building one computation. Tensors are
// cheap handles (tape pointer + node id). Trainable state lives in Parameter
// objects outside the tape; binding a Parameter to a tape creates a leaf that
// reads the parameter in place, and backward() flushes the leaf gradient into
// Parameter::grad with +=.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mgt::ag {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

class Tape;

class Tensor {
 public:
  Tensor() = default;

  Eigen::Index rows() const;
  Eigen::Index cols() const;
  const Matrix& value() const;
  /// Accumulated gradient; zeros when nothing flowed into this node.
  Matrix grad() const;
  bool requires_grad() const;
  double item() const;

  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// With recording off the tape only evaluates values; no backward rules are
  /// stored and backward() is a contract error.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value);
  Tensor variable(Matrix value);
  /// Leaf reading `param.value` in place. With `trainable`, backward()
  /// accumulates into `param.grad`. Binding the same parameter twice on one
  /// tape is allowed; both leaves accumulate.
  Tensor parameter(Parameter& param, bool trainable = true);
  /// Read-only leaf over a parameter; never receives gradient.
  Tensor frozen(const Parameter& param);

  /// Seeds d(root)/d(root) = 1 and replays the recorded operations in reverse.
  /// A tape can be replayed once; a second call throws ContractError.
  void backward(const Tensor& root);

  void clear();
  bool recording() const { return record_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t op_count() const { return ops_.size(); }

  // Internal API used by the operation implementations.
  using BackwardFn = std::function<void(Tape&, std::size_t out_id, const Matrix& out_grad)>;
  Tensor emit(Matrix value, std::initializer_list<Tensor> inputs, const char* op_name,
              BackwardFn backward);
  Tensor emit(Matrix value, std::span<const Tensor> inputs, const char* op_name,
              BackwardFn backward);
  const Matrix& value_of(std::size_t id) const;
  bool requires_grad_of(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Adds `delta` into the gradient slot of node `id`, allocating it on first use.
  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) {
      return;
    }
    const Matrix& v = value_of(id);
    if (n.grad.size() == 0) {
      n.grad = Matrix::Zero(v.rows(), v.cols());
    }
    n.grad += delta;
  }
  /// Gradient slot for in-place sparse updates (e.g. scatter-add).
  Matrix& grad_slot(std::size_t id);
  Matrix grad_of(std::size_t id) const;

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Parameter* param = nullptr;
    Matrix grad;
    bool requires_grad = false;
  };
  struct Op {
    std::size_t output;
    BackwardFn backward;
  };

  Tensor push(Node node);

  bool record_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
  std::vector<Op> ops_;
};

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

enum class Elementwise { add, mul, tanh, sigmoid };
/// Dispatches to the named op; binary ops require `b`.
Tensor elementwise(Elementwise op, const Tensor& a, const Tensor* b = nullptr);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
/// Adds a 1×n row to every row of an m×n matrix.
Tensor add_row(const Tensor& a, const Tensor& row);

Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count);
Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index count);
/// out.row(i) = a.row(indices[i]); backward scatter-adds.
Tensor gather_rows(const Tensor& a, std::span<const int> indices);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// −log softmax(logits)[target] for a single row or column of k logits,
/// computed with max subtraction.
Tensor softmax_cross_entropy(const Tensor& logits, int target);
/// Σ over all entries of the logistic loss of `logits` against 0/1 `targets`.
Tensor sigmoid_binary_cross_entropy(const Tensor& logits, const Matrix& targets);

// ---- plain helpers ----------------------------------------------------------

double stable_sigmoid(double x);
/// Numerically stable softmax of a vector of logits.
std::vector<double> softmax(std::span<const double> logits);
bool all_finite(const Matrix& m);

}  // namespace mgt::ag
