#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mgt/autograd.hpp"
#include "mgt/errors.hpp"
#include "mgt/optimizer.hpp"
#include "support/gradcheck.hpp"

using mgt::ag::Matrix;
using mgt::ag::Tape;
using mgt::ag::Tensor;
namespace ag = mgt::ag;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) {
      m(r, c++) = v;
    }
    ++r;
  }
  return m;
}

// log-sum-exp written out longhand, independent of the library softmax.
double reference_ce(const std::vector<double>& z, int target) {
  double denom = 0.0;
  for (double v : z) {
    denom += std::exp(v);
  }
  return -std::log(std::exp(z[static_cast<std::size_t>(target)]) / denom);
}

}  // namespace

TEST(Autograd, MatmulValues) {
  Tape tape;
  Tensor a = tape.constant(mat({{1, 2}, {3, 4}}));
  Tensor b = tape.constant(mat({{1}, {1}}));
  Tensor c = ag::matmul(a, b);
  ASSERT_EQ(c.rows(), 2);
  ASSERT_EQ(c.cols(), 1);
  EXPECT_DOUBLE_EQ(c.value()(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(c.value()(1, 0), 7.0);
}

TEST(Autograd, MatmulIdentityKeepsMatrix) {
  std::mt19937_64 rng(3);
  Matrix a = mgt::testing::random_matrix(4, 5, rng);
  Tape tape;
  Tensor out = ag::matmul(tape.constant(a), tape.constant(Matrix::Identity(5, 5)));
  EXPECT_EQ(out.value(), a);
}

TEST(Autograd, MatmulInnerMismatchThrows) {
  Tape tape;
  Tensor a = tape.constant(Matrix::Ones(2, 3));
  Tensor b = tape.constant(Matrix::Ones(2, 3));
  EXPECT_THROW(ag::matmul(a, b), mgt::DimensionError);
  EXPECT_THROW(ag::add(a, tape.constant(Matrix::Ones(3, 2))), mgt::DimensionError);
}

TEST(Autograd, ElementwiseActivations) {
  Tape tape;
  Tensor z = tape.constant(Matrix::Zero(1, 3));
  EXPECT_EQ(ag::tanh(z).value(), Matrix::Zero(1, 3));
  EXPECT_EQ(ag::sigmoid(z).value(), Matrix::Constant(1, 3, 0.5));
}

TEST(Autograd, StableSigmoidAtExtremes) {
  EXPECT_DOUBLE_EQ(ag::stable_sigmoid(800.0), 1.0);
  EXPECT_DOUBLE_EQ(ag::stable_sigmoid(-800.0), 0.0);
  EXPECT_TRUE(std::isfinite(ag::stable_sigmoid(-1e308)));
}

TEST(Autograd, SigmoidDerivativeMatchesFiniteDifference) {
  auto g = mgt::testing::check_inputs({mat({{1.0}})}, [](Tape&, const std::vector<Tensor>& in) {
    return ag::sum(ag::sigmoid(in[0]));
  });
  EXPECT_TRUE(g.all_passed()) << g.worst_relative;
}

TEST(Autograd, CrossEntropyUniformLogits) {
  Tape tape;
  Tensor l = tape.variable(Matrix::Constant(1, 10, 0.3));
  Tensor loss = ag::softmax_cross_entropy(l, 4);
  EXPECT_NEAR(loss.item(), std::log(10.0), 1e-12);
  tape.backward(loss);
  const Matrix g = l.grad();
  for (int i = 0; i < 10; ++i) {
    EXPECT_NEAR(g(0, i), (i == 4 ? 0.1 - 1.0 : 0.1), 1e-12);
  }
}

TEST(Autograd, CrossEntropyKnownValue) {
  Tape tape;
  Tensor l = tape.variable(mat({{1, 2, 3}}));
  Tensor loss = ag::softmax_cross_entropy(l, 2);
  EXPECT_NEAR(loss.item(), reference_ce({1, 2, 3}, 2), 1e-12);
  EXPECT_NEAR(loss.item(), 0.40761, 1e-5);
  tape.backward(loss);
  const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(l.grad()(0, 0), std::exp(1.0) / denom, 1e-12);
  EXPECT_NEAR(l.grad()(0, 1), std::exp(2.0) / denom, 1e-12);
  EXPECT_NEAR(l.grad()(0, 2), std::exp(3.0) / denom - 1.0, 1e-12);
}

TEST(Autograd, CrossEntropyTwoCandidates) {
  Tape tape;
  Tensor loss = ag::softmax_cross_entropy(tape.constant(mat({{0.5, -0.5}})), 0);
  EXPECT_NEAR(loss.item(), reference_ce({0.5, -0.5}, 0), 1e-12);
  EXPECT_NEAR(loss.item(), 0.31326, 1e-5);
}

TEST(Autograd, CrossEntropyAcceptsColumnVector) {
  Tape tape;
  Tensor loss = ag::softmax_cross_entropy(tape.constant(mat({{1}, {2}, {3}})), 2);
  EXPECT_NEAR(loss.item(), reference_ce({1, 2, 3}, 2), 1e-12);
}

TEST(Autograd, CrossEntropySaturatedStaysFinite) {
  Tape tape;
  Tensor l = tape.variable(mat({{1000, 0, 0}}));
  Tensor good = ag::softmax_cross_entropy(l, 0);
  EXPECT_GE(good.item(), 0.0);
  EXPECT_LT(good.item(), 1e-12);
  Tape tape2;
  Tensor bad = ag::softmax_cross_entropy(tape2.constant(mat({{1000, 0, 0}})), 1);
  EXPECT_NEAR(bad.item(), 1000.0, 1e-9);
}

TEST(Autograd, CrossEntropyRejectsBadInput) {
  Tape tape;
  EXPECT_THROW(ag::softmax_cross_entropy(tape.constant(Matrix(1, 0)), 0), mgt::DomainError);
  EXPECT_THROW(ag::softmax_cross_entropy(tape.constant(Matrix::Ones(1, 3)), 3), mgt::ContractError);
  EXPECT_THROW(ag::softmax_cross_entropy(tape.constant(Matrix::Ones(2, 3)), 0), mgt::DimensionError);
}

TEST(Autograd, BinaryCrossEntropyKnownValue) {
  // logit 0.5 with label 1 and logit -0.5 with label 0 both cost log(1 + e^-0.5).
  Tape tape;
  Tensor l = tape.variable(mat({{0.5, -0.5}}));
  Tensor loss = ag::sigmoid_binary_cross_entropy(l, mat({{1, 0}}));
  const double each = std::log1p(std::exp(-0.5));
  EXPECT_NEAR(loss.item(), 2 * each, 1e-12);
  tape.backward(loss);
  EXPECT_NEAR(l.grad()(0, 0), 1.0 / (1.0 + std::exp(-0.5)) - 1.0, 1e-12);
  EXPECT_NEAR(l.grad()(0, 1), 1.0 / (1.0 + std::exp(0.5)), 1e-12);
}

TEST(Autograd, BackwardOfSquare) {
  Tape tape;
  Tensor x = tape.variable(mat({{3.0}}));
  Tensor y = ag::mul(x, x);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 6.0);
}

TEST(Autograd, DisconnectedLeafGetsZeroGradient) {
  Tape tape;
  Tensor x = tape.variable(mat({{1.0, 2.0}}));
  Tensor unused = tape.variable(mat({{5.0}}));
  tape.backward(ag::sum(x));
  EXPECT_EQ(unused.grad(), Matrix::Zero(1, 1));
  EXPECT_EQ(x.grad(), Matrix::Ones(1, 2));
}

TEST(Autograd, BackwardContracts) {
  Tape tape;
  Tensor x = tape.variable(Matrix::Ones(2, 2));
  EXPECT_THROW(tape.backward(x), mgt::ContractError);
  Tensor s = ag::sum(x);
  tape.backward(s);
  EXPECT_THROW(tape.backward(s), mgt::ContractError);

  Tape eval(false);
  Tensor e = ag::sum(eval.constant(Matrix::Ones(2, 2)));
  EXPECT_DOUBLE_EQ(e.item(), 4.0);
  EXPECT_THROW(eval.backward(e), mgt::ContractError);
}

TEST(Autograd, MixingTapesIsRejected) {
  Tape a, b;
  EXPECT_THROW(ag::add(a.constant(Matrix::Ones(1, 1)), b.constant(Matrix::Ones(1, 1))),
               mgt::ContractError);
}

TEST(Autograd, NonFiniteValuesAreReported) {
  Tape tape;
  Matrix bad = Matrix::Ones(1, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(tape.constant(bad), mgt::NumericError);
  Tensor big = tape.constant(Matrix::Constant(1, 1, 1e200));
  EXPECT_THROW(ag::mul(big, big), mgt::NumericError);
}

TEST(Autograd, ParameterGradientAccumulatesAcrossBindings) {
  ag::Parameter p("w", mat({{2.0}}));
  Tape tape;
  Tensor a = tape.parameter(p);
  Tensor b = tape.parameter(p);
  tape.backward(ag::mul(a, b));
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 4.0);

  Tape again;
  again.backward(ag::scale(again.parameter(p), 3.0));
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 7.0);
}

TEST(Autograd, FrozenParameterReceivesNoGradient) {
  ag::Parameter p("w", mat({{2.0}}));
  Tape tape;
  Tensor x = tape.variable(mat({{1.5}}));
  tape.backward(ag::mul(tape.frozen(p), x));
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 2.0);
}

TEST(Autograd, GatherRowsScatterAddsRepeatedRows) {
  Tape tape;
  Tensor x = tape.variable(mat({{1, 2}, {3, 4}, {5, 6}}));
  std::vector<int> idx{2, 0, 2};
  Tensor g = ag::gather_rows(x, idx);
  EXPECT_EQ(g.value(), mat({{5, 6}, {1, 2}, {5, 6}}));
  tape.backward(ag::sum(g));
  EXPECT_EQ(x.grad(), mat({{1, 1}, {0, 0}, {2, 2}}));
}

TEST(Autograd, SliceAndConcatRoundTrip) {
  std::mt19937_64 rng(5);
  Matrix m = mgt::testing::random_matrix(4, 6, rng);
  Tape tape;
  Tensor x = tape.constant(m);
  std::vector<Tensor> cols{ag::slice_cols(x, 0, 2), ag::slice_cols(x, 2, 4)};
  EXPECT_EQ(ag::concat_cols(cols).value(), m);
  std::vector<Tensor> rows{ag::slice_rows(x, 0, 1), ag::slice_rows(x, 1, 3)};
  EXPECT_EQ(ag::concat_rows(rows).value(), m);
  EXPECT_THROW(ag::slice_rows(x, 3, 2), mgt::DimensionError);
}

TEST(Autograd, EveryOpMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  using Fn = mgt::testing::GraphFn;
  std::vector<std::pair<const char*, Fn>> cases{
      {"matmul", [](Tape&, const std::vector<Tensor>& in) { return ag::sum(ag::tanh(ag::matmul(in[0], in[1]))); }},
      {"matmul_nt", [](Tape&, const std::vector<Tensor>& in) {
         return ag::sum(ag::sigmoid(ag::matmul_nt(in[0], ag::slice_rows(in[1], 0, 3))));
       }},
      {"mul", [](Tape&, const std::vector<Tensor>& in) { return ag::mean(ag::mul(in[2], in[3])); }},
      {"sub", [](Tape&, const std::vector<Tensor>& in) { return ag::sum(ag::tanh(ag::sub(in[2], in[3]))); }},
      {"add_row", [](Tape&, const std::vector<Tensor>& in) {
         return ag::sum(ag::tanh(ag::add_row(in[2], ag::slice_rows(in[3], 0, 1))));
       }},
      {"ce", [](Tape&, const std::vector<Tensor>& in) {
         return ag::softmax_cross_entropy(ag::slice_rows(in[2], 1, 1), 2);
       }},
      {"bce", [](Tape&, const std::vector<Tensor>& in) {
         return ag::sigmoid_binary_cross_entropy(in[3], Matrix::Identity(3, 4));
       }},
  };
  for (const auto& [name, fn] : cases) {
    std::vector<Matrix> inputs{mgt::testing::random_matrix(3, 4, rng), mgt::testing::random_matrix(4, 4, rng),
                               mgt::testing::random_matrix(3, 4, rng), mgt::testing::random_matrix(3, 4, rng)};
    auto result = mgt::testing::check_inputs(inputs, fn);
    EXPECT_TRUE(result.all_passed()) << name << " worst relative error " << result.worst_relative;
  }
}

TEST(Autograd, RandomCompositeGraphsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto graph = mgt::testing::make_random_graph(1000 + seed);
    auto result = mgt::testing::check_inputs(graph.inputs, graph.build);
    EXPECT_TRUE(result.all_passed()) << "graph " << seed << " [" << graph.description
                                     << "] worst relative error " << result.worst_relative;
  }
}

TEST(Autograd, RepeatedRunsAreBitwiseIdentical) {
  auto run = [] {
    auto graph = mgt::testing::make_random_graph(77);
    Tape tape;
    std::vector<Tensor> leaves;
    for (const auto& m : graph.inputs) {
      leaves.push_back(tape.variable(m));
    }
    Tensor root = graph.build(tape, leaves);
    tape.backward(root);
    std::vector<Matrix> out{Matrix::Constant(1, 1, root.item())};
    for (const auto& l : leaves) {
      out.push_back(l.grad());
    }
    return out;
  };
  auto a = run();
  auto b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], b[i]);
  }
}

TEST(Optimizer, ClipScalesToMaxNorm) {
  ag::Parameter a("a", Matrix::Zero(1, 2));
  ag::Parameter b("b", Matrix::Zero(1, 1));
  a.grad = mat({{30.0, 0.0}});
  b.grad = mat({{40.0}});
  std::vector<ag::Parameter*> ps{&a, &b};
  EXPECT_DOUBLE_EQ(mgt::global_grad_norm(ps), 50.0);
  EXPECT_DOUBLE_EQ(mgt::clip_grad_norm(ps, 5.0), 50.0);
  EXPECT_NEAR(a.grad(0, 0), 3.0, 1e-12);
  EXPECT_NEAR(b.grad(0, 0), 4.0, 1e-12);
  EXPECT_NEAR(mgt::global_grad_norm(ps), 5.0, 1e-12);
}

TEST(Optimizer, ClipLeavesSmallGradientsAlone) {
  ag::Parameter a("a", Matrix::Zero(1, 2));
  a.grad = mat({{0.3, 0.4}});
  std::vector<ag::Parameter*> ps{&a};
  mgt::clip_grad_norm(ps, 5.0);
  EXPECT_EQ(a.grad, mat({{0.3, 0.4}}));
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  // With bias correction the first update is lr · g / (|g| + eps).
  ag::Parameter p("p", mat({{1.0, -2.0}}));
  p.grad = mat({{0.5, -3.0}});
  std::vector<ag::Parameter*> ps{&p};
  mgt::Adam adam(ps, {0.01, 0.9, 0.999, 1e-8});
  adam.step(ps);
  EXPECT_NEAR(p.value(0, 0), 1.0 - 0.01 * 0.5 / (0.5 + 1e-8), 1e-12);
  EXPECT_NEAR(p.value(0, 1), -2.0 + 0.01 * 3.0 / (3.0 + 1e-8), 1e-12);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Optimizer, AdamMinimisesQuadratic) {
  ag::Parameter p("p", mat({{4.0, -3.0}}));
  std::vector<ag::Parameter*> ps{&p};
  mgt::Adam adam(ps, {0.05, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 2000; ++i) {
    p.zero_grad();
    Tape tape;
    Tensor x = tape.parameter(p);
    tape.backward(ag::sum(ag::mul(x, x)));
    adam.step(ps);
  }
  EXPECT_LT(p.value.norm(), 1e-2);
}

TEST(Optimizer, NonFiniteGradientIsReported) {
  ag::Parameter p("p", mat({{1.0}}));
  p.grad(0, 0) = std::numeric_limits<double>::infinity();
  std::vector<ag::Parameter*> ps{&p};
  EXPECT_THROW(mgt::clip_grad_norm(ps, 5.0), mgt::NumericError);
}
