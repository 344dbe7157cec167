#include "wavesp/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "oracles.hpp"

using namespace wavesp;

namespace {

Tensor random_tensor(Shape shape, RngStream& rng, bool requires_grad = true) {
  Tensor t = Tensor::zeros(shape, requires_grad);
  for (size_t i = 0; i < t.size(); ++i) t.value()[i] = rng.uniform(-1.0, 1.0);
  return t;
}

// Finite-difference check of a scalar function of `params` over several
// random seeds; every registered op goes through this.
void expect_grads_match(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Shape>& shapes, int seeds = 10, double tol = 1e-4) {
  for (int seed = 0; seed < seeds; ++seed) {
    RngStream rng(static_cast<uint64_t>(seed), "gradcheck");
    std::vector<Tensor> params;
    for (const Shape& s : shapes) params.push_back(random_tensor(s, rng));
    const double err = grad_check([&] { return f(params); }, params, 1e-5);
    EXPECT_LT(err, tol) << "seed " << seed;
  }
}

}  // namespace

TEST(TensorOps, MatmulIdentity) {
  Tensor eye = Tensor::zeros({3, 3});
  for (int i = 0; i < 3; ++i) eye.set(i, i, 1.0);
  RngStream rng(7, "x");
  Tensor x = random_tensor({3, 4}, rng, false);
  Tensor y = matmul(eye, x);
  for (size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y.value()[i], x.value()[i]);
}

TEST(TensorOps, MatmulShapeMismatchThrows) {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  EXPECT_THROW(matmul(a, b), std::invalid_argument);
  EXPECT_THROW(add(a, b), std::invalid_argument);
}

TEST(TensorOps, SoftmaxUniformOnConstantRow) {
  Tensor x = Tensor::zeros({1, 3});
  Tensor y = softmax_rows(x);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(y.at(0, j), 1.0 / 3.0, 1e-15);
}

TEST(TensorOps, Conv1dMatchesSlidingWindowOracle) {
  // Spec example: x=[1,2,3,4], f=[1,1], stride 2, periodic pad.
  Tensor x = Tensor::from({1, 4}, {1, 2, 3, 4});
  Tensor f = Tensor::from({2}, {1, 1});
  Tensor y = conv1d_periodic(x, f, 2);
  const auto expect = oracle::conv_downsample({1, 2, 3, 4}, {1, 1}, 2);
  ASSERT_EQ(y.size(), expect.size());
  for (size_t i = 0; i < expect.size(); ++i) EXPECT_DOUBLE_EQ(y.value()[i], expect[i]);
  EXPECT_DOUBLE_EQ(y.at(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(y.at(0, 1), 7.0);

  for (int seed = 0; seed < 5; ++seed) {
    RngStream rng(static_cast<uint64_t>(seed), "conv");
    Tensor xr = random_tensor({3, 12}, rng, false);
    Tensor fr = random_tensor({4}, rng, false);
    for (int stride : {1, 2, 3}) {
      Tensor out = conv1d_periodic(xr, fr, stride);
      for (int r = 0; r < 3; ++r) {
        std::vector<double> row(xr.value().begin() + r * 12,
                                xr.value().begin() + (r + 1) * 12);
        const auto want = oracle::conv_downsample(row, fr.value(), stride);
        for (size_t j = 0; j < want.size(); ++j)
          EXPECT_NEAR(out.at(r, static_cast<int>(j)), want[j], 1e-12);
      }
    }
  }
}

TEST(TensorOps, UpconvMatchesOracle) {
  RngStream rng(3, "upconv");
  Tensor c = random_tensor({2, 6}, rng, false);
  Tensor f = random_tensor({4}, rng, false);
  Tensor y = upconv1d_periodic(c, f, 2);
  ASSERT_EQ(y.dim(1), 12);
  for (int r = 0; r < 2; ++r) {
    std::vector<double> row(c.value().begin() + r * 6, c.value().begin() + (r + 1) * 6);
    const auto want = oracle::upsample_conv(row, f.value(), 2);
    for (size_t j = 0; j < want.size(); ++j)
      EXPECT_NEAR(y.at(r, static_cast<int>(j)), want[j], 1e-12);
  }
}

TEST(TensorOps, ConvArgumentErrors) {
  Tensor x = Tensor::zeros({1, 4});
  EXPECT_THROW(conv1d_periodic(x, Tensor::zeros({6}), 2), std::invalid_argument);
  EXPECT_THROW(conv1d_periodic(x, Tensor::zeros({2}), 3), std::invalid_argument);
  EXPECT_THROW(conv1d_periodic(x, Tensor::zeros({2}), 0), std::invalid_argument);
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::from({2, 3}, {1, -2, 3, 4, -5, 6}, true);
  sum_all(x).backward();
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Backward, ElementwiseSquare) {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  sum_all(mul(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 6.0);
}

TEST(Backward, NonScalarLossThrows) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(x.backward(), std::invalid_argument);
}

TEST(Backward, AccumulationAcrossReuse) {
  // Using a tensor twice sums the single-use gradients.
  Tensor x = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
  Tensor loss = add(sum_all(x), sum_all(mul(x, x)));
  loss.backward();
  for (int i = 0; i < 3; ++i)
    EXPECT_DOUBLE_EQ(x.grad()[static_cast<size_t>(i)], 1.0 + 2.0 * x.at(i));
}

TEST(Backward, DeterministicAcrossRuns) {
  auto run = [] {
    RngStream rng(11, "det");
    Tensor x = random_tensor({4, 6}, rng);
    Tensor w = random_tensor({6, 3}, rng);
    Tensor loss = sum_all(softmax_rows(matmul(x, w)));
    loss.backward();
    std::vector<double> grads = x.grad();
    grads.insert(grads.end(), w.grad().begin(), w.grad().end());
    return grads;
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Backward, ThreeLayerMlpMatchesFiniteDifferences) {
  RngStream rng(21, "mlp");
  Tensor x = random_tensor({2, 5}, rng, false);
  std::vector<Tensor> params = {random_tensor({5, 7}, rng), random_tensor({7}, rng),
                                random_tensor({7, 6}, rng), random_tensor({6}, rng),
                                random_tensor({6, 3}, rng), random_tensor({3}, rng)};
  auto f = [&] {
    Tensor h1 = silu(linear(x, params[0], params[1]));
    Tensor h2 = silu(linear(h1, params[2], params[3]));
    return mean_all(linear(h2, params[4], params[5]));
  };
  EXPECT_LT(grad_check(f, params, 1e-5), 1e-4);
}

TEST(GradCheck, IdentitySumIsExact) {
  Tensor x = Tensor::from({4}, {0.1, 0.2, 0.3, 0.4}, true);
  const double err = grad_check([&] { return sum_all(x); }, {x}, 1e-5);
  EXPECT_LT(err, 1e-10);
}

TEST(GradCheck, EpsOutOfRangeThrows) {
  Tensor x = Tensor::from({1}, {1.0}, true);
  EXPECT_THROW(grad_check([&] { return sum_all(x); }, {x}, 0.5), std::invalid_argument);
}

TEST(GradCheck, DetectsCorruptedBackward) {
  // An op whose backward rule drops half the gradient: the harness must
  // report a large error.
  Tensor x = Tensor::from({4}, {0.5, 1.0, 1.5, 2.0}, true);
  auto f = [&] {
    std::vector<double> y(x.size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = x.value()[i] * x.value()[i];
    Tensor sq = custom_unary(
        x, y, x.shape(),
        [](const std::vector<double>& og, std::vector<double>& ig) {
          for (size_t i = 0; i < og.size(); ++i) ig[i] += 0.1 * og[i];  // wrong rule
        },
        "bad_square");
    return sum_all(sq);
  };
  EXPECT_GT(grad_check(f, {x}, 1e-5), 1e-2);
}

// Finite-difference coverage of each registered op family.

TEST(OpGradients, Arithmetic) {
  expect_grads_match(
      [](const std::vector<Tensor>& p) {
        Tensor y = add(mul(p[0], p[1]), sub(scale(p[0], 0.7), add_scalar(p[1], 0.3)));
        return sum_all(mul(y, y));
      },
      {{3, 4}, {3, 4}});
}

TEST(OpGradients, MatmulTransposeConcatSlice) {
  expect_grads_match(
      [](const std::vector<Tensor>& p) {
        Tensor prod = matmul(p[0], p[1]);                    // (3,3)
        Tensor cat = concat(0, {prod, transpose(prod)});     // (6,3)
        Tensor cols = concat(1, {cat, cat});                 // (6,6)
        Tensor s = slice(slice(cols, 0, 1, 5), 1, 2, 6);     // (4,4)
        return mean_all(mul(s, s));
      },
      {{3, 5}, {5, 3}});
}

TEST(OpGradients, RowOpsAndActivations) {
  expect_grads_match(
      [](const std::vector<Tensor>& p) {
        Tensor h = add_rowvec(p[0], p[1]);
        Tensor a = silu(h);
        Tensor b = relu(add_scalar(a, 0.1));
        Tensor c = sigmoid(b);
        Tensor d = exp_t(scale(c, 0.5));
        Tensor e = softplus(d);
        return sum_all(mul(e, softmax_rows(reverse_rows(p[0]))));
      },
      {{4, 5}, {5}});
}

TEST(OpGradients, LayerNorm) {
  expect_grads_match(
      [](const std::vector<Tensor>& p) {
        Tensor y = layer_norm_rows(p[0], p[1], p[2]);
        return sum_all(mul(y, y));
      },
      {{3, 6}, {6}, {6}});
}

TEST(OpGradients, ConvolutionPair) {
  expect_grads_match(
      [](const std::vector<Tensor>& p) {
        Tensor down = conv1d_periodic(p[0], p[1], 2);
        Tensor up = upconv1d_periodic(down, p[2], 2);
        return sum_all(mul(up, up));
      },
      {{2, 8}, {4}, {4}});
}

TEST(OpGradients, Reductions) {
  expect_grads_match(
      [](const std::vector<Tensor>& p) {
        Tensor m = mean_axis0(p[0]);
        return add(mean_all(p[0]), sum_all(mul(m, m)));
      },
      {{4, 3}});
}

TEST(OpGradients, Dft) {
  expect_grads_match(
      [](const std::vector<Tensor>& p) {
        Tensor r1 = dft_re(p[0], 0);
        Tensor i1 = dft_im(p[0], 0);
        Tensor r2 = dft_re(r1, i1, 1);
        Tensor i2 = dft_im(r1, i1, 1);
        return add(sum_all(mul(r2, r2)), sum_all(mul(i2, i2)));
      },
      {{3, 4}});
}

TEST(OpGradients, CrossEntropy) {
  expect_grads_match(
      [](const std::vector<Tensor>& p) { return cross_entropy_logits(p[0], 1); },
      {{1, 3}});
}

TEST(OpGradients, DropoutWithFixedStream) {
  expect_grads_match(
      [](const std::vector<Tensor>& p) {
        RngStream rng(99, "dropmask");  // same mask on every call
        Tensor y = dropout(p[0], 0.4, rng, true);
        return sum_all(mul(y, y));
      },
      {{5, 5}});
}

TEST(Dropout, EvalModeIsIdentity) {
  RngStream rng(1, "d");
  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  Tensor y = dropout(x, 0.5, rng, false);
  EXPECT_EQ(y.node().get(), x.node().get());
}

TEST(Dropout, TrainModeMasksAndRescales) {
  RngStream rng(5, "d");
  Tensor x = Tensor::full({1, 1000}, 1.0);
  Tensor y = dropout(x, 0.3, rng, true);
  int kept = 0;
  for (double v : y.value()) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.7) < 1e-12);
    kept += v != 0.0;
  }
  EXPECT_NEAR(kept / 1000.0, 0.7, 0.05);
}

TEST(GradGate, BlocksGatedPositions) {
  Tensor x = Tensor::from({4}, {1, 2, 3, 4}, true);
  Tensor y = grad_gate(x, {1.0, 0.0, 1.0, 0.0});
  for (size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.value()[i], x.value()[i]);
  sum_all(mul(y, y)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 6.0);
  EXPECT_DOUBLE_EQ(x.grad()[3], 0.0);
}

TEST(NoGrad, GuardSuppressesTape) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  NoGradGuard guard;
  Tensor y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(NoGrad, FrozenLeafNeverAccumulates) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor w = Tensor::from({2}, {3, 4}, false);
  sum_all(mul(x, w)).backward();
  EXPECT_FALSE(w.has_grad());
  EXPECT_TRUE(x.has_grad());
}

TEST(Tape, FirstNonFiniteOpIsNamed) {
  Tensor x = Tensor::full({2}, 1e308, true);
  Tensor y = exp_t(x);          // inf
  Tensor z = scale(y, 0.5);     // still inf
  Tensor loss = sum_all(z);
  EXPECT_FALSE(loss.all_finite());
  EXPECT_EQ(first_nonfinite_op(loss), std::string("exp"));
}
