#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "textgnn/rng.hpp"
#include "textgnn/tensor.hpp"

using namespace textgnn;

namespace {

TensorPtr vec(std::vector<Real> v, bool rg = false) {
  const int n = static_cast<int>(v.size());
  return Tensor::from_data({n}, std::move(v), rg);
}

}  // namespace

TEST(Matmul, IdentityCase) {
  Tape tape;
  auto a = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  auto b = Tensor::from_data({2, 1}, {3, 4});
  auto y = matmul(tape, a, b);
  EXPECT_EQ(y->shape, (std::vector<int>{2, 1}));
  EXPECT_FLOAT_EQ(y->data[0], 3);
  EXPECT_FLOAT_EQ(y->data[1], 4);
}

TEST(Matmul, HandComputed) {
  Tape tape;
  auto a = Tensor::from_data({1, 2}, {1, 2});
  auto b = Tensor::from_data({2, 1}, {3, 4});
  auto y = matmul(tape, a, b);
  ASSERT_EQ(y->numel(), 1);
  EXPECT_FLOAT_EQ(y->data[0], 11);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape tape;
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  try {
    matmul(tape, a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  CounterRng rng(11);
  auto a = gradcheck::random_tensor(rng, {4, 5});
  auto b = gradcheck::random_tensor(rng, {5, 3});
  auto rep = gradcheck::check(
      {a, b}, [&](Tape& t) { return sum_all(t, matmul(t, a, b)); },
      /*h=*/1e-3, /*rtol=*/1e-3, /*atol=*/1e-4);
  EXPECT_TRUE(rep.ok()) << rep.worst_at;
}

TEST(MaskedSoftmax, UniformOnSymmetricLogits) {
  Tape tape;
  auto p = masked_softmax(tape, vec({0, 0, 0}), {true, true, true});
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p->data[i], 1.0 / 3.0, 1e-6);
}

TEST(MaskedSoftmax, MaskedEntryExactlyZero) {
  Tape tape;
  auto p = masked_softmax(tape, vec({5, -100, 5}), {true, false, true});
  EXPECT_FLOAT_EQ(p->data[0], 0.5f);
  EXPECT_EQ(p->data[1], Real(0));
  EXPECT_FLOAT_EQ(p->data[2], 0.5f);
}

TEST(MaskedSoftmax, HandCalculatorTwoLogits) {
  Tape tape;
  auto p = masked_softmax(tape, vec({1, 2}), {true, true});
  EXPECT_NEAR(p->data[0], 0.26894, 1e-4);
  EXPECT_NEAR(p->data[1], 0.73106, 1e-4);
}

TEST(MaskedSoftmax, AllMaskedThrows) {
  Tape tape;
  EXPECT_THROW(masked_softmax(tape, vec({1, 2}), {false, false}), MaskError);
}

TEST(MaskedSoftmax, ProbabilityVectorProperty) {
  CounterRng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.range(1, 8);
    std::vector<Real> logits(n);
    std::vector<bool> mask(n);
    bool any = false;
    for (int i = 0; i < n; ++i) {
      logits[i] = static_cast<Real>(rng.uniform(-5, 5));
      mask[i] = rng.uniform() < 0.7;
      any = any || mask[i];
    }
    if (!any) mask[rng.uniform_int(n)] = true;
    Tape tape;
    auto p = masked_softmax(tape, vec(std::move(logits)), mask);
    double sum = 0;
    for (int i = 0; i < n; ++i) {
      if (!mask[i]) EXPECT_EQ(p->data[i], Real(0));
      EXPECT_GE(p->data[i], Real(0));
      sum += p->data[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  auto x = vec({1, 2, 3}, true);
  auto loss = sum_all(tape, x);
  tape.backward(loss);
  for (int i = 0; i < 3; ++i) EXPECT_FLOAT_EQ(x->grad[i], 1.0f);
}

TEST(Backward, SquareGivesTwoX) {
  Tape tape;
  auto x = vec({1, 2, 3}, true);
  auto loss = sum_all(tape, mul(tape, x, x));
  tape.backward(loss);
  EXPECT_FLOAT_EQ(x->grad[0], 2);
  EXPECT_FLOAT_EQ(x->grad[1], 4);
  EXPECT_FLOAT_EQ(x->grad[2], 6);
}

TEST(Backward, NonScalarLossThrows) {
  Tape tape;
  auto x = vec({1, 2}, true);
  auto y = mul(tape, x, x);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Backward, UnreachableTensorKeepsZeroGrad) {
  Tape tape;
  auto x = vec({1, 2}, true);
  auto unused = vec({3, 4}, true);
  auto loss = sum_all(tape, x);
  tape.backward(loss);
  EXPECT_FLOAT_EQ(unused->grad[0], 0);
  EXPECT_FLOAT_EQ(unused->grad[1], 0);
}

TEST(Backward, DeterministicReplay) {
  auto run = [] {
    CounterRng rng(42);
    auto a = gradcheck::random_tensor(rng, {3, 3});
    auto b = gradcheck::random_tensor(rng, {3, 3});
    Tape tape;
    auto loss = sum_all(tape, tanh_op(tape, matmul(tape, a, b)));
    tape.backward(loss);
    return std::make_pair(loss->data[0], a->grad);
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  EXPECT_EQ(l1, l2);
  EXPECT_EQ(g1, g2);
}

TEST(Adam, ZeroGradLeavesParamsUnchanged) {
  auto p = vec({1, 2, 3}, true);
  p->name = "p";
  AdamState st;
  st.lr = Real(0.1);
  adam_step({p}, st);
  EXPECT_FLOAT_EQ(p->data[0], 1);
  EXPECT_FLOAT_EQ(p->data[1], 2);
  EXPECT_FLOAT_EQ(p->data[2], 3);
}

TEST(Adam, FirstStepBiasCorrected) {
  // m_hat = v_hat = 1 after one unit-gradient step, so the update is lr.
  auto p = vec({0.5}, true);
  p->name = "w";
  p->grad[0] = 1;
  AdamState st;
  st.lr = Real(0.1);
  adam_step({p}, st);
  EXPECT_NEAR(p->data[0], 0.5 - 0.1, 1e-6);
}

TEST(Adam, Deterministic) {
  auto mk = [] {
    auto p = vec({1, -1}, true);
    p->name = "w";
    return p;
  };
  auto p1 = mk(), p2 = mk();
  AdamState s1, s2;
  for (int step = 0; step < 3; ++step) {
    p1->grad = {Real(0.3), Real(-0.2)};
    p2->grad = {Real(0.3), Real(-0.2)};
    adam_step({p1}, s1);
    adam_step({p2}, s2);
  }
  EXPECT_EQ(p1->data, p2->data);
}

TEST(Adam, NaNGradientNamesParameter) {
  auto p = vec({1}, true);
  p->name = "cross.w1";
  p->grad[0] = std::numeric_limits<Real>::quiet_NaN();
  AdamState st;
  try {
    adam_step({p}, st);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("cross.w1"), std::string::npos);
  }
}

// Per-op finite-difference property checks. Each op's analytic backward rule
// is compared against the central-difference oracle on random small tensors.
TEST(GradCheck, ElementwiseOps) {
  CounterRng rng(101);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = gradcheck::random_tensor(rng, {3, 4});
    auto b = gradcheck::random_tensor(rng, {3, 4});
    auto cot = gradcheck::random_tensor(rng, {3, 4}, false);

    struct Case {
      const char* name;
      std::function<TensorPtr(Tape&)> fwd;
    };
    std::vector<Case> cases = {
        {"add", [&](Tape& t) { return add(t, a, b); }},
        {"sub", [&](Tape& t) { return sub(t, a, b); }},
        {"mul", [&](Tape& t) { return mul(t, a, b); }},
        {"scale", [&](Tape& t) { return scale(t, a, Real(1.7)); }},
        {"tanh", [&](Tape& t) { return tanh_op(t, a); }},
        {"sigmoid", [&](Tape& t) { return sigmoid(t, a); }},
        {"relu", [&](Tape& t) { return relu(t, a); }},
        {"elu", [&](Tape& t) { return elu(t, a); }},
        {"leaky_relu", [&](Tape& t) { return leaky_relu(t, a, Real(0.2)); }},
        {"gelu", [&](Tape& t) { return gelu(t, a); }},
    };
    for (auto& c : cases) {
      auto rep = gradcheck::check({a, b}, [&](Tape& t) { return sum_all(t, mul(t, c.fwd(t), cot)); });
      EXPECT_TRUE(rep.ok()) << c.name << ": " << rep.worst_at;
    }
  }
}

TEST(GradCheck, LinearAlgebraOps) {
  CounterRng rng(202);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = gradcheck::random_tensor(rng, {4, 3});
    auto w = gradcheck::random_tensor(rng, {3, 5});
    auto bias = gradcheck::random_tensor(rng, {3});
    auto v3 = gradcheck::random_tensor(rng, {3});
    auto v4 = gradcheck::random_tensor(rng, {4});

    auto r1 = gradcheck::check({x, w}, [&](Tape& t) { return sum_all(t, matmul(t, x, w)); });
    EXPECT_TRUE(r1.ok()) << "matmul: " << r1.worst_at;

    auto r2 = gradcheck::check({x}, [&](Tape& t) { return sum_all(t, tanh_op(t, transpose(t, x))); });
    EXPECT_TRUE(r2.ok()) << "transpose: " << r2.worst_at;

    auto r3 = gradcheck::check({x, bias}, [&](Tape& t) {
      return sum_all(t, tanh_op(t, add_bias(t, x, bias)));
    });
    EXPECT_TRUE(r3.ok()) << "add_bias: " << r3.worst_at;

    auto r4 = gradcheck::check({x, v3}, [&](Tape& t) { return sum_all(t, tanh_op(t, matvec(t, x, v3))); });
    EXPECT_TRUE(r4.ok()) << "matvec: " << r4.worst_at;

    auto r5 = gradcheck::check({x, v4}, [&](Tape& t) { return sum_all(t, tanh_op(t, vecmat(t, v4, x))); });
    EXPECT_TRUE(r5.ok()) << "vecmat: " << r5.worst_at;

    auto r6 = gradcheck::check({v3}, [&](Tape& t) { return dot(t, v3, v3); });
    EXPECT_TRUE(r6.ok()) << "dot: " << r6.worst_at;
  }
}

TEST(GradCheck, ShapeAndGatherOps) {
  CounterRng rng(303);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = gradcheck::random_tensor(rng, {4});
    auto b = gradcheck::random_tensor(rng, {3});
    auto m1 = gradcheck::random_tensor(rng, {2, 3});
    auto m2 = gradcheck::random_tensor(rng, {2, 2});
    auto table = gradcheck::random_tensor(rng, {6, 3});

    auto r1 = gradcheck::check({a, b}, [&](Tape& t) {
      return sum_all(t, tanh_op(t, concat_vec(t, {a, b})));
    });
    EXPECT_TRUE(r1.ok()) << "concat_vec: " << r1.worst_at;

    auto r2 = gradcheck::check({m1, m2}, [&](Tape& t) {
      return sum_all(t, tanh_op(t, concat_cols(t, {m1, m2})));
    });
    EXPECT_TRUE(r2.ok()) << "concat_cols: " << r2.worst_at;

    auto r3 = gradcheck::check({a, b}, [&](Tape& t) {
      auto s1 = sum_all(t, a);
      auto s2 = dot(t, b, b);
      return sum_all(t, tanh_op(t, stack_scalars(t, {s1, s2})));
    });
    EXPECT_TRUE(r3.ok()) << "stack_scalars: " << r3.worst_at;

    std::vector<int> ids = {2, 0, 5, 2};
    auto r4 = gradcheck::check({table}, [&](Tape& t) {
      return sum_all(t, tanh_op(t, gather_rows(t, table, ids)));
    });
    EXPECT_TRUE(r4.ok()) << "gather_rows: " << r4.worst_at;

    std::vector<SparseCounts> bags = {{{0, Real(2)}, {3, Real(1)}}, {{5, Real(1)}}};
    auto r5 = gradcheck::check({table}, [&](Tape& t) {
      return sum_all(t, tanh_op(t, embed_bag(t, table, bags)));
    });
    EXPECT_TRUE(r5.ok()) << "embed_bag: " << r5.worst_at;

    auto x = gradcheck::random_tensor(rng, {5, 2});
    auto r6 = gradcheck::check({x}, [&](Tape& t) {
      return sum_all(t, tanh_op(t, window_concat(t, x, 3)));
    });
    EXPECT_TRUE(r6.ok()) << "window_concat: " << r6.worst_at;

    auto r7 = gradcheck::check({x}, [&](Tape& t) { return sum_all(t, rowmax(t, x)); });
    EXPECT_TRUE(r7.ok()) << "rowmax: " << r7.worst_at;

    auto va = gradcheck::random_tensor(rng, {3});
    auto vb = gradcheck::random_tensor(rng, {3});
    auto r8 = gradcheck::check({va, vb}, [&](Tape& t) {
      return sum_all(t, tanh_op(t, stack_rows(t, {va, vb})));
    });
    EXPECT_TRUE(r8.ok()) << "stack_rows: " << r8.worst_at;
  }
}

TEST(GradCheck, SoftmaxAndNorm) {
  CounterRng rng(404);
  for (int trial = 0; trial < 5; ++trial) {
    auto logits = gradcheck::random_tensor(rng, {5});
    std::vector<bool> mask = {true, false, true, true, false};
    auto cot = gradcheck::random_tensor(rng, {5}, false);
    auto r1 = gradcheck::check({logits}, [&](Tape& t) {
      return sum_all(t, mul(t, masked_softmax(t, logits, mask), cot));
    });
    EXPECT_TRUE(r1.ok()) << "masked_softmax: " << r1.worst_at;

    auto scores = gradcheck::random_tensor(rng, {3, 4});
    std::vector<bool> cmask = {true, true, false, true};
    auto cot2 = gradcheck::random_tensor(rng, {3, 4}, false);
    auto r2 = gradcheck::check({scores}, [&](Tape& t) {
      return sum_all(t, mul(t, masked_softmax_rows(t, scores, cmask), cot2));
    });
    EXPECT_TRUE(r2.ok()) << "masked_softmax_rows: " << r2.worst_at;

    auto x = gradcheck::random_tensor(rng, {3, 6});
    auto gamma = gradcheck::random_tensor(rng, {6});
    auto beta = gradcheck::random_tensor(rng, {6});
    auto cot3 = gradcheck::random_tensor(rng, {3, 6}, false);
    auto r3 = gradcheck::check({x, gamma, beta}, [&](Tape& t) {
      return sum_all(t, mul(t, layer_norm_rows(t, x, gamma, beta), cot3));
    });
    EXPECT_TRUE(r3.ok()) << "layer_norm_rows: " << r3.worst_at;

    auto r4 = gradcheck::check({x}, [&](Tape& t) { return mean_all(t, mul(t, x, x)); });
    EXPECT_TRUE(r4.ok()) << "mean_all: " << r4.worst_at;
  }
}
