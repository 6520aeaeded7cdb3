#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rawradar/autograd.hpp"

using namespace rawradar::ag;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(s));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Weighted sum with fixed random weights so every output element carries a
// distinct upstream gradient.
Var probe(Var y, std::uint64_t seed = 99) {
  Graph& g = *y.graph;
  return reduce_sum(mul(y, g.constant(random_tensor(y.shape(), seed))));
}

// Reference "same" convolution by direct sliding window.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int oh = (h + stride - 1) / stride, ow = (wd + stride - 1) / stride;
  const int ph = std::max(0, (oh - 1) * stride + kh - h), pw = std::max(0, (ow - 1) * stride + kw - wd);
  const int top = ph / 2, left = pw / 2;
  Tensor y({n, o, oh, ow});
  for (int s = 0; s < n; ++s)
    for (int oc = 0; oc < o; ++oc)
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx) {
          double acc = b[oc];
          for (int ic = 0; ic < c; ++ic)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const int iy = yy * stride - top + i, ix = xx * stride - left + j;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += w[((oc * c + ic) * kh + i) * kw + j] * x[((s * c + ic) * h + iy) * wd + ix];
              }
          y[((s * o + oc) * oh + yy) * ow + xx] = acc;
        }
  return y;
}

void expect_pass(const GradCheckReport& r, double tol = 1e-3) {
  EXPECT_TRUE(r.deterministic);
  EXPECT_TRUE(r.passed);
  for (const auto& e : r.entries)
    EXPECT_LT(e.max_rel_error, tol) << e.name << " idx " << e.worst_index << " analytic " << e.analytic << " numeric "
                                    << e.numeric;
}

}  // namespace

TEST(Autograd, Conv1x1IdentityKernelReturnsInput) {
  Graph g;
  const Tensor x = random_tensor({2, 3, 4, 5}, 1);
  Tensor w({3, 3, 1, 1});
  for (int i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  const Var y = conv1x1(g.constant(x), g.constant(w), g.constant(Tensor({3})));
  EXPECT_EQ(y.value().values(), x.values());
}

TEST(Autograd, DropoutIdentityCases) {
  Graph g;
  const Tensor x = random_tensor({3, 4}, 2);
  EXPECT_EQ(dropout(g.constant(x), 0.0, true, 5).value().values(), x.values());
  EXPECT_EQ(dropout(g.constant(x), 0.4, false, 5).value().values(), x.values());
}

TEST(Autograd, DropoutKeepsExpectation) {
  Graph g;
  const Tensor x({20000}, 1.0);
  const Var y = dropout(g.constant(x), 0.4, true, 17);
  double mean = 0;
  int zeros = 0;
  for (double v : y.value().values()) {
    mean += v;
    zeros += v == 0.0;
  }
  EXPECT_NEAR(mean / 20000.0, 1.0, 0.03);
  EXPECT_NEAR(zeros / 20000.0, 0.4, 0.02);
}

TEST(Autograd, Conv3x3OnRampMatchesSlidingWindow) {
  Tensor x({1, 1, 5, 5});
  for (int i = 0; i < 25; ++i) x[i] = i;
  const Tensor w = random_tensor({1, 1, 3, 3}, 3);
  const Tensor b({1}, 0.25);
  Graph g;
  const Var y = conv2d_same(g.constant(x), g.constant(w), g.constant(b));
  const Tensor ref = naive_conv(x, w, b, 1);
  ASSERT_EQ(y.shape(), ref.shape());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.value()[i], ref[i], 1e-6);
}

TEST(Autograd, ConvMultiChannelAndStrideMatchSlidingWindow) {
  for (int stride : {1, 2}) {
    const Tensor x = random_tensor({2, 3, 7, 6}, 4);
    const Tensor w = random_tensor({4, 3, 3, 3}, 5);
    const Tensor b = random_tensor({4}, 6);
    Graph g;
    const Var y = conv2d_same(g.constant(x), g.constant(w), g.constant(b), stride);
    const Tensor ref = naive_conv(x, w, b, stride);
    ASSERT_EQ(y.shape(), ref.shape());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.value()[i], ref[i], 1e-9);
  }
}

TEST(Autograd, SamePaddingHalvesWithStrideTwo) {
  const Padding p = same_padding(3, 3, 2, 2, 32, 8);
  EXPECT_EQ(p.top, 0);
  EXPECT_EQ(p.bottom, 1);
  Graph g;
  const Var y = conv2d_same(g.constant(Tensor({1, 1, 32, 8})), g.constant(Tensor({2, 1, 3, 3})),
                            g.constant(Tensor({2})), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 16, 4}));
}

TEST(Autograd, SumGradientIsOnes) {
  Graph g;
  const Var x = g.input(random_tensor({3, 4}, 7), true);
  g.backward(reduce_sum(x));
  for (double v : g.grad(x).values()) EXPECT_EQ(v, 1.0);
}

TEST(Autograd, SquareSumGradientIsTwiceInput) {
  Graph g;
  const Tensor xv = random_tensor({5}, 8);
  const Var x = g.input(xv, true);
  g.backward(reduce_sum(mul(x, x)));
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(g.grad(x)[i], 2.0 * xv[i]);
}

TEST(Autograd, BackwardTwiceAccumulatesDouble) {
  Parameter w("w", random_tensor({3, 2}, 9));
  Graph g;
  const Var x = g.input(random_tensor({4, 3}, 10), true);
  const Var loss = probe(sigmoid(matmul(x, g.param(w))));
  g.backward(loss);
  const Tensor once_w = w.grad;
  const Tensor once_x = g.grad(x);
  g.backward(loss);
  for (std::size_t i = 0; i < once_w.size(); ++i) EXPECT_DOUBLE_EQ(w.grad[i], 2.0 * once_w[i]);
  for (std::size_t i = 0; i < once_x.size(); ++i) EXPECT_DOUBLE_EQ(g.grad(x)[i], 2.0 * once_x[i]);
}

TEST(Autograd, UnreachableParameterGetsZero) {
  Parameter used("used", random_tensor({3}, 11));
  Parameter unused("unused", random_tensor({3}, 12));
  Graph g;
  g.param(unused);
  g.backward(reduce_sum(mul(g.param(used), g.param(used))));
  for (double v : unused.grad.values()) EXPECT_EQ(v, 0.0);
}

TEST(Autograd, NonScalarLossRejected) {
  Graph g;
  const Var x = g.input(Tensor({2}), true);
  EXPECT_THROW(g.backward(x), ShapeMismatch);
}

TEST(Autograd, ShapeMismatchNamesPrimitiveAndShapes) {
  Graph g;
  try {
    add(g.constant(Tensor({2, 3})), g.constant(Tensor({3, 2})));
    FAIL();
  } catch (const ShapeMismatch& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[3,2]"), std::string::npos);
  }
}

TEST(Autograd, RandomThreeLayerNetworkMatchesFiniteDifference) {
  Parameter w1("w1", random_tensor({6, 4}, 20)), b1("b1", random_tensor({6}, 21));
  Parameter w2("w2", random_tensor({5, 6}, 22)), b2("b2", random_tensor({5}, 23));
  Parameter w3("w3", random_tensor({2, 5}, 24)), b3("b3", random_tensor({2}, 25));
  const Tensor x = random_tensor({3, 4}, 26);
  auto build = [&](Graph& g) {
    Var h = elu(dense(g.constant(x), g.param(w1), g.param(b1)));
    h = sigmoid(dense(h, g.param(w2), g.param(b2)));
    return probe(dense(h, g.param(w3), g.param(b3)));
  };
  expect_pass(grad_check(build, {&w1, &b1, &w2, &b2, &w3, &b3}, 1e-4, 1e-3));
}

TEST(Autograd, SigmoidDenseStackPasses) {
  Parameter w("w", random_tensor({3, 4}, 30)), b("b", random_tensor({3}, 31));
  const Tensor x = random_tensor({2, 4}, 32);
  auto build = [&](Graph& g) { return reduce_mean(sigmoid(dense(g.constant(x), g.param(w), g.param(b)))); };
  expect_pass(grad_check(build, {&w, &b}));
}

TEST(Autograd, FreshSeededDropoutFlaggedNondeterministic) {
  Parameter w("w", random_tensor({64}, 33));
  std::random_device rd;
  auto build = [&](Graph& g) { return reduce_sum(dropout(g.param(w), 0.5, true, (std::uint64_t(rd()) << 32) | rd())); };
  const auto r = grad_check(build, {&w});
  EXPECT_FALSE(r.deterministic);
  EXPECT_FALSE(r.passed);
}

TEST(Autograd, ZeroParameterGraphGivesEmptyReport) {
  auto build = [](Graph& g) { return reduce_sum(g.constant(Tensor({3}, 1.0))); };
  const auto r = grad_check(build, {});
  EXPECT_TRUE(r.entries.empty());
  EXPECT_TRUE(r.passed);
}

TEST(Autograd, EveryPrimitivePassesGradCheck) {
  Parameter a("a", random_tensor({2, 3, 4, 4}, 40));
  Parameter b("b", random_tensor({2, 3, 4, 4}, 41));
  Parameter pos("pos", random_tensor({2, 3}, 42, 0.5, 2.0));
  Parameter m1("m1", random_tensor({3, 4}, 43)), m2("m2", random_tensor({4, 2}, 44));
  Parameter cw("cw", random_tensor({5, 3, 3, 3}, 45)), cb("cb", random_tensor({5}, 46));
  Parameter pw("pw", random_tensor({2, 3, 1, 1}, 47)), pb("pb", random_tensor({2}, 48));
  Parameter c2w("c2w", random_tensor({2, 3, 2, 2}, 49));
  Parameter lin("lin", random_tensor({3, 5}, 50)), dw("dw", random_tensor({2, 5}, 52));

  // Nudge values away from the kinks of elu and clamp.
  for (auto& v : a.value.values())
    if (std::abs(v) < 0.05) v += 0.1;
  for (auto& v : b.value.values())
    if (std::abs(std::abs(v) - 0.5) < 0.05) v += 0.1;

  const std::vector<std::pair<std::string, std::function<Var(Graph&)>>> cases = {
      {"add", [&](Graph& g) { return probe(add(g.param(a), g.param(b))); }},
      {"sub", [&](Graph& g) { return probe(sub(g.param(a), g.param(b))); }},
      {"mul", [&](Graph& g) { return probe(mul(g.param(a), g.param(b))); }},
      {"scale", [&](Graph& g) { return probe(add_scalar(scale(g.param(a), -1.7), 0.3)); }},
      {"matmul", [&](Graph& g) { return probe(matmul(g.param(m1), g.param(m2))); }},
      {"dense", [&](Graph& g) { return probe(dense(g.param(lin), g.param(dw), g.param(pb))); }},
      {"conv2d", [&](Graph& g) { return probe(conv2d_same(g.param(a), g.param(cw), g.param(cb))); }},
      {"conv2d_stride2", [&](Graph& g) { return probe(conv2d_same(g.param(a), g.param(cw), g.param(cb), 2)); }},
      {"conv2x2", [&](Graph& g) { return probe(conv2d_same(g.param(a), g.param(c2w), g.param(pb))); }},
      {"conv1x1", [&](Graph& g) { return probe(conv1x1(g.param(a), g.param(pw), g.param(pb))); }},
      {"upsample", [&](Graph& g) { return probe(upsample_nearest_x2(g.param(a))); }},
      {"concat", [&](Graph& g) { return probe(concat({g.param(a), g.param(b), g.param(a)}, 1)); }},
      {"slice", [&](Graph& g) { return probe(slice(g.param(a), 2, 1, 2)); }},
      {"reshape", [&](Graph& g) { return probe(reshape(g.param(a), {6, 16})); }},
      {"dropout", [&](Graph& g) { return probe(dropout(g.param(a), 0.4, true, 1234)); }},
      {"sigmoid", [&](Graph& g) { return probe(sigmoid(g.param(a))); }},
      {"exp", [&](Graph& g) { return probe(exp(g.param(a))); }},
      {"log", [&](Graph& g) { return probe(log(g.param(pos))); }},
      {"elu", [&](Graph& g) { return probe(elu(g.param(a))); }},
      {"clamp", [&](Graph& g) { return probe(clamp(g.param(b), -0.5, 0.5)); }},
      {"reduce_sum", [&](Graph& g) { return scale(reduce_sum(g.param(a)), 0.7); }},
      {"reduce_mean", [&](Graph& g) { return reduce_mean(mul(g.param(a), g.param(a))); }},
      {"squared_distance", [&](Graph& g) { return squared_distance(g.param(a), random_tensor({2, 3, 4, 4}, 51)); }},
      {"focal",
       [&](Graph& g) {
         Tensor y({2, 3, 4, 4});
         for (std::size_t i = 0; i < y.size(); i += 3) y[i] = 1.0;
         return focal_loss(sigmoid(g.param(a)), y, 2.0, 0.25);
       }},
  };
  for (const auto& [name, build] : cases) {
    SCOPED_TRACE(name);
    expect_pass(grad_check(build, {&a, &b, &pos, &m1, &m2, &cw, &cb, &pw, &pb, &c2w, &lin, &dw}, 1e-5, 1e-3));
  }
}

TEST(Autograd, ForwardIsBitDeterministic) {
  const Tensor x = random_tensor({2, 3, 8, 4}, 60);
  Parameter w("w", random_tensor({4, 3, 3, 3}, 61)), b("b", random_tensor({4}, 62));
  auto run = [&] {
    Graph g;
    return dropout(elu(conv2d_same(g.constant(x), g.param(w), g.param(b), 2)), 0.4, true, 7).value().values();
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter p("p", random_tensor({4}, 70));
  const Tensor before = p.value;
  AdamState st;
  for (int i = 0; i < 5; ++i) adam_step(p, st, {});
  EXPECT_EQ(p.value.values(), before.values());
}

TEST(Adam, ZeroLearningRateIsIdentity) {
  Parameter p("p", random_tensor({4}, 71));
  p.grad = random_tensor({4}, 72);
  const Tensor before = p.value;
  AdamState st;
  AdamConfig cfg;
  cfg.lr = 0.0;
  adam_step(p, st, cfg);
  EXPECT_EQ(p.value.values(), before.values());
}

TEST(Adam, ConstantGradientStepsApproachLearningRate) {
  Parameter p("p", Tensor({2}, 0.0));
  p.grad = Tensor({2}, std::vector<double>{3.0, -0.01});
  AdamState st;
  AdamConfig cfg;
  cfg.lr = 1e-2;
  for (int i = 0; i < 200; ++i) {
    const Tensor before = p.value;
    adam_step(p, st, cfg);
    EXPECT_NEAR(p.value[0] - before[0], -cfg.lr, 1e-8);
    EXPECT_NEAR(p.value[1] - before[1], cfg.lr, 1e-5);
  }
}

TEST(Adam, NanGradientNamesParameter) {
  Parameter p("enc0.conv1.w", Tensor({3}));
  p.grad[1] = std::nan("");
  AdamState st;
  try {
    adam_step(p, st, {});
    FAIL();
  } catch (const NonFiniteGradient& e) {
    EXPECT_NE(std::string(e.what()).find("enc0.conv1.w"), std::string::npos);
  }
  EXPECT_EQ(p.value[0], 0.0);
}
