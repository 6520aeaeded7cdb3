#include "rawradar/checks.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "rawradar/cfel.hpp"

namespace rawradar {

using namespace ag;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(s));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

}  // namespace

std::vector<NamedReport> primitive_grad_checks(std::uint64_t seed, double tolerance) {
  std::mt19937_64 rng(seed);
  Parameter a("a", random_tensor({2, 3, 4, 4}, rng));
  Parameter b("b", random_tensor({2, 3, 4, 4}, rng));
  Parameter pos("pos", random_tensor({2, 3}, rng, 0.5, 2.0));
  Parameter m1("m1", random_tensor({3, 4}, rng)), m2("m2", random_tensor({4, 2}, rng));
  Parameter cw("cw", random_tensor({5, 3, 3, 3}, rng)), cb("cb", random_tensor({5}, rng));
  Parameter pw("pw", random_tensor({2, 3, 1, 1}, rng)), pb("pb", random_tensor({2}, rng));
  Parameter c2w("c2w", random_tensor({2, 3, 2, 2}, rng));
  Parameter lin("lin", random_tensor({3, 5}, rng)), dw("dw", random_tensor({2, 5}, rng));
  const Tensor target = random_tensor({2, 3, 4, 4}, rng);

  // Keep values away from the kinks of elu and clamp.
  for (auto& v : a.value.values())
    if (std::abs(v) < 0.05) v += 0.1;
  for (auto& v : b.value.values())
    if (std::abs(std::abs(v) - 0.5) < 0.05) v += 0.1;

  auto probe = [](Var y) {
    Graph& g = *y.graph;
    Tensor w(y.shape());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.7 * double(i) + 0.3);
    return reduce_sum(mul(y, g.constant(w)));
  };
  Tensor y({2, 3, 4, 4});
  for (std::size_t i = 0; i < y.size(); i += 3) y[i] = 1.0;

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
      {"dropout", [&](Graph& g) { return probe(dropout(g.param(a), 0.4, true, seed + 1)); }},
      {"sigmoid", [&](Graph& g) { return probe(sigmoid(g.param(a))); }},
      {"exp", [&](Graph& g) { return probe(exp(g.param(a))); }},
      {"log", [&](Graph& g) { return probe(log(g.param(pos))); }},
      {"elu", [&](Graph& g) { return probe(elu(g.param(a))); }},
      {"clamp", [&](Graph& g) { return probe(clamp(g.param(b), -0.5, 0.5)); }},
      {"reduce_sum", [&](Graph& g) { return scale(reduce_sum(g.param(a)), 0.7); }},
      {"reduce_mean", [&](Graph& g) { return reduce_mean(mul(g.param(a), g.param(a))); }},
      {"squared_distance", [&](Graph& g) { return squared_distance(g.param(a), target); }},
      {"focal", [&](Graph& g) { return focal_loss(sigmoid(g.param(a)), y, 2.0, 0.25); }},
  };
  std::vector<NamedReport> out;
  for (const auto& [name, build] : cases)
    out.emplace_back(name, grad_check(build, {&a, &b, &pos, &m1, &m2, &cw, &cb, &pw, &pb, &c2w, &lin, &dw}, 1e-5,
                                      tolerance));
  return out;
}

GradCheckReport cfel_grad_check(std::uint64_t seed, double tolerance) {
  const int n_ft = 8, n_st = 8, m = 32, n = 16, n_rx = 2;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor fft({n_ft * n_st}), fst({n_ft * n_st});
  for (auto& v : fft.values()) v = u(rng);
  for (auto& v : fst.values()) v = u(rng);
  Parameter pft("cfel.f_ft", fft), pst("cfel.f_st", fst);
  Parameter xin("x", random_tensor({1, n_rx, n, m}, rng));
  const Tensor w = random_tensor({n_rx, 2, n_ft, n_st}, rng);
  auto build = [&](Graph& g) {
    const Var y = cfel_layer(g.param(xin), g.param(pft), g.param(pst), n_ft, n_st);
    return reduce_sum(mul(sigmoid(scale(y, 0.1)), g.constant(w)));
  };
  return grad_check(build, {&pft, &pst, &xin}, 1e-6, tolerance);
}

GradCheckReport model_grad_check(const ArchConfig& arch, std::uint64_t seed, double tolerance,
                                 std::size_t per_param) {
  Model model = build_model(arch, seed);
  Model ref = model;
  for (auto& p : ref.params)
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] *= 1.0 + 0.05 * std::sin(double(i));
  std::mt19937_64 rng(seed + 1);
  const int batch = 2;
  Tensor x = random_tensor({batch, arch.n_rx, arch.frame_chirps, arch.frame_samples}, rng, 0.0, 1.0);
  Tensor labels({batch, 1, arch.n_ft, arch.n_st});
  std::bernoulli_distribution on(0.1);
  for (auto& v : labels.values()) v = on(rng) ? 1.0 : 0.0;
  LossWeights w;
  w.beta = 0.5;
  auto build = [&](Graph& g) {
    const ForwardResult fr = forward(model, g, g.input(x), {true, seed + 2});
    return total_loss(g, fr, labels, model, &ref, w).total;
  };
  return grad_check(build, model.parameter_list(), 1e-6, tolerance, 1e-6, per_param);
}

}  // namespace rawradar
