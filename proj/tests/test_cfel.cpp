#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <random>

#include "rawradar/cfel.hpp"
#include "rawradar/dataset_io.hpp"

using namespace rawradar;
using cplx = std::complex<double>;

namespace {

Frame random_frame(int M, int N, int A, std::uint64_t seed) {
  Frame f(M, N, A);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  // Multiples of 1/1024 keep small integer combinations exact in float.
  for (auto& v : f.samples) v = std::round(u(rng) * 1024.0f) / 1024.0f;
  return f;
}

// Direct 2D DFT with exact integer twiddle indexing.
cplx dft_bin(const Frame& f, int rx, int k, int l) {
  const int M = f.n_samples, N = f.n_chirps;
  cplx acc = 0;
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < M; ++m) {
      const long num = long(k) * m * N + long(l) * n * M;
      const double turns = double(num % (long(M) * N)) / double(long(M) * N);
      acc += double(f.at(m, n, rx)) * std::polar(1.0, -2.0 * kPi * turns);
    }
  return acc;
}

double loss_of(const Frame& f, const CfelParams& p, const CfelOutput& up) {
  const CfelOutput out = cfel_forward(f, p);
  double s = 0;
  for (std::size_t i = 0; i < out.values.size(); ++i) s += out.values[i] * up.values[i];
  return s;
}

}  // namespace

TEST(Cfel, DefaultGridHas4096KernelsAndHalfRateFastTimeStep) {
  const CfelParams p = init_grid();
  EXPECT_EQ(p.kernel_count(), 4096);
  EXPECT_DOUBLE_EQ(p.f_ft[p.kernel_index(1, 0)] - p.f_ft[p.kernel_index(0, 0)], 1.0 / 256.0);
  EXPECT_DOUBLE_EQ(p.f_st[p.kernel_index(0, 1)], 1.0 / 32.0);
  EXPECT_DOUBLE_EQ(p.f_ft[p.kernel_index(127, 0)], 127.0 / 256.0);
  EXPECT_DOUBLE_EQ(p.f_st[p.kernel_index(0, 31)], 31.0 / 32.0);
}

TEST(Cfel, DcKernelSumsTheFrame) {
  const CfelParams p = init_grid(4, 4, 16, 8);
  const Frame f = random_frame(16, 8, 2, 1);
  const CfelOutput out = cfel_forward(f, p);
  for (int rx = 0; rx < 2; ++rx) {
    double s = 0;
    for (float v : f.antenna(rx)) s += v;
    EXPECT_NEAR(out.at(0, 0, rx, 0), s, 1e-9);
    EXPECT_NEAR(out.at(0, 0, rx, 1), 0.0, 1e-9);
  }
}

TEST(Cfel, HarmonicInitMatchesDirectDftOnFullGrid) {
  const CfelParams p = init_grid();
  const Frame f = random_frame(256, 32, 1, 2);
  const CfelOutput out = cfel_forward(f, p);
  double worst = 0;
  for (int i = 0; i < 128; i += 9)
    for (int j = 0; j < 32; j += 3) {
      const cplx ref = dft_bin(f, 0, i, j);
      const cplx got = out.complex_at(i, j, 0);
      worst = std::max(worst, std::abs(std::abs(got) - std::abs(ref)) / std::abs(ref));
      EXPECT_LT(std::abs(got - ref), 1e-6 * std::abs(ref) + 1e-9);
    }
  EXPECT_LT(worst, 1e-5);
}

TEST(Cfel, DeskGridSamplesEverySecondSlowTimeBin) {
  const CfelParams p = init_grid(32, 8, 64, 16);
  const Frame f = random_frame(64, 16, 2, 3);
  const CfelOutput out = cfel_forward(f, p);
  for (int rx = 0; rx < 2; ++rx)
    for (int i = 0; i < 32; i += 5)
      for (int j = 0; j < 8; ++j) {
        const cplx ref = dft_bin(f, rx, i, 2 * j);
        EXPECT_LT(std::abs(out.complex_at(i, j, rx) - ref), 1e-6 * std::abs(ref) + 1e-9);
      }
}

TEST(Cfel, GridCosinePeaksAtItsKernel) {
  const CfelParams p = init_grid(16, 8, 32, 8);
  const int k = 5, l = 3;
  Frame f(32, 8, 1);
  for (int n = 0; n < 8; ++n)
    for (int m = 0; m < 32; ++m) f.at(m, n, 0) = float(std::cos(2.0 * kPi * (k * m / 32.0 + l * n / 8.0)));
  const CfelOutput out = cfel_forward(f, p);
  int bi = -1, bj = -1;
  double best = -1;
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 8; ++j)
      if (std::abs(out.complex_at(i, j, 0)) > best) {
        best = std::abs(out.complex_at(i, j, 0));
        bi = i;
        bj = j;
      }
  EXPECT_EQ(bi, k);
  EXPECT_EQ(bj, l);
}

TEST(Cfel, ZeroFrameGivesZeroOutputAndZeroGradients) {
  const CfelParams p = init_grid(8, 4, 16, 8);
  const Frame f(16, 8, 2);
  const CfelOutput out = cfel_forward(f, p);
  for (double v : out.values) EXPECT_EQ(v, 0.0);
  CfelOutput up(8, 4, 2);
  for (auto& v : up.values) v = 1.0;
  const CfelGrads g = cfel_backward(f, p, up);
  for (double v : g.d_ft) EXPECT_EQ(v, 0.0);
  for (double v : g.d_st) EXPECT_EQ(v, 0.0);
}

TEST(Cfel, OutputIsLinearInFrame) {
  const CfelParams p = init_grid(8, 4, 16, 8);
  const Frame a = random_frame(16, 8, 2, 4), b = random_frame(16, 8, 2, 5);
  Frame c(16, 8, 2);
  for (std::size_t i = 0; i < c.samples.size(); ++i) c.samples[i] = 2.0f * a.samples[i] - b.samples[i];
  const auto oa = cfel_forward(a, p), ob = cfel_forward(b, p), oc = cfel_forward(c, p);
  for (std::size_t i = 0; i < oc.values.size(); ++i) EXPECT_NEAR(oc.values[i], 2.0 * oa.values[i] - ob.values[i], 1e-9);
}

TEST(Cfel, FrequencyGradientsMatchFiniteDifferenceOnRandomKernels) {
  CfelParams p = init_grid(8, 8, 32, 16);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : p.f_ft) v = u(rng);
  for (auto& v : p.f_st) v = u(rng);
  const Frame f = random_frame(32, 16, 2, 7);
  CfelOutput up(8, 8, 2);
  for (auto& v : up.values) v = 1.0;
  const CfelGrads g = cfel_backward(f, p, up);
  std::uniform_int_distribution<int> pick(0, p.kernel_count() - 1);
  const double eps = 1e-7;
  for (int trial = 0; trial < 20; ++trial) {
    const int k = pick(rng);
    for (auto* table : {&p.f_ft, &p.f_st}) {
      const double orig = (*table)[k];
      (*table)[k] = orig + eps;
      const double hi = loss_of(f, p, up);
      (*table)[k] = orig - eps;
      const double lo = loss_of(f, p, up);
      (*table)[k] = orig;
      const double numeric = (hi - lo) / (2 * eps);
      const double analytic = table == &p.f_ft ? g.d_ft[k] : g.d_st[k];
      EXPECT_LT(std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6}), 1e-4)
          << "kernel " << k;
    }
  }
}

TEST(Cfel, MatchedToneMagnitudeIsStationary) {
  const CfelParams p = init_grid(16, 8, 32, 8);
  const int k = 5, l = 3;
  Frame f(32, 8, 1);
  for (int n = 0; n < 8; ++n)
    for (int m = 0; m < 32; ++m) f.at(m, n, 0) = float(std::cos(2.0 * kPi * (k * m / 32.0 + l * n / 8.0)));
  const CfelOutput out = cfel_forward(f, p);
  CfelOutput up(16, 8, 1);
  const int kk = p.kernel_index(k, l);
  up.at(k, l, 0, 0) = 2.0 * out.at(k, l, 0, 0);
  up.at(k, l, 0, 1) = 2.0 * out.at(k, l, 0, 1);
  const CfelGrads g = cfel_backward(f, p, up);
  const double peak = std::norm(out.complex_at(k, l, 0));
  EXPECT_GT(peak, 1.0);
  EXPECT_LT(std::abs(g.d_ft[kk]), 1e-6 * peak);
  EXPECT_LT(std::abs(g.d_st[kk]), 1e-6 * peak);
}

TEST(Cfel, WrappingKeepsFrequenciesInUnitInterval) {
  std::vector<double> f{-0.25, 1.0, 1.75, 0.5, -1e-18};
  wrap_frequencies(f);
  for (double v : f) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_DOUBLE_EQ(f[0], 0.75);
  EXPECT_DOUBLE_EQ(f[2], 0.75);
}

TEST(Cfel, LayerMatchesForwardAndPassesGradCheck) {
  const CfelParams p0 = init_grid(4, 4, 8, 8);
  const Frame f = random_frame(8, 8, 2, 8);
  ag::Tensor x({1, 2, 8, 8});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = f.samples[i];
  ag::Parameter fft("cfel.f_ft", ag::Tensor({16}, p0.f_ft)), fst("cfel.f_st", ag::Tensor({16}, p0.f_st));
  {
    ag::Graph g;
    const ag::Var y = cfel_layer(g.constant(x), g.param(fft), g.param(fst), 4, 4);
    ASSERT_EQ(y.shape(), (ag::Shape{2, 2, 4, 4}));
    const CfelOutput ref = cfel_forward(f, p0);
    for (int rx = 0; rx < 2; ++rx)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          for (int part = 0; part < 2; ++part)
            EXPECT_NEAR(y.value()[((rx * 2 + part) * 4 + i) * 4 + j], ref.at(i, j, rx, part), 1e-12);
  }
  ag::Parameter xin("x", x);
  ag::Tensor w({2, 2, 4, 4});
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  for (auto& v : w.values()) v = nd(rng);
  auto build = [&](ag::Graph& g) {
    const ag::Var y = cfel_layer(g.param(xin), g.param(fft), g.param(fst), 4, 4);
    return ag::reduce_sum(ag::mul(ag::sigmoid(ag::scale(y, 0.1)), g.constant(w)));
  };
  const auto r = ag::grad_check(build, {&fft, &fst, &xin}, 1e-6, 1e-4);
  EXPECT_TRUE(r.passed) << "worst " << r.worst();
}

TEST(Cfel, CsvRoundTripIsExact) {
  CfelParams p = init_grid(4, 4, 8, 8);
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : p.f_ft) v = u(rng);
  const auto path = std::filesystem::temp_directory_path() / "rawradar_cfel_freqs.csv";
  export_frequencies_csv(path, p);
  CfelParams q = init_grid(4, 4, 8, 8);
  import_frequencies_csv(path, q);
  EXPECT_EQ(q.f_ft, p.f_ft);
  EXPECT_EQ(q.f_st, p.f_st);
  CfelParams wrong = init_grid(2, 2, 8, 8);
  EXPECT_THROW(import_frequencies_csv(path, wrong), StorageError);
  std::filesystem::remove(path);
}

TEST(Cfel, FrameShapeMismatchRejected) {
  const CfelParams p = init_grid(4, 4, 8, 8);
  EXPECT_THROW(cfel_forward(Frame(16, 8, 1), p), ShapeError);
}
