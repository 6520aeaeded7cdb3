#include "rawradar/cfel.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rawradar/dataset_io.hpp"

namespace rawradar {

using cplx = std::complex<double>;

void CfelParams::validate() const {
  if (n_ft < 1 || n_st < 1 || kernel_ft < 1 || kernel_st < 1)
    throw ConfigError("cfel: grid and kernel sizes must be positive");
  if (!(fs_ft > 0) || !(fs_st > 0)) throw ConfigError("cfel: sampling rates must be positive");
  if (f_ft.size() != std::size_t(kernel_count()) || f_st.size() != std::size_t(kernel_count()))
    throw ConfigError("cfel: expected " + std::to_string(kernel_count()) + " frequency pairs, got " +
                      std::to_string(f_ft.size()) + "/" + std::to_string(f_st.size()));
  for (std::size_t k = 0; k < f_ft.size(); ++k)
    if (!std::isfinite(f_ft[k]) || !std::isfinite(f_st[k]))
      throw ConfigError("cfel: non-finite frequency at kernel " + std::to_string(k));
}

CfelParams init_grid(int n_ft, int n_st, int kernel_ft, int kernel_st, double fs_ft, double fs_st) {
  CfelParams p;
  p.n_ft = n_ft;
  p.n_st = n_st;
  p.kernel_ft = kernel_ft;
  p.kernel_st = kernel_st;
  p.fs_ft = fs_ft;
  p.fs_st = fs_st;
  if (n_ft < 1 || n_st < 1) throw ConfigError("cfel: grid sizes must be positive");
  p.f_ft.resize(std::size_t(n_ft) * n_st);
  p.f_st.resize(std::size_t(n_ft) * n_st);
  for (int i = 0; i < n_ft; ++i)
    for (int j = 0; j < n_st; ++j) {
      p.f_ft[p.kernel_index(i, j)] = double(i) / (2.0 * n_ft);
      p.f_st[p.kernel_index(i, j)] = double(j) / double(n_st);
    }
  p.validate();
  return p;
}

CfelParams init_grid(const RadarConfig& cfg) {
  return init_grid(cfg.n_range_bins, cfg.n_angle_bins, cfg.n_samples, cfg.n_chirps, cfg.n_samples / cfg.chirp_time,
                   1.0 / cfg.chirp_repetition);
}

void wrap_frequencies(std::vector<double>& f) {
  for (auto& v : f) {
    v -= std::floor(v);
    if (v >= 1.0) v = 0.0;
  }
}

void wrap_frequencies(CfelParams& p) {
  wrap_frequencies(p.f_ft);
  wrap_frequencies(p.f_st);
}

namespace {

void phasors(double f, int n, std::vector<cplx>& out) {
  out.resize(n);
  for (int m = 0; m < n; ++m) {
    double t = f * m;
    t -= std::floor(t);
    out[m] = std::polar(1.0, -2.0 * kPi * t);
  }
}

// x: S slices of [N][M]; result [S][K].
std::vector<cplx> bank_forward(const double* x, int slices, int M, int N, const double* f_ft, const double* f_st,
                               int K) {
  std::vector<cplx> res(std::size_t(slices) * K);
  std::vector<cplx> p, q;
  for (int k = 0; k < K; ++k) {
    phasors(f_ft[k], M, p);
    phasors(f_st[k], N, q);
    for (int s = 0; s < slices; ++s) {
      const double* xs = x + std::size_t(s) * M * N;
      cplx acc = 0;
      for (int n = 0; n < N; ++n) {
        const double* row = xs + std::size_t(n) * M;
        cplx y = 0;
        for (int m = 0; m < M; ++m) y += row[m] * p[m];
        acc += q[n] * y;
      }
      res[std::size_t(s) * K + k] = acc;
    }
  }
  return res;
}

// g: upstream dL/dRe + j dL/dIm per [S][K]. Accumulates into d_ft, d_st and,
// when non-null, dx.
void bank_backward(const double* x, int slices, int M, int N, const double* f_ft, const double* f_st, int K,
                   const cplx* g, double* d_ft, double* d_st, double* dx) {
  std::vector<cplx> p, q;
  const cplx minus_j2pi(0.0, -2.0 * kPi);
  for (int k = 0; k < K; ++k) {
    phasors(f_ft[k], M, p);
    phasors(f_st[k], N, q);
    for (int s = 0; s < slices; ++s) {
      const cplx gc = std::conj(g[std::size_t(s) * K + k]);
      if (gc == cplx(0.0)) continue;
      const double* xs = x + std::size_t(s) * M * N;
      cplx dnu = 0, deta = 0;
      for (int n = 0; n < N; ++n) {
        const double* row = xs + std::size_t(n) * M;
        cplx y = 0, ym = 0;
        for (int m = 0; m < M; ++m) {
          const cplx t = row[m] * p[m];
          y += t;
          ym += double(m) * t;
        }
        dnu += q[n] * ym;
        deta += double(n) * q[n] * y;
      }
      d_ft[k] += std::real(gc * minus_j2pi * dnu);
      d_st[k] += std::real(gc * minus_j2pi * deta);
      if (dx) {
        double* dxs = dx + std::size_t(s) * M * N;
        for (int n = 0; n < N; ++n) {
          const cplx gq = gc * q[n];
          double* row = dxs + std::size_t(n) * M;
          for (int m = 0; m < M; ++m) row[m] += std::real(gq * p[m]);
        }
      }
    }
  }
}

void check_frame(const Frame& frame, const CfelParams& params) {
  params.validate();
  if (frame.n_samples != params.kernel_ft || frame.n_chirps != params.kernel_st)
    throw ShapeError("cfel: frame " + frame.shape_string() + " does not match kernel length " +
                     std::to_string(params.kernel_ft) + "x" + std::to_string(params.kernel_st));
}

}  // namespace

CfelOutput cfel_forward(const Frame& frame, const CfelParams& params) {
  check_frame(frame, params);
  const std::vector<double> x(frame.samples.begin(), frame.samples.end());
  const int K = params.kernel_count();
  const auto res = bank_forward(x.data(), frame.n_rx, params.kernel_ft, params.kernel_st, params.f_ft.data(),
                                params.f_st.data(), K);
  CfelOutput out(params.n_ft, params.n_st, frame.n_rx);
  for (int rx = 0; rx < frame.n_rx; ++rx)
    for (int i = 0; i < params.n_ft; ++i)
      for (int j = 0; j < params.n_st; ++j) {
        const cplx v = res[std::size_t(rx) * K + params.kernel_index(i, j)];
        out.at(i, j, rx, 0) = v.real();
        out.at(i, j, rx, 1) = v.imag();
      }
  return out;
}

CfelGrads cfel_backward(const Frame& frame, const CfelParams& params, const CfelOutput& upstream) {
  check_frame(frame, params);
  if (upstream.n_ft != params.n_ft || upstream.n_st != params.n_st || upstream.n_rx != frame.n_rx)
    throw ShapeError("cfel: upstream gradient shape does not match the output");
  const std::vector<double> x(frame.samples.begin(), frame.samples.end());
  const int K = params.kernel_count();
  std::vector<cplx> g(std::size_t(frame.n_rx) * K);
  for (int rx = 0; rx < frame.n_rx; ++rx)
    for (int i = 0; i < params.n_ft; ++i)
      for (int j = 0; j < params.n_st; ++j)
        g[std::size_t(rx) * K + params.kernel_index(i, j)] = upstream.complex_at(i, j, rx);
  CfelGrads out;
  out.d_ft.assign(K, 0.0);
  out.d_st.assign(K, 0.0);
  out.d_input.assign(x.size(), 0.0);
  bank_backward(x.data(), frame.n_rx, params.kernel_ft, params.kernel_st, params.f_ft.data(), params.f_st.data(), K,
                g.data(), out.d_ft.data(), out.d_st.data(), out.d_input.data());
  return out;
}

ag::Var cfel_layer(ag::Var x, ag::Var f_ft, ag::Var f_st, int n_ft, int n_st) {
  const auto& xs = x.shape();
  const int K = n_ft * n_st;
  if (xs.size() != 4 || f_ft.shape() != ag::Shape{K} || f_st.shape() != ag::Shape{K})
    throw ag::ShapeMismatch("cfel: input " + ag::shape_str(xs) + ", frequencies " + ag::shape_str(f_ft.shape()) + "/" +
                            ag::shape_str(f_st.shape()) + " for grid " + std::to_string(n_ft) + "x" +
                            std::to_string(n_st));
  const int slices = xs[0] * xs[1], N = xs[2], M = xs[3];
  const auto res = bank_forward(x.value().data(), slices, M, N, f_ft.value().data(), f_st.value().data(), K);
  ag::Tensor out({slices, 2, n_ft, n_st});
  for (int s = 0; s < slices; ++s)
    for (int k = 0; k < K; ++k) {
      out[(std::size_t(s) * 2 + 0) * K + k] = res[std::size_t(s) * K + k].real();
      out[(std::size_t(s) * 2 + 1) * K + k] = res[std::size_t(s) * K + k].imag();
    }
  const int xi = x.id, fi = f_ft.id, si = f_st.id;
  return x.graph->op("cfel", {x, f_ft, f_st}, std::move(out), [xi, fi, si, slices, M, N, K](ag::Graph& g, int self) {
    const ag::Tensor& gy = g.grad(self);
    std::vector<cplx> gc(std::size_t(slices) * K);
    for (int s = 0; s < slices; ++s)
      for (int k = 0; k < K; ++k)
        gc[std::size_t(s) * K + k] = {gy[(std::size_t(s) * 2 + 0) * K + k], gy[(std::size_t(s) * 2 + 1) * K + k]};
    std::vector<double> d_ft(K, 0.0), d_st(K, 0.0);
    double* dx = g.requires_grad(xi) ? g.grad_buffer(xi).data() : nullptr;
    bank_backward(g.value(xi).data(), slices, M, N, g.value(fi).data(), g.value(si).data(), K, gc.data(), d_ft.data(),
                  d_st.data(), dx);
    if (g.requires_grad(fi)) {
      auto& b = g.grad_buffer(fi);
      for (int k = 0; k < K; ++k) b[k] += d_ft[k];
    }
    if (g.requires_grad(si)) {
      auto& b = g.grad_buffer(si);
      for (int k = 0; k < K; ++k) b[k] += d_st[k];
    }
  });
}

void export_frequencies_csv(const std::filesystem::path& path, const CfelParams& params) {
  params.validate();
  std::ostringstream out;
  out << "kernel,f_ft,f_st\n" << std::setprecision(17);
  for (int k = 0; k < params.kernel_count(); ++k) out << k << "," << params.f_ft[k] << "," << params.f_st[k] << "\n";
  const std::string text = out.str();
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void import_frequencies_csv(const std::filesystem::path& path, CfelParams& params) {
  std::ifstream in(path);
  if (!in) throw StorageError(StorageErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "kernel,f_ft,f_st")
    throw StorageError(StorageErrorKind::Format, path.string() + ": missing header kernel,f_ft,f_st");
  const int K = params.kernel_count();
  std::vector<double> f_ft(K), f_st(K);
  std::vector<char> seen(K, 0);
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    int k;
    double a, b;
    char c1, c2;
    if (!(row >> k >> c1 >> a >> c2 >> b) || c1 != ',' || c2 != ',' || k < 0 || k >= K || seen[k])
      throw StorageError(StorageErrorKind::Format, path.string() + ": bad row '" + line + "'");
    seen[k] = 1;
    f_ft[k] = a;
    f_st[k] = b;
    ++rows;
  }
  if (rows != K)
    throw StorageError(StorageErrorKind::Integrity,
                       path.string() + ": " + std::to_string(rows) + " rows, expected " + std::to_string(K));
  params.f_ft = std::move(f_ft);
  params.f_st = std::move(f_st);
  params.validate();
}

}  // namespace rawradar
