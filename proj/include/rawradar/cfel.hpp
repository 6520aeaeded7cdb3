#pragma once

#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include "rawradar/autograd.hpp"
#include "rawradar/frame.hpp"
#include "rawradar/radar_config.hpp"

namespace rawradar {

// Learnable complex-exponential filter bank. Kernel k = i * n_st + j owns the
// normalized frequency pair (f_ft[k], f_st[k]) in cycles per sample, [0, 1).
struct CfelParams {
  int n_ft = 128;
  int n_st = 32;
  int kernel_ft = 256;  // M, fast-time samples
  int kernel_st = 32;   // N, chirps
  double fs_ft = 1.0;   // Hz
  double fs_st = 1.0;   // Hz
  std::vector<double> f_ft;
  std::vector<double> f_st;

  int kernel_count() const { return n_ft * n_st; }
  int kernel_index(int i, int j) const { return i * n_st + j; }
  void validate() const;
};

// Fast-time frequencies i / (2 n_ft), slow-time j / n_st, paired over the
// Cartesian product.
CfelParams init_grid(int n_ft = 128, int n_st = 32, int kernel_ft = 256, int kernel_st = 32, double fs_ft = 1.0,
                     double fs_st = 1.0);
// Grid sized to the configured range x angle image.
CfelParams init_grid(const RadarConfig& cfg);

// Wraps every frequency into [0, 1).
void wrap_frequencies(CfelParams& p);
void wrap_frequencies(std::vector<double>& f);

// [n_ft, n_st, n_rx, 2], last axis (real, imaginary).
struct CfelOutput {
  int n_ft = 0;
  int n_st = 0;
  int n_rx = 0;
  std::vector<double> values;

  CfelOutput() = default;
  CfelOutput(int a, int b, int c) : n_ft(a), n_st(b), n_rx(c), values(std::size_t(a) * b * c * 2, 0.0) {}
  std::size_t index(int i, int j, int rx, int part) const {
    return ((std::size_t(i) * n_st + j) * n_rx + rx) * 2 + part;
  }
  double& at(int i, int j, int rx, int part) { return values[index(i, j, rx, part)]; }
  double at(int i, int j, int rx, int part) const { return values[index(i, j, rx, part)]; }
  std::complex<double> complex_at(int i, int j, int rx) const { return {at(i, j, rx, 0), at(i, j, rx, 1)}; }
};

CfelOutput cfel_forward(const Frame& frame, const CfelParams& params);

struct CfelGrads {
  std::vector<double> d_ft;
  std::vector<double> d_st;
  std::vector<double> d_input;  // frame layout
};

// Gradients of sum(upstream * output) with respect to the frequencies and
// the input samples.
CfelGrads cfel_backward(const Frame& frame, const CfelParams& params, const CfelOutput& upstream);

// Autodiff layer. x [B, A, N, M] (chirp-major, fast time fastest) with
// frequency parameters of shape [n_ft * n_st] -> [B * A, 2, n_ft, n_st].
ag::Var cfel_layer(ag::Var x, ag::Var f_ft, ag::Var f_st, int n_ft, int n_st);

// CSV with header "kernel,f_ft,f_st", normalized frequencies.
void export_frequencies_csv(const std::filesystem::path& path, const CfelParams& params);
// Replaces the frequency tables of `params`; count must match.
void import_frequencies_csv(const std::filesystem::path& path, CfelParams& params);

}  // namespace rawradar
