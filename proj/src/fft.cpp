#include "rawradar/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "rawradar/radar_config.hpp"

namespace rawradar {

namespace {

// FFTW planning is not thread-safe.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class Plan {
 public:
  Plan(int n, int sign) : n_(n) {
    buf_ = fftw_alloc_complex(n);
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_1d(n, buf_, buf_, sign, FFTW_ESTIMATE);
  }
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(buf_);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;

  void run(std::span<cplx> data) {
    auto* raw = reinterpret_cast<fftw_complex*>(data.data());
    for (int i = 0; i < n_; ++i) {
      buf_[i][0] = raw[i][0];
      buf_[i][1] = raw[i][1];
    }
    fftw_execute(plan_);
    for (int i = 0; i < n_; ++i) {
      raw[i][0] = buf_[i][0];
      raw[i][1] = buf_[i][1];
    }
  }

 private:
  int n_;
  fftw_complex* buf_ = nullptr;
  fftw_plan plan_ = nullptr;
};

Plan& plan_for(int n, int sign) {
  thread_local std::map<std::pair<int, int>, std::unique_ptr<Plan>> cache;
  auto& slot = cache[{n, sign}];
  if (!slot) slot = std::make_unique<Plan>(n, sign);
  return *slot;
}

}  // namespace

void fft(std::span<cplx> data) {
  if (data.empty()) return;
  plan_for(int(data.size()), FFTW_FORWARD).run(data);
}

void ifft(std::span<cplx> data) {
  if (data.empty()) return;
  plan_for(int(data.size()), FFTW_BACKWARD).run(data);
  const double scale = 1.0 / double(data.size());
  for (auto& v : data) v *= scale;
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(n, 1.0);
  if (n == 1) return w;
  // Periodic form.
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

std::vector<double> rect_window(int n) { return std::vector<double>(n, 1.0); }

}  // namespace rawradar
