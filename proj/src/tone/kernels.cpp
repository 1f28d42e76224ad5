#include "atlas/tone/kernels.hpp"

#include <cmath>
#include <complex>

namespace atlas::tone::kernels {

namespace {

double frame_ms(const double* x, std::size_t frame) {
  double s = 0.0;
  for (std::size_t k = 0; k < frame; ++k) s += x[k] * x[k];
  return s / static_cast<double>(frame);
}

// Phasor recurrence instead of a sin/cos per sample; renormalized every
// 1024 steps to stop the magnitude drifting.
double dtft_at(const double* x, const double* w, std::size_t n, double f, double fs) {
  const double omega = -2.0 * M_PI * f / fs;
  const std::complex<double> step(std::cos(omega), std::sin(omega));
  std::complex<double> rot(1.0, 0.0);
  std::complex<double> acc(0.0, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    acc += (w ? w[k] : 1.0) * x[k] * rot;
    rot *= step;
    if ((k & 1023) == 1023) rot /= std::abs(rot);
  }
  return std::norm(acc);
}

}  // namespace

std::vector<double> frame_energy(const double* x, std::size_t n, std::size_t frame) {
  const std::size_t frames = frame ? n / frame : 0;
  std::vector<double> e(frames);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(frames); ++i) e[i] = frame_ms(x + i * frame, frame);
  return e;
}

std::vector<double> frame_energy_serial(const double* x, std::size_t n, std::size_t frame) {
  const std::size_t frames = frame ? n / frame : 0;
  std::vector<double> e(frames);
  for (std::size_t i = 0; i < frames; ++i) e[i] = frame_ms(x + i * frame, frame);
  return e;
}

std::vector<double> dtft_power(const double* x, const double* w, std::size_t n, const std::vector<double>& freqs,
                               double fs) {
  std::vector<double> p(freqs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(freqs.size()); ++i) p[i] = dtft_at(x, w, n, freqs[i], fs);
  return p;
}

std::vector<double> dtft_power_serial(const double* x, const double* w, std::size_t n,
                                      const std::vector<double>& freqs, double fs) {
  std::vector<double> p(freqs.size());
  for (std::size_t i = 0; i < freqs.size(); ++i) p[i] = dtft_at(x, w, n, freqs[i], fs);
  return p;
}

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  if (n == 1) w[0] = 1.0;
  for (std::size_t k = 0; n > 1 && k < n; ++k) w[k] = 0.5 - 0.5 * std::cos(2.0 * M_PI * k / (n - 1));
  return w;
}

}  // namespace atlas::tone::kernels
