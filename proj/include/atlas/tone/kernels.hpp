#pragma once

#include <cstddef>
#include <vector>

// Data-parallel inner loops of the tone analysis. Each OpenMP kernel has a
// serial twin used as the reference in tests and benchmarks.
namespace atlas::tone::kernels {

// Mean square of each complete `frame`-sample frame.
std::vector<double> frame_energy(const double* x, std::size_t n, std::size_t frame);
std::vector<double> frame_energy_serial(const double* x, std::size_t n, std::size_t frame);

// |sum_k w[k] x[k] e^{-2 pi i f k / fs}|^2 for each f in `freqs`.
std::vector<double> dtft_power(const double* x, const double* w, std::size_t n, const std::vector<double>& freqs,
                               double fs);
std::vector<double> dtft_power_serial(const double* x, const double* w, std::size_t n,
                                      const std::vector<double>& freqs, double fs);

std::vector<double> hann(std::size_t n);

}  // namespace atlas::tone::kernels
