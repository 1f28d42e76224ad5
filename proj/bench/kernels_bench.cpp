#include <benchmark/benchmark.h>

#include <random>

#include "atlas/analytics/scan.hpp"
#include "atlas/tone/kernels.hpp"

using namespace atlas;

namespace {

std::vector<double> noise(std::size_t n) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> d(0.0, 0.1);
  std::vector<double> x(n);
  for (auto& v : x) v = d(rng);
  return x;
}

std::vector<double> band(double lo, double hi, double step) {
  std::vector<double> f;
  for (double v = lo; v <= hi; v += step) f.push_back(v);
  return f;
}

// 20 s at 8 kHz, 20 ms frames.
void BM_FrameEnergy(benchmark::State& st) {
  auto x = noise(160000);
  for (auto _ : st) benchmark::DoNotOptimize(tone::kernels::frame_energy(x.data(), x.size(), 160));
  st.SetBytesProcessed(st.iterations() * x.size() * sizeof(double));
}
void BM_FrameEnergySerial(benchmark::State& st) {
  auto x = noise(160000);
  for (auto _ : st) benchmark::DoNotOptimize(tone::kernels::frame_energy_serial(x.data(), x.size(), 160));
  st.SetBytesProcessed(st.iterations() * x.size() * sizeof(double));
}

// Fine frequency search over one second, 0.1 Hz grid around the tone band.
void BM_DtftPower(benchmark::State& st) {
  auto x = noise(8000);
  auto w = tone::kernels::hann(x.size());
  auto f = band(300.0, 500.0, 0.1);
  for (auto _ : st) benchmark::DoNotOptimize(tone::kernels::dtft_power(x.data(), w.data(), x.size(), f, 8000.0));
  st.SetItemsProcessed(st.iterations() * f.size());
}
void BM_DtftPowerSerial(benchmark::State& st) {
  auto x = noise(8000);
  auto w = tone::kernels::hann(x.size());
  auto f = band(300.0, 500.0, 0.1);
  for (auto _ : st) benchmark::DoNotOptimize(tone::kernels::dtft_power_serial(x.data(), w.data(), x.size(), f, 8000.0));
  st.SetItemsProcessed(st.iterations() * f.size());
}

std::vector<Bytes> blobs() {
  std::mt19937_64 rng(11);
  std::vector<Bytes> out(256);
  for (auto& b : out) {
    b.resize(256);
    for (auto& v : b) v = static_cast<std::uint8_t>(rng());
  }
  return out;
}

void BM_ScanBatch(benchmark::State& st) {
  auto b = blobs();
  const auto& mcc = analytics::default_mcc_list();
  for (auto _ : st) benchmark::DoNotOptimize(analytics::scan_batch(b, mcc));
  st.SetBytesProcessed(st.iterations() * b.size() * 256);
}
void BM_ScanBatchSerial(benchmark::State& st) {
  auto b = blobs();
  const auto& mcc = analytics::default_mcc_list();
  for (auto _ : st) benchmark::DoNotOptimize(analytics::scan_batch_serial(b, mcc));
  st.SetBytesProcessed(st.iterations() * b.size() * 256);
}

}  // namespace

BENCHMARK(BM_FrameEnergy);
BENCHMARK(BM_FrameEnergySerial);
BENCHMARK(BM_DtftPower)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DtftPowerSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScanBatch)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScanBatchSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
