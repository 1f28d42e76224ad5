#include <cmath>
#include <random>

#include "atlas/tone/kernels.hpp"
#include "atlas/tone/tone.hpp"
#include "atlas/util/error.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace atlas;
using namespace atlas::tone;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::Internal;
}

ToneFingerprint eu(double f = 425, double amp = -15) { return {"EU", {f}, 1.0, 4.0, amp, {}}; }

// Runs of non-zero samples in a noiseless clip.
int bursts_in(const AudioClip& c) {
  int n = 0;
  bool in = false;
  std::size_t quiet = 0;
  for (auto s : c.samples) {
    if (s != 0) {
      if (!in) ++n;
      in = true;
      quiet = 0;
    } else if (++quiet > 40) {
      in = false;
    }
  }
  return n;
}

}  // namespace

TEST_CASE("synthesis: European cadence gives two bursts in 10 s") {
  auto clip = synthesize_ringback(eu(425, -15), 10.0);
  CHECK(clip.sample_rate_hz == 8000);
  CHECK(clip.samples.size() == 80000);
  CHECK(bursts_in(clip) == 2);
  // RMS of an on-second is the requested level.
  double s = 0;
  for (int k = 0; k < 8000; ++k) s += std::pow(clip.samples[k] / 32767.0, 2);
  CHECK(10 * std::log10(s / 8000) == doctest::Approx(-15.0).epsilon(0.01));
}

TEST_CASE("synthesis: dual tone beats at 40 Hz") {
  ToneFingerprint na{"NA", {440, 480}, 2.0, 4.0, -12.0, {}};
  auto clip = synthesize_ringback(na, 6.0);
  std::vector<double> sq(16000);
  for (int k = 0; k < 16000; ++k) sq[k] = std::pow(clip.samples[k] / 32767.0, 2);
  double mean = 0;
  for (double v : sq) mean += v / sq.size();
  for (double& v : sq) v -= mean;
  auto p = kernels::dtft_power(sq.data(), nullptr, sq.size(), {30.0, 40.0, 50.0}, 8000.0);
  CHECK(p[1] > 100 * p[0]);
  CHECK(p[1] > 100 * p[2]);
}

TEST_CASE("synthesis: preconditions") {
  CHECK(code_of([] { synthesize_ringback(eu(), 4.9); }) == Errc::InvalidFingerprint);
  CHECK(code_of([] { synthesize_ringback(eu(250), 10); }) == Errc::InvalidFingerprint);
  CHECK(code_of([] { synthesize_ringback(eu(425, 1.0), 10); }) == Errc::InvalidFingerprint);
  ToneFingerprint three{"X", {400, 450, 500}, 1, 4, -10, {}};
  CHECK(code_of([&] { synthesize_ringback(three, 10); }) == Errc::InvalidFingerprint);
  ToneFingerprint zero_on{"X", {400}, 0, 4, -10, {}};
  CHECK(code_of([&] { synthesize_ringback(zero_on, 10); }) == Errc::InvalidFingerprint);
  // Deterministic per seed.
  SynthOptions o;
  o.noise_dbfs = -30;
  o.seed = 9;
  CHECK(synthesize_ringback(eu(), 10, o).samples == synthesize_ringback(eu(), 10, o).samples);
}

TEST_CASE("extraction recovers every preset at -40 dBFS noise") {
  for (const auto& fp : preset_fingerprints()) {
    SynthOptions o;
    o.noise_dbfs = -40;
    o.seed = 4;
    o.offset_s = 0.37;
    auto f = extract_features(synthesize_ringback(fp, 20.0, o));
    INFO(fp.operator_label);
    REQUIRE(f.freqs_hz.size() == fp.freqs_hz.size());
    for (std::size_t i = 0; i < f.freqs_hz.size(); ++i) CHECK(std::abs(f.freqs_hz[i] - fp.freqs_hz[i]) <= 2.0);
    CHECK(std::abs(f.duty_on_s - fp.duty_on_s) <= 0.1);
    CHECK(std::abs(f.duty_off_s - fp.duty_off_s) <= 0.1);
    CHECK(std::abs(f.amp_dbfs - fp.amp_dbfs) <= 1.0);
    for (const auto& o2 : fp.overtone_ratios) {
      bool found = false;
      for (const auto& g : f.overtone_ratios) found = found || (g.multiple == o2.multiple && std::abs(g.rel_db - o2.rel_db) < 2);
      CHECK_MESSAGE(found, "overtone x" << o2.multiple);
    }
  }
}

TEST_CASE("extraction: silence and short clips") {
  AudioClip silent;
  silent.samples.assign(16000, 0);
  CHECK(code_of([&] { extract_features(silent); }) == Errc::NoToneDetected);
  AudioClip shorty;
  shorty.samples.assign(4000, 100);
  CHECK(code_of([&] { extract_features(shorty); }) == Errc::InvalidAudio);
  AudioClip slow;
  slow.sample_rate_hz = 4000;
  slow.samples.assign(8000, 100);
  CHECK(code_of([&] { extract_features(slow); }) == Errc::InvalidAudio);
}

TEST_CASE("extraction: North American dual tone") {
  const auto& us = find_fingerprint(preset_fingerprints(), "US_ATT");
  SynthOptions o;
  o.noise_dbfs = -40;
  auto f = extract_features(synthesize_ringback(us, 20.0, o));
  REQUIRE(f.freqs_hz.size() == 2);
  CHECK(std::abs((f.freqs_hz[1] - f.freqs_hz[0]) - 40.0) <= 2.0);
  CHECK(f.freqs_hz[0] < f.freqs_hz[1]);
}

TEST_CASE("frequency estimator bias under 0.5 Hz on clean sinusoids") {
  for (double hz = 400.0; hz <= 500.0; hz += 3.7) {
    auto f = extract_features(synthesize_ringback(eu(hz, -12), 10.0));
    REQUIRE(f.freqs_hz.size() == 1);
    CHECK_MESSAGE(std::abs(f.freqs_hz[0] - hz) < 0.5, hz);
  }
}

TEST_CASE("duty estimator exact to one frame on noiseless input") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 40; ++i) {
    ToneFingerprint fp = eu(430, -14);
    fp.duty_on_s = 0.5 + (rng() % 200) / 100.0;
    fp.duty_off_s = 1.0 + (rng() % 400) / 100.0;
    SynthOptions o;
    o.offset_s = (rng() % 1000) / 1000.0 * (fp.duty_on_s + fp.duty_off_s);
    auto f = extract_features(synthesize_ringback(fp, 20.0, o));
    CHECK(std::abs(f.duty_on_s - fp.duty_on_s) <= kFrameS + 1e-9);
    CHECK(std::abs(f.duty_off_s - fp.duty_off_s) <= kFrameS + 1e-9);
  }
}

TEST_CASE("matching: closed loop over the presets") {
  const auto& db = preset_fingerprints();
  REQUIRE(db.size() == 19);
  int correct40 = 0, correct20 = 0;
  for (const auto& fp : db) {
    for (std::uint64_t seed : {1, 2}) {
      SynthOptions o;
      o.seed = seed;
      o.noise_dbfs = -40;
      correct40 += match_fingerprint(extract_features(synthesize_ringback(fp, 20.0, o)), db)[0].label == fp.operator_label;
      o.noise_dbfs = -20;
      correct20 += match_fingerprint(extract_features(synthesize_ringback(fp, 20.0, o)), db)[0].label == fp.operator_label;
    }
  }
  CHECK(correct40 == 38);
  CHECK(correct20 >= 36);
}

TEST_CASE("matching: AT_A1 is rank one and confident") {
  const auto& db = preset_fingerprints();
  SynthOptions o;
  o.noise_dbfs = -40;
  auto id = identify(extract_features(synthesize_ringback(find_fingerprint(db, "AT_A1"), 20.0, o)), db);
  CHECK(id.ranked[0].label == "AT_A1");
  CHECK(id.confident);
}

TEST_CASE("matching: symmetric neighbours tie and sort by label") {
  std::vector<ToneFingerprint> db = {{"B_hi", {426}, 1, 4, -12, {}}, {"A_lo", {424}, 1, 4, -12, {}},
                                     {"C_far", {440}, 1, 4, -12, {}}};
  FeatureVector f;
  f.freqs_hz = {425};
  f.duty_on_s = 1;
  f.duty_off_s = 4;
  f.amp_dbfs = -12;
  auto m = match_fingerprint(f, db);
  CHECK(m[0].label == "A_lo");
  CHECK(m[1].label == "B_hi");
  CHECK(m[0].tie);
  CHECK(m[1].tie);
  CHECK_FALSE(m[2].tie);
  CHECK_FALSE(identify(f, db).confident);
}

TEST_CASE("matching: EU tone against a North American db is rejected") {
  std::vector<ToneFingerprint> na;
  for (const auto& fp : preset_fingerprints()) {
    if (fp.freqs_hz.size() == 2) na.push_back(fp);
  }
  REQUIRE(na.size() == 3);
  for (const auto& fp : preset_fingerprints()) {
    if (fp.freqs_hz.size() == 2) continue;
    SynthOptions o;
    o.noise_dbfs = -40;
    auto id = identify(extract_features(synthesize_ringback(fp, 20.0, o)), na);
    CHECK(id.ranked[0].distance > kDefaultRejectThreshold);
    CHECK_FALSE(id.confident);
  }
}

TEST_CASE("reject threshold matches the recorded calibration") {
  auto j = Json::parse(test::read_text(test::fixture_path("tone_calibration.json")));
  const double threshold = j.at("threshold").get<double>();
  CHECK(threshold == doctest::Approx(kDefaultRejectThreshold).epsilon(0.01));
  CHECK(j.at("genuine_max").get<double>() < threshold);
  CHECK(j.at("impostor_min").get<double>() > threshold);
}

TEST_CASE("calibration reruns separate genuine from impostor") {
  auto c = calibrate_threshold(preset_fingerprints(), {-40, -20}, 1);
  CHECK(c.trials == 38);
  CHECK(c.genuine_max < kDefaultRejectThreshold);
  CHECK(c.impostor_min > kDefaultRejectThreshold);
}

TEST_CASE("kernels: OpenMP and serial agree") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  std::vector<double> x(48000);
  for (auto& v : x) v = g(rng);
  auto a = kernels::frame_energy(x.data(), x.size(), 160);
  auto b = kernels::frame_energy_serial(x.data(), x.size(), 160);
  REQUIRE(a.size() == 300);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  auto w = kernels::hann(8000);
  std::vector<double> freqs;
  for (int i = 0; i < 64; ++i) freqs.push_back(400 + i * 0.5);
  auto p = kernels::dtft_power(x.data(), w.data(), 8000, freqs, 8000);
  auto q = kernels::dtft_power_serial(x.data(), w.data(), 8000, freqs, 8000);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == q[i]);
  // Against a direct sin/cos evaluation.
  double re = 0, im = 0;
  for (int k = 0; k < 8000; ++k) {
    re += w[k] * x[k] * std::cos(2 * M_PI * 410.0 * k / 8000);
    im -= w[k] * x[k] * std::sin(2 * M_PI * 410.0 * k / 8000);
  }
  CHECK(p[20] == doctest::Approx(re * re + im * im).epsilon(1e-9));
}

TEST_CASE("WAV round trip and rejection") {
  auto clip = synthesize_ringback(eu(), 5.0);
  auto bytes = encode_wav(clip);
  CHECK(bytes.size() == 44 + clip.samples.size() * 2);
  auto back = decode_wav(bytes);
  CHECK(back.sample_rate_hz == 8000);
  CHECK(back.samples == clip.samples);
  auto bad = bytes;
  bad[20] = 3;  // IEEE float
  CHECK(code_of([&] { decode_wav(bad); }) == Errc::InvalidAudio);
  CHECK(code_of([] { decode_wav({1, 2, 3}); }) == Errc::InvalidAudio);
}

TEST_CASE("fingerprint db JSON") {
  auto path = test::config_path("tone/presets.json");
  auto db = load_db(path);
  REQUIRE(db.size() == preset_fingerprints().size());
  for (std::size_t i = 0; i < db.size(); ++i) CHECK(to_json(db[i]) == to_json(preset_fingerprints()[i]));
  Json bad = to_json(db[0]);
  bad["freqs_hz"] = Json::array();
  CHECK(code_of([&] { fingerprint_from_json(bad); }) == Errc::InvalidFingerprint);
  CHECK(code_of([&] { find_fingerprint(db, "XX_None"); }) == Errc::InvalidFingerprint);
}
