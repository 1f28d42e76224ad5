#include "atlas/tone/tone.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>

#include "atlas/tone/kernels.hpp"
#include "atlas/util/bytes.hpp"
#include "atlas/util/error.hpp"

namespace atlas::tone {

void ToneFingerprint::validate() const {
  auto bad = [&](const std::string& why) {
    throw Error(Errc::InvalidFingerprint, (operator_label.empty() ? "fingerprint" : operator_label) + ": " + why);
  };
  if (freqs_hz.empty() || freqs_hz.size() > 2) bad("needs one or two base frequencies");
  for (double f : freqs_hz) {
    if (!(f >= 300.0 && f <= 600.0)) bad("base frequency " + std::to_string(f) + " Hz outside 300-600 Hz");
  }
  if (!(duty_on_s > 0.0) || !(duty_off_s > 0.0)) bad("on and off times must be positive");
  if (!(amp_dbfs <= 0.0)) bad("amplitude above full scale");
  for (const auto& o : overtone_ratios) {
    if (o.multiple < 2 || o.multiple > 10) bad("overtone multiple " + std::to_string(o.multiple));
    if (!(o.rel_db <= 0.0)) bad("overtone louder than its base");
  }
}

Json to_json(const ToneFingerprint& fp) {
  Json ot = Json::array();
  for (const auto& o : fp.overtone_ratios) ot.push_back({{"multiple", o.multiple}, {"rel_db", o.rel_db}});
  return {{"operator_label", fp.operator_label}, {"freqs_hz", fp.freqs_hz},      {"duty_on_s", fp.duty_on_s},
          {"duty_off_s", fp.duty_off_s},         {"amp_dbfs", fp.amp_dbfs},      {"overtone_ratios", ot}};
}

ToneFingerprint fingerprint_from_json(const Json& j) {
  ToneFingerprint fp;
  try {
    fp.operator_label = j.at("operator_label").get<std::string>();
    fp.freqs_hz = j.at("freqs_hz").get<std::vector<double>>();
    fp.duty_on_s = j.at("duty_on_s").get<double>();
    fp.duty_off_s = j.at("duty_off_s").get<double>();
    fp.amp_dbfs = j.at("amp_dbfs").get<double>();
    if (j.contains("overtone_ratios")) {
      for (const auto& o : j.at("overtone_ratios")) fp.overtone_ratios.push_back({o.at("multiple"), o.at("rel_db")});
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::InvalidFingerprint, std::string("fingerprint JSON: ") + e.what());
  }
  fp.validate();
  return fp;
}

Json to_json(const FeatureVector& f) {
  Json ot = Json::array();
  for (const auto& o : f.overtone_ratios) ot.push_back({{"multiple", o.multiple}, {"rel_db", o.rel_db}});
  return {{"freqs_hz", f.freqs_hz},
          {"duty_on_s", f.duty_on_s},
          {"duty_off_s", f.duty_off_s},
          {"amp_dbfs", f.amp_dbfs},
          {"overtone_ratios", ot},
          {"bursts", f.bursts},
          {"confidence",
           {{"freq", f.confidence.freq},
            {"duty", f.confidence.duty},
            {"amp", f.confidence.amp},
            {"overtones", f.confidence.overtones}}}};
}

const std::vector<ToneFingerprint>& preset_fingerprints() {
  static const std::vector<ToneFingerprint> db = [] {
    std::vector<ToneFingerprint> v = {
        {"AT_A1", {425}, 1, 5, -12.0, {}},
        {"AT_Magenta", {425}, 1, 4, -12.5, {{2, -31}}},
        {"AT_Drei", {420}, 1, 4, -11.0, {}},
        {"DE_Telekom", {426}, 1, 4, -14.7, {{2, -24}}},
        {"DE_o2", {426}, 1, 4, -9.2, {}},
        {"DE_Vodafone", {425}, 1, 4, -14.5, {{3, -29}}},
        {"RO_Vodafone", {430}, 1, 4, -15.6, {}},
        {"RO_Orange", {430}, 1, 4, -10.0, {{3, -28}}},
        {"RO_Digi", {425}, 1, 4, -18.0, {}},
        {"FI_Telia", {425}, 1, 4, -17.5, {{2, -26}}},
        {"FI_Elisa", {420}, 1, 4, -17.0, {}},
        {"HR_A1", {420}, 1, 4, -13.0, {{2, -28}}},
        {"HR_Telemach", {426.5}, 1, 4, -12.0, {}},
        {"SL_A1", {420}, 1, 4, -16.0, {{2, -24}}},
        {"SK_Telekom", {430}, 1, 4, -12.5, {{2, -22}}},
        {"SK_Orange", {426.5}, 1, 4, -17.0, {{3, -26}}},
        {"US_ATT", {440, 480}, 2, 4, -10.0, {}},
        {"US_TMobile", {440, 480}, 2, 4, -14.0, {}},
        {"CA_Rogers", {440, 480}, 2, 4, -18.0, {}},
    };
    for (const auto& fp : v) fp.validate();
    return v;
  }();
  return db;
}

std::vector<ToneFingerprint> load_db(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidFingerprint, "cannot open fingerprint db " + path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::InvalidFingerprint, path + " is not valid JSON");
  const Json& arr = j.is_object() ? j["fingerprints"] : j;
  if (!arr.is_array() || arr.empty()) throw Error(Errc::InvalidFingerprint, path + " holds no fingerprints");
  std::vector<ToneFingerprint> db;
  for (const auto& e : arr) db.push_back(fingerprint_from_json(e));
  return db;
}

void save_db(const std::string& path, const std::vector<ToneFingerprint>& db) {
  Json arr = Json::array();
  for (const auto& fp : db) arr.push_back(to_json(fp));
  std::ofstream out(path);
  out << Json{{"fingerprints", arr}}.dump(2) << "\n";
  if (!out) throw Error(Errc::Internal, "cannot write " + path);
}

const ToneFingerprint& find_fingerprint(const std::vector<ToneFingerprint>& db, const std::string& label) {
  for (const auto& fp : db) {
    if (fp.operator_label == label) return fp;
  }
  throw Error(Errc::InvalidFingerprint, "no fingerprint labelled " + label);
}

AudioClip synthesize_ringback(const ToneFingerprint& fp, double total_s, const SynthOptions& opts) {
  fp.validate();
  if (opts.sample_rate_hz < 8000) throw Error(Errc::InvalidFingerprint, "sample rate below 8000 Hz");
  const double cycle = fp.duty_on_s + fp.duty_off_s;
  if (!(total_s >= cycle)) {
    throw Error(Errc::InvalidFingerprint, "clip of " + std::to_string(total_s) + " s is shorter than one " +
                                              std::to_string(cycle) + " s cycle");
  }
  const double fs = opts.sample_rate_hz;
  struct Component {
    double f, a, phase;
  };
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> uphase(0.0, 2.0 * M_PI);
  std::vector<Component> comps;
  for (double f : fp.freqs_hz) {
    comps.push_back({f, 1.0, uphase(rng)});
    for (const auto& o : fp.overtone_ratios) {
      if (o.multiple * f < fs / 2) comps.push_back({o.multiple * f, std::pow(10.0, o.rel_db / 20.0), uphase(rng)});
    }
  }
  double power = 0.0;
  for (const auto& c : comps) power += c.a * c.a / 2.0;
  const double scale = std::pow(10.0, fp.amp_dbfs / 20.0) / std::sqrt(power);

  const auto n = static_cast<std::size_t>(std::llround(total_s * fs));
  const auto on_n = static_cast<std::size_t>(std::llround(fp.duty_on_s * fs));
  const auto cyc_n = static_cast<std::size_t>(std::llround(cycle * fs));
  const auto shift = static_cast<std::size_t>(std::llround(std::fmod(std::max(0.0, opts.offset_s), cycle) * fs));
  std::normal_distribution<double> noise(0.0, opts.noise_dbfs ? std::pow(10.0, *opts.noise_dbfs / 20.0) : 0.0);

  AudioClip clip;
  clip.sample_rate_hz = opts.sample_rate_hz;
  clip.samples.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    double x = 0.0;
    if ((k + shift) % cyc_n < on_n) {
      for (const auto& c : comps) x += c.a * std::sin(2.0 * M_PI * c.f * static_cast<double>(k) / fs + c.phase);
      x *= scale;
    }
    if (opts.noise_dbfs) x += noise(rng);
    x = std::clamp(x, -1.0, 1.0);
    clip.samples[k] = static_cast<std::int16_t>(std::lround(x * 32767.0));
  }
  return clip;
}

namespace {

struct Run {
  std::size_t start = 0;
  std::size_t len = 0;
  bool on = false;
};

std::vector<Run> runs_of(const std::vector<bool>& v) {
  std::vector<Run> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (out.empty() || out.back().on != v[i]) out.push_back({i, 0, v[i]});
    ++out.back().len;
  }
  return out;
}

// Two-cluster 1-D k-means; returns {low mean, high mean}.
std::pair<double, double> two_means(const std::vector<double>& e) {
  double lo = *std::min_element(e.begin(), e.end());
  double hi = *std::max_element(e.begin(), e.end());
  for (int iter = 0; iter < 100; ++iter) {
    double slo = 0, shi = 0;
    std::size_t nlo = 0, nhi = 0;
    const double mid = (lo + hi) / 2;
    for (double x : e) {
      if (x > mid) {
        shi += x;
        ++nhi;
      } else {
        slo += x;
        ++nlo;
      }
    }
    double nl = nlo ? slo / nlo : lo;
    double nh = nhi ? shi / nhi : hi;
    if (nl == lo && nh == hi) break;
    lo = nl;
    hi = nh;
  }
  return {lo, hi};
}

class Spectrum {
 public:
  explicit Spectrum(std::size_t n) : n_(n) {
    in_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    std::lock_guard lock(planner_mu());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~Spectrum() {
    {
      std::lock_guard lock(planner_mu());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  Spectrum(const Spectrum&) = delete;
  Spectrum& operator=(const Spectrum&) = delete;

  // Power of the Hann-windowed, zero-padded segment, normalized so a
  // sinusoid of amplitude A peaks at A^2/4.
  void accumulate(const double* x, std::size_t len, const std::vector<double>& w, std::vector<double>& acc) {
    std::fill(in_, in_ + n_, 0.0);
    double wsum = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      in_[k] = x[k] * w[k];
      wsum += w[k];
    }
    fftw_execute(plan_);
    const double norm = 1.0 / (wsum * wsum);
    acc.resize(n_ / 2 + 1, 0.0);
    for (std::size_t b = 0; b <= n_ / 2; ++b) acc[b] += (out_[b][0] * out_[b][0] + out_[b][1] * out_[b][1]) * norm;
  }

 private:
  static std::mutex& planner_mu() {
    static std::mutex mu;
    return mu;
  }
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

std::size_t next_pow2(std::size_t v) {
  std::size_t p = 1;
  while (p < v) p <<= 1;
  return p;
}

double parabolic_offset(double a, double b, double c) {
  double den = a - 2 * b + c;
  return den == 0.0 ? 0.0 : 0.5 * (a - c) / den;
}

}  // namespace

FeatureVector extract_features(const AudioClip& clip) {
  if (clip.sample_rate_hz < 8000) throw Error(Errc::InvalidAudio, "sample rate below 8000 Hz");
  if (clip.duration_s() < 1.0) throw Error(Errc::InvalidAudio, "clip shorter than 1 s");
  const double fs = clip.sample_rate_hz;
  const std::size_t n = std::min(clip.samples.size(), static_cast<std::size_t>(kAnalysisCapS * fs));
  std::vector<double> x(n);
  for (std::size_t k = 0; k < n; ++k) x[k] = clip.samples[k] / 32768.0;

  const auto frame = static_cast<std::size_t>(std::lround(kFrameS * fs));
  const double frame_s = static_cast<double>(frame) / fs;
  const auto e = kernels::frame_energy(x.data(), n, frame);
  const double emax = *std::max_element(e.begin(), e.end());
  if (emax < 1e-7) throw Error(Errc::NoToneDetected, "clip is silent");

  auto [lo, hi] = two_means(e);
  std::vector<bool> on(e.size(), true);
  const bool gated = hi > 1.5 * lo;
  if (gated) {
    const double thr = (lo + hi) / 2;
    std::vector<bool> raw(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) raw[i] = e[i] > thr;
    // 5-frame majority smooths single-frame noise flips.
    for (std::size_t i = 0; i < e.size(); ++i) {
      int votes = 0, total = 0;
      for (std::size_t j = i >= 2 ? i - 2 : 0; j <= std::min(e.size() - 1, i + 2); ++j) {
        votes += raw[j];
        ++total;
      }
      on[i] = 2 * votes > total;
    }
  }
  const auto runs = runs_of(on);
  std::vector<double> bounded_on, bounded_off, all_on;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const bool bounded = r > 0 && r + 1 < runs.size();
    const double d = runs[r].len * frame_s;
    if (runs[r].on) {
      all_on.push_back(d);
      if (bounded) bounded_on.push_back(d);
    } else if (bounded) {
      bounded_off.push_back(d);
    }
  }
  if (all_on.empty()) throw Error(Errc::NoToneDetected, "no on-segment found");
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };

  FeatureVector f;
  f.bursts = static_cast<int>(all_on.size());
  f.duty_on_s = mean(bounded_on.empty() ? all_on : bounded_on);
  f.duty_off_s = bounded_off.empty() ? 0.0 : mean(bounded_off);
  f.confidence.duty = !bounded_on.empty() && !bounded_off.empty() ? 1.0 : 0.5;

  // Interior frames only: transitions straddle frame boundaries.
  double p_on = 0, p_off = 0;
  std::size_t n_on = 0, n_off = 0;
  for (const auto& r : runs) {
    std::size_t a = r.len > 2 ? r.start + 1 : r.start;
    std::size_t b = r.len > 2 ? r.start + r.len - 1 : r.start + r.len;
    for (std::size_t i = a; i < b; ++i) {
      if (r.on) {
        p_on += e[i];
        ++n_on;
      } else {
        p_off += e[i];
        ++n_off;
      }
    }
  }
  p_on /= std::max<std::size_t>(n_on, 1);
  if (n_off) p_off /= n_off;
  f.amp_dbfs = 10.0 * std::log10(std::max(p_on - p_off, 1e-12));
  f.confidence.amp = gated ? std::clamp(10.0 * std::log10(hi / std::max(lo, 1e-12)) / 20.0, 0.0, 1.0) : 0.5;

  // Spectrum over the on-segments.
  struct Segment {
    std::size_t begin, len;
  };
  std::vector<Segment> segs;
  for (const auto& r : runs) {
    if (!r.on || r.len < 5) continue;
    segs.push_back({(r.start + 1) * frame, (r.len - 2) * frame});
  }
  if (segs.empty()) {
    for (const auto& r : runs) {
      if (r.on) segs.push_back({r.start * frame, r.len * frame});
    }
  }
  std::size_t maxlen = 0;
  for (const auto& s : segs) maxlen = std::max(maxlen, s.len);
  // Partial bursts at the clip edges carry far more noise per bin.
  std::erase_if(segs, [&](const Segment& s) { return 2 * s.len < maxlen; });
  const std::size_t nfft = next_pow2(std::max<std::size_t>(4 * maxlen, static_cast<std::size_t>(fs)));
  const double df = fs / nfft;
  std::vector<double> power;
  double total_len = 0;
  {
    Spectrum spectrum(nfft);
    std::map<std::size_t, std::vector<double>> windows;
    std::vector<double> one;
    for (const auto& s : segs) {
      auto& w = windows[s.len];
      if (w.empty()) w = kernels::hann(s.len);
      one.assign(nfft / 2 + 1, 0.0);
      spectrum.accumulate(x.data() + s.begin, s.len, w, one);
      power.resize(one.size(), 0.0);
      for (std::size_t b = 0; b < one.size(); ++b) power[b] += one[b] * static_cast<double>(s.len);
      total_len += static_cast<double>(s.len);
    }
  }
  for (auto& p : power) p /= total_len;

  auto bin_of = [&](double hz) { return static_cast<std::size_t>(std::lround(hz / df)); };
  const std::size_t b_lo = bin_of(250.0), b_hi = std::min(bin_of(650.0), power.size() - 2);
  std::size_t b1 = b_lo;
  for (std::size_t b = b_lo; b <= b_hi; ++b) {
    if (power[b] > power[b1]) b1 = b;
  }
  std::vector<double> noise_bins(power.begin() + bin_of(100.0), power.begin() + std::min(bin_of(fs / 2 - 100), power.size()));
  std::nth_element(noise_bins.begin(), noise_bins.begin() + noise_bins.size() / 2, noise_bins.end());
  const double floor = std::max(noise_bins[noise_bins.size() / 2], 1e-20);

  std::vector<std::size_t> peaks{b1};
  std::size_t b2 = 0;
  for (std::size_t b = b_lo + 1; b < b_hi; ++b) {
    if (std::abs(static_cast<double>(b) - static_cast<double>(b1)) * df <= 10.0) continue;
    if (power[b] < power[b - 1] || power[b] < power[b + 1]) continue;
    if (power[b] >= 0.1 * power[b1] && (b2 == 0 || power[b] > power[b2])) b2 = b;
  }
  if (b2) peaks.push_back(b2);

  // Coarse estimate by parabolic interpolation on log power, then a fine
  // DTFT search around it.
  for (std::size_t b : peaks) {
    double d = parabolic_offset(std::log(power[b - 1] + 1e-30), std::log(power[b] + 1e-30),
                                std::log(power[b + 1] + 1e-30));
    double coarse = (static_cast<double>(b) + d) * df;
    std::vector<double> grid;
    for (int i = -15; i <= 15; ++i) grid.push_back(coarse + 0.02 * i);
    std::vector<double> fine(grid.size(), 0.0);
    for (const auto& s : segs) {
      auto w = kernels::hann(s.len);
      auto p = kernels::dtft_power(x.data() + s.begin, w.data(), s.len, grid, fs);
      for (std::size_t i = 0; i < grid.size(); ++i) fine[i] += p[i];
    }
    std::size_t best = std::max_element(fine.begin(), fine.end()) - fine.begin();
    double est = grid[best];
    if (best > 0 && best + 1 < grid.size()) est += 0.02 * parabolic_offset(fine[best - 1], fine[best], fine[best + 1]);
    f.freqs_hz.push_back(est);
  }
  std::sort(f.freqs_hz.begin(), f.freqs_hz.end());
  f.confidence.freq = std::clamp((10.0 * std::log10(power[b1] / floor) - 10.0) / 30.0, 0.0, 1.0);

  // Overtones at integer multiples of the lowest base frequency.
  const double f0 = f.freqs_hz.front();
  double p_base = 0;
  for (std::size_t b = bin_of(f0 - 2); b <= bin_of(f0 + 2); ++b) p_base = std::max(p_base, power[b]);
  for (int m = 2; m <= 4; ++m) {
    const double target = m * f0;
    if (target > fs / 2 - 80) break;
    double pk = 0;
    for (std::size_t b = bin_of(target - 2); b <= bin_of(target + 2); ++b) pk = std::max(pk, power[b]);
    // Local floor from a ring around the target, excluding the peak region.
    std::vector<double> ring;
    for (std::size_t b = bin_of(target - 60); b <= bin_of(target + 60); ++b) {
      double off = std::abs(static_cast<double>(b) * df - target);
      if (off >= 15 && b < power.size()) ring.push_back(power[b]);
    }
    std::sort(ring.begin(), ring.end());
    ring.resize(ring.size() * 9 / 10);
    double local = 0;
    for (double v : ring) local += v / static_cast<double>(ring.size());
    local = std::max(local, 1e-20);
    if (pk < 4.0 * local) continue;
    const double rel = 10.0 * std::log10((pk - local) / p_base);
    if (rel > kOvertoneFloorDb) f.overtone_ratios.push_back({m, rel});
  }
  f.confidence.overtones = f.confidence.freq;
  return f;
}

namespace {

double overtone_at(const std::vector<Overtone>& v, int m) {
  for (const auto& o : v) {
    if (o.multiple == m) return std::max(o.rel_db, kOvertoneFloorDb);
  }
  return kOvertoneFloorDb;
}

}  // namespace

double fingerprint_distance(const FeatureVector& f, const ToneFingerprint& fp) {
  constexpr double kFreqStep = 2.0, kDutyStep = 0.1, kAmpStep = 1.0, kOvertoneStep = 6.0;
  constexpr double kMissingFreq = 10.0;
  double d = 0.0;
  const auto& a = f.freqs_hz.size() <= fp.freqs_hz.size() ? f.freqs_hz : fp.freqs_hz;
  const auto& b = f.freqs_hz.size() <= fp.freqs_hz.size() ? fp.freqs_hz : f.freqs_hz;
  if (a.size() == b.size()) {
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]) / kFreqStep;
  } else {
    for (double x : a) {
      double best = 1e300;
      for (double y : b) best = std::min(best, std::abs(x - y));
      d += best / kFreqStep;
    }
    d += kMissingFreq * static_cast<double>(b.size() - a.size());
  }
  d += std::abs(f.duty_on_s - fp.duty_on_s) / kDutyStep;
  d += std::abs(f.duty_off_s - fp.duty_off_s) / kDutyStep;
  d += std::abs(f.amp_dbfs - fp.amp_dbfs) / kAmpStep;
  for (int m = 2; m <= 4; ++m) {
    d += std::abs(overtone_at(f.overtone_ratios, m) - overtone_at(fp.overtone_ratios, m)) / kOvertoneStep;
  }
  return d;
}

std::vector<Match> match_fingerprint(const FeatureVector& f, const std::vector<ToneFingerprint>& db) {
  std::vector<Match> out;
  for (const auto& fp : db) out.push_back({fp.operator_label, fingerprint_distance(f, fp), false});
  std::sort(out.begin(), out.end(), [](const Match& x, const Match& y) {
    return x.distance != y.distance ? x.distance < y.distance : x.label < y.label;
  });
  auto same = [](double x, double y) { return std::abs(x - y) <= 1e-9 * std::max(1.0, std::abs(x)); };
  for (std::size_t i = 0; i + 1 < out.size(); ++i) {
    if (same(out[i].distance, out[i + 1].distance)) out[i].tie = out[i + 1].tie = true;
  }
  return out;
}

Identification identify(const FeatureVector& f, const std::vector<ToneFingerprint>& db, double reject_threshold) {
  Identification id;
  id.ranked = match_fingerprint(f, db);
  id.confident = !id.ranked.empty() && id.ranked.front().distance <= reject_threshold && !id.ranked.front().tie;
  return id;
}

Calibration calibrate_threshold(const std::vector<ToneFingerprint>& db, const std::vector<double>& noise_dbfs,
                                int seeds, double clip_s) {
  if (db.size() < 2) throw Error(Errc::InvalidFingerprint, "calibration needs at least two entries");
  Calibration c;
  c.noise_dbfs = noise_dbfs;
  c.seeds = seeds;
  c.genuine_max = 0.0;
  c.impostor_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < db.size(); ++i) {
    for (double n : noise_dbfs) {
      for (int s = 0; s < seeds; ++s) {
        SynthOptions o;
        o.noise_dbfs = n;
        o.seed = 1000 + static_cast<std::uint64_t>(s);
        o.offset_s = 0.13 * s;
        auto f = extract_features(synthesize_ringback(db[i], clip_s, o));
        c.genuine_max = std::max(c.genuine_max, fingerprint_distance(f, db[i]));
        for (std::size_t j = 0; j < db.size(); ++j) {
          if (j != i) c.impostor_min = std::min(c.impostor_min, fingerprint_distance(f, db[j]));
        }
        ++c.trials;
      }
    }
  }
  c.threshold = (c.genuine_max + c.impostor_min) / 2;
  return c;
}

Json to_json(const Calibration& c) {
  return Json{{"genuine_max", c.genuine_max}, {"impostor_min", c.impostor_min}, {"threshold", c.threshold},
              {"trials", c.trials},           {"noise_dbfs", c.noise_dbfs},     {"seeds", c.seeds}};
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  Bytes out;
  const auto data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);
  auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
  tag("RIFF");
  put_u32le(out, 36 + data_len);
  tag("WAVE");
  tag("fmt ");
  put_u32le(out, 16);
  put_u16le(out, 1);  // PCM
  put_u16le(out, 1);  // mono
  put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate_hz * 2));
  put_u16le(out, 2);
  put_u16le(out, 16);
  tag("data");
  put_u32le(out, data_len);
  for (auto s : clip.samples) put_u16le(out, static_cast<std::uint16_t>(s));
  return out;
}

AudioClip decode_wav(const std::vector<std::uint8_t>& b) {
  auto fail = [](const std::string& why) -> AudioClip { throw Error(Errc::InvalidAudio, "WAV: " + why); };
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    return fail("not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  std::optional<std::uint16_t> channels, bits;
  std::uint32_t rate = 0;
  while (pos + 8 <= b.size()) {
    std::uint32_t len = get_u32le(b.data() + pos + 4);
    const std::uint8_t* body = b.data() + pos + 8;
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
      if (len < 16 || pos + 8 + 16 > b.size()) return fail("short fmt chunk");
      if (get_u16le(body) != 1) return fail("only PCM is supported");
      channels = get_u16le(body + 2);
      rate = get_u32le(body + 4);
      bits = get_u16le(body + 14);
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      if (!channels || !bits) return fail("data before fmt");
      if (*bits != 16 || *channels == 0) return fail("only 16-bit PCM is supported");
      std::size_t avail = std::min<std::size_t>(len, b.size() - pos - 8);
      std::size_t frame = 2u * *channels;
      AudioClip clip;
      clip.sample_rate_hz = static_cast<int>(rate);
      for (std::size_t i = 0; i + frame <= avail; i += frame) {
        clip.samples.push_back(static_cast<std::int16_t>(get_u16le(body + i)));
      }
      return clip;
    }
    pos += 8 + len + (len & 1);
  }
  return fail("no data chunk");
}

void write_wav(const std::string& path, const AudioClip& clip) {
  auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Internal, "cannot write " + path);
}

AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::InvalidAudio, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

}  // namespace atlas::tone
