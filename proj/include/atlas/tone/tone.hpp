#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace atlas::tone {

using Json = nlohmann::json;

inline constexpr double kAnalysisCapS = 20.0;
inline constexpr double kFrameS = 0.020;
inline constexpr double kOvertoneFloorDb = -45.0;

struct AudioClip {
  std::vector<std::int16_t> samples;
  int sample_rate_hz = 8000;

  double duration_s() const { return sample_rate_hz ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0; }
};

struct Overtone {
  int multiple = 2;
  double rel_db = 0.0;  // relative to the lowest base frequency
};

struct ToneFingerprint {
  std::string operator_label;
  std::vector<double> freqs_hz;
  double duty_on_s = 1.0;
  double duty_off_s = 4.0;
  double amp_dbfs = -12.0;  // RMS of an on-segment, full scale = 1.0
  std::vector<Overtone> overtone_ratios;

  // Throws Error(InvalidFingerprint).
  void validate() const;
};

struct FeatureVector {
  std::vector<double> freqs_hz;  // ascending
  double duty_on_s = 0.0;
  double duty_off_s = 0.0;
  double amp_dbfs = 0.0;
  std::vector<Overtone> overtone_ratios;
  int bursts = 0;
  struct Confidence {
    double freq = 0.0;
    double duty = 0.0;
    double amp = 0.0;
    double overtones = 0.0;
  } confidence;
};

Json to_json(const ToneFingerprint& fp);
ToneFingerprint fingerprint_from_json(const Json& j);  // validates
Json to_json(const FeatureVector& f);

// The shipped database: European single tones and North American dual tones.
// Amplitudes and overtones are representative values, not measurements.
const std::vector<ToneFingerprint>& preset_fingerprints();
std::vector<ToneFingerprint> load_db(const std::string& path);
void save_db(const std::string& path, const std::vector<ToneFingerprint>& db);
// Throws Error(InvalidFingerprint) for an unknown label.
const ToneFingerprint& find_fingerprint(const std::vector<ToneFingerprint>& db, const std::string& label);

struct SynthOptions {
  std::optional<double> noise_dbfs;  // white noise RMS; none = clean
  std::uint64_t seed = 1;
  int sample_rate_hz = 8000;
  double offset_s = 0.0;  // where in the on/off cycle the clip starts
};

// Errors: InvalidFingerprint (bad fingerprint, or shorter than one cycle).
AudioClip synthesize_ringback(const ToneFingerprint& fp, double total_s, const SynthOptions& opts = {});

// Errors: InvalidAudio (under 1 s or below 8 kHz), NoToneDetected.
FeatureVector extract_features(const AudioClip& clip);

double fingerprint_distance(const FeatureVector& f, const ToneFingerprint& fp);

struct Match {
  std::string label;
  double distance = 0.0;
  bool tie = false;  // equal distance to a neighbour in the ranking
};

std::vector<Match> match_fingerprint(const FeatureVector& f, const std::vector<ToneFingerprint>& db);

// Rank-1 distances above this are reported as "no confident match".
// Value from the calibration run recorded in the test fixtures.
inline constexpr double kDefaultRejectThreshold = 1.8;

struct Identification {
  std::vector<Match> ranked;
  bool confident = false;
};

Identification identify(const FeatureVector& f, const std::vector<ToneFingerprint>& db,
                        double reject_threshold = kDefaultRejectThreshold);

// Threshold calibration over synthetic captures of every db entry.
// genuine: distance to the entry that produced the clip.
// impostor: best distance once that entry is removed from the db (a tone the db does not know).
struct Calibration {
  double genuine_max = 0.0;
  double impostor_min = 0.0;
  double threshold = 0.0;  // midpoint; meaningful only when genuine_max < impostor_min
  int trials = 0;
  std::vector<double> noise_dbfs;
  int seeds = 0;
};

Calibration calibrate_threshold(const std::vector<ToneFingerprint>& db, const std::vector<double>& noise_dbfs,
                                int seeds, double clip_s = kAnalysisCapS);
Json to_json(const Calibration& c);

// RIFF/WAVE, PCM 16-bit mono. Multi-channel input keeps the first channel.
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);
AudioClip decode_wav(const std::vector<std::uint8_t>& bytes);  // Error(InvalidAudio)
void write_wav(const std::string& path, const AudioClip& clip);
AudioClip read_wav(const std::string& path);

}  // namespace atlas::tone
