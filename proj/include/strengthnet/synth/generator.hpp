#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "strengthnet/audio/wav.hpp"
#include "strengthnet/common/binary_io.hpp"
#include "strengthnet/common/error.hpp"
#include "strengthnet/common/random.hpp"
#include "strengthnet/pipeline/manifest.hpp"

namespace strengthnet::synth {

/// Harmonic timbre for one emotion: base pitch, spectral tilt (harmonic k has
/// amplitude k^-tilt) and a resonance boosting harmonics near `formant_hz`.
struct EmotionTemplate {
  double f0_hz;
  double tilt;
  double formant_hz;
  double formant_boost;
};

/// Per-domain recording setup: its own set of emotion templates plus a
/// global change of pitch, timbre and level.
struct DomainVariant {
  int template_set = 0;
  double f0_scale = 1.0;
  double formant_scale = 1.0;
  double tilt_offset = 0.0;
  double gain_db = 0.0;
};

/// Variant 0 is the reference domain. Variant 1 uses the second template set
/// and is lower, brighter-formant, darker-tilt and 6 dB louder.
inline DomainVariant domain_variant(int index) {
  switch (index) {
    case 0:
      return {};
    case 1:
      return {1, 0.85, 1.3, 0.25, 6.0};
    default:
      fail(ErrorCode::kInvalidArgument, "unknown domain variant " + std::to_string(index));
  }
}

/// Timbre of neutral speech in template set 0; every emotion moves away from it.
inline constexpr EmotionTemplate kNeutralTemplate = {180.0, 1.2, 1000.0, 1.5};

/// Timbre of neutral speech in template set 1.
inline constexpr EmotionTemplate kNeutralTemplateSet1 = {160.0, 0.9, 1500.0, 2.0};

inline EmotionTemplate neutral_template(int template_set = 0) {
  require(template_set == 0 || template_set == 1, ErrorCode::kInvalidArgument,
          "unknown template set " + std::to_string(template_set));
  return template_set == 0 ? kNeutralTemplate : kNeutralTemplateSet1;
}

/// Fully expressed timbre of each emotion in a template set; "neutral" maps
/// to the set's neutral template. Set 1 moves tilt and formant the opposite
/// way from set 0 for every emotion.
inline EmotionTemplate emotion_template(std::string_view emotion, int template_set = 0) {
  const auto neutral = neutral_template(template_set);
  if (emotion == "neutral") return neutral;
  if (template_set == 0) {
    if (emotion == "happy") return {240.0, 0.9, 1600.0, 2.0};
    if (emotion == "sad") return {140.0, 1.8, 600.0, 1.2};
    if (emotion == "angry") return {200.0, 0.6, 2400.0, 2.5};
    if (emotion == "surprise") return {290.0, 1.1, 3000.0, 2.0};
  } else {
    if (emotion == "happy") return {200.0, 1.5, 800.0, 1.2};
    if (emotion == "sad") return {125.0, 0.4, 2600.0, 2.6};
    if (emotion == "angry") return {175.0, 1.8, 700.0, 1.0};
    if (emotion == "surprise") return {240.0, 1.6, 900.0, 1.4};
  }
  fail(ErrorCode::kInvalidArgument, "no template for emotion '" + std::string(emotion) + "'");
}

/// Timbre at a given strength: `neutral` moved a fraction `strength`^2 of
/// the way to the emotion's template.
inline EmotionTemplate blend(const EmotionTemplate& target, double strength,
                             const EmotionTemplate& neutral = kNeutralTemplate) {
  auto lerp = [strength](double a, double b) { return a + strength * strength * (b - a); };
  const auto& n = neutral;
  return {lerp(n.f0_hz, target.f0_hz), lerp(n.tilt, target.tilt), lerp(n.formant_hz, target.formant_hz),
          lerp(n.formant_boost, target.formant_boost)};
}

/// Utterance-level variation that is unrelated to strength.
struct Nuisance {
  double f0_scale = 1.0;
  double gain_db = 0.0;
  double am_phase = 0.0;
  double pitch_phase = 0.0;
  std::uint64_t noise_seed = 0;
};

inline constexpr int kSampleRate = 16000;
inline constexpr double kBaseGainDb = -30.0;
inline constexpr double kStrengthGainDb = 12.0;
inline constexpr double kMaxAmDepth = 0.8;
inline constexpr double kMaxPitchExcursion = 0.12;
inline constexpr double kAmRateHz = 4.0;
inline constexpr double kPitchRateHz = 3.0;
inline constexpr double kNoiseAmplitude = 1e-3;

/// Renders one utterance of `emotion`'s template at `strength`. Strength
/// moves the timbre away from neutral, raises the level linearly in dB and
/// deepens both the amplitude modulation and the pitch excursion, so frame
/// energy variance grows monotonically with it. Harmonic amplitudes are
/// normalized to unit power, making the level independent of the timbre.
inline std::vector<float> synthesize(const EmotionTemplate& emotion, const DomainVariant& domain, double strength,
                                     const Nuisance& nuisance, std::size_t num_samples) {
  require(strength >= 0.0 && strength <= 1.0, ErrorCode::kOutOfRange, "strength_param outside [0,1]");
  const auto tmpl = blend(emotion, strength, neutral_template(domain.template_set));
  const double two_pi = 2.0 * std::numbers::pi;
  const double sr = kSampleRate;
  const double f0 = tmpl.f0_hz * domain.f0_scale * nuisance.f0_scale;
  const double formant = tmpl.formant_hz * domain.formant_scale;
  const double tilt = tmpl.tilt + domain.tilt_offset;
  const double excursion = kMaxPitchExcursion * strength;
  const double top_f0 = f0 * (1.0 + excursion);
  const auto n_harmonics = std::max<std::size_t>(1, static_cast<std::size_t>(7600.0 / top_f0));

  std::vector<double> amp(n_harmonics), phase0(n_harmonics);
  double power = 0.0;
  for (std::size_t k = 0; k < n_harmonics; ++k) {
    const double hk = static_cast<double>(k + 1);
    const double dist = (hk * f0 - formant) / 400.0;
    amp[k] = std::pow(hk, -tilt) * (1.0 + tmpl.formant_boost * std::exp(-dist * dist));
    // Fixed quadratic phases keep the crest factor low.
    phase0[k] = std::numbers::pi * hk * hk / static_cast<double>(n_harmonics);
    power += 0.5 * amp[k] * amp[k];
  }
  for (auto& a : amp) a /= std::sqrt(2.0 * power);

  const double gain = std::pow(10.0, (kBaseGainDb + kStrengthGainDb * strength + domain.gain_db + nuisance.gain_db) / 20.0);
  const double depth = kMaxAmDepth * strength;
  const auto fade = static_cast<std::size_t>(0.01 * sr);
  Rng noise(mix_seed({nuisance.noise_seed, 0x4e4f4953ull}));
  std::vector<float> out(num_samples);
  double phi = 0.0;
  for (std::size_t n = 0; n < num_samples; ++n) {
    const double t = static_cast<double>(n) / sr;
    const double inst_f0 = f0 * (1.0 + excursion * std::sin(two_pi * kPitchRateHz * t + nuisance.pitch_phase));
    double v = 0.0;
    for (std::size_t k = 0; k < n_harmonics; ++k) v += amp[k] * std::sin(static_cast<double>(k + 1) * phi + phase0[k]);
    phi = std::fmod(phi + two_pi * inst_f0 / sr, two_pi);
    double env = 1.0 + depth * std::sin(two_pi * kAmRateHz * t + nuisance.am_phase);
    const std::size_t edge = std::min(n, num_samples - 1 - n);
    if (edge < fade) env *= static_cast<double>(edge) / static_cast<double>(fade);
    v = gain * env * v + kNoiseAmplitude * (2.0 * uniform01(noise) - 1.0);
    out[n] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return out;
}

enum class StrengthLevels {
  /// Emotional strengths drawn from [0.05,0.45] or [0.55,0.95] with equal
  /// probability, mimicking normal and strong intensity recordings.
  kTwoLevel,
  kUniform,
};

struct SynthSpec {
  std::size_t num_utterances = 200;
  std::vector<std::string> emotions = {"happy", "sad", "angry", "surprise", "neutral"};
  double duration_min_s = 0.4;
  double duration_max_s = 0.8;
  std::uint64_t seed = 0;
  std::string dataset_id = "synth";
  int variant = 0;
  StrengthLevels levels = StrengthLevels::kTwoLevel;
};

inline void validate(const SynthSpec& s) {
  require(s.num_utterances > 0, ErrorCode::kInvalidArgument, "num_utterances must be positive");
  require(!s.emotions.empty(), ErrorCode::kInvalidArgument, "emotion list is empty");
  for (const auto& e : s.emotions) {
    require(is_known_emotion(e), ErrorCode::kInvalidArgument, "unknown emotion '" + e + "'");
  }
  require(s.duration_min_s >= 0.1 && s.duration_max_s >= s.duration_min_s, ErrorCode::kInvalidArgument,
          "duration range must satisfy 0.1 <= min <= max");
  require(!s.dataset_id.empty(), ErrorCode::kInvalidArgument, "dataset_id is empty");
  domain_variant(s.variant);
}

/// Reads a JSON object; absent keys keep their defaults, unknown keys are errors.
inline SynthSpec parse_synth_spec(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, std::string("synth spec: ") + e.what());
  }
  require(j.is_object(), ErrorCode::kParseError, "synth spec must be a JSON object");
  SynthSpec s;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "num_utterances") {
        s.num_utterances = value.get<std::size_t>();
      } else if (key == "emotions") {
        s.emotions = value.get<std::vector<std::string>>();
      } else if (key == "duration_min") {
        s.duration_min_s = value.get<double>();
      } else if (key == "duration_max") {
        s.duration_max_s = value.get<double>();
      } else if (key == "seed") {
        s.seed = value.get<std::uint64_t>();
      } else if (key == "dataset_id") {
        s.dataset_id = value.get<std::string>();
      } else if (key == "variant") {
        s.variant = value.get<int>();
      } else if (key == "strength_levels") {
        const auto v = value.get<std::string>();
        if (v == "two_level") {
          s.levels = StrengthLevels::kTwoLevel;
        } else if (v == "uniform") {
          s.levels = StrengthLevels::kUniform;
        } else {
          fail(ErrorCode::kParseError, "strength_levels must be two_level or uniform");
        }
      } else {
        fail(ErrorCode::kParseError, "unknown synth spec key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, std::string("synth spec: ") + e.what());
  }
  validate(s);
  return s;
}

/// Generator-side truth for one utterance; never written to the manifest.
struct TruthRow {
  std::string utterance_id;
  std::string emotion;
  double strength_param;
};

struct SynthCorpus {
  CorpusManifest manifest;
  std::vector<TruthRow> truth;
};

inline std::string format_truth(std::span<const TruthRow> rows) {
  std::string out = "utterance_id\temotion\tstrength_param\n";
  for (const auto& r : rows) {
    out += r.utterance_id + '\t' + r.emotion + '\t' + strengthnet::detail::format_fixed(r.strength_param, 6) + '\n';
  }
  return out;
}

inline std::vector<TruthRow> parse_truth(std::string_view text) {
  std::vector<TruthRow> rows;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == text.npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line_no++ == 0 || line.empty()) continue;
    const auto f = strengthnet::detail::split_tabs(line);
    require(f.size() == 3, ErrorCode::kParseError, "truth line " + std::to_string(line_no) + " needs 3 fields");
    rows.push_back({f[0], f[1], strengthnet::detail::parse_double(f[2], "strength_param")});
  }
  return rows;
}

/// Writes wavs/<id>.wav, manifest.tsv (strength column empty) and truth.tsv
/// under `out_dir`. Emotions are assigned round-robin; neutral utterances get
/// strength 0.
inline SynthCorpus generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  validate(spec);
  const auto variant = domain_variant(spec.variant);
  SynthCorpus corpus;
  corpus.manifest.base_dir = out_dir;
  for (std::size_t i = 0; i < spec.num_utterances; ++i) {
    Rng rng(mix_seed({spec.seed, stable_hash(spec.dataset_id), i}));
    const std::string& emotion = spec.emotions[i % spec.emotions.size()];
    double strength = 0.0;
    if (emotion != kNeutral) {
      if (spec.levels == StrengthLevels::kTwoLevel) {
        const bool strong = uniform01(rng) < 0.5;
        strength = strong ? uniform(rng, 0.55, 0.95) : uniform(rng, 0.05, 0.45);
      } else {
        strength = uniform01(rng);
      }
    }
    Nuisance nuisance;
    nuisance.f0_scale = uniform(rng, 0.95, 1.05);
    nuisance.gain_db = uniform(rng, -1.0, 1.0);
    nuisance.am_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    nuisance.pitch_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    nuisance.noise_seed = rng();
    const double seconds = uniform(rng, spec.duration_min_s, spec.duration_max_s);
    const auto samples = static_cast<std::size_t>(std::lround(seconds * kSampleRate));

    char id[32];
    std::snprintf(id, sizeof id, "_%04zu", i);
    UtteranceRecord r;
    r.utterance_id = spec.dataset_id + id;
    r.wav_path = "wavs/" + r.utterance_id + ".wav";
    r.dataset_id = spec.dataset_id;
    r.emotion = emotion;
    const auto audio = synthesize(emotion_template(emotion, variant.template_set), variant, strength, nuisance, samples);
    audio::save_wav(out_dir / r.wav_path, audio);
    corpus.truth.push_back({r.utterance_id, emotion, strength});
    corpus.manifest.records.push_back(std::move(r));
  }
  write_manifest(out_dir / "manifest.tsv", corpus.manifest);
  io::write_file(out_dir / "truth.tsv", format_truth(corpus.truth));
  return corpus;
}

}  // namespace strengthnet::synth
