#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "wavesp/metrics.hpp"
#include "wavesp/tensor.hpp"

namespace wavesp {

constexpr int kSampleRate = 16000;
constexpr int kFrontendWindow = 400;  // 25 ms
constexpr int kFrontendHop = 320;     // 20 ms
constexpr int kFrontendFft = 512;
constexpr int kFrontendBins = kFrontendFft / 2 + 1;

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = kSampleRate;

  double seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// ---------------------------------------------------------------------------
// Chunking
// ---------------------------------------------------------------------------

// Consecutive non-overlapping windows of len_s seconds; the final remainder
// is zero-padded at the tail. Anything shorter than one window yields a
// single padded chunk.
inline std::vector<Waveform> chunk_audio(const Waveform& w, double len_s = 4.0) {
  check_arg(len_s > 0.0, "chunk_audio: chunk length must be positive");
  check_arg(!w.samples.empty(), "chunk_audio: empty waveform");
  const size_t win = static_cast<size_t>(std::llround(len_s * w.sample_rate));
  check_arg(win >= 1, "chunk_audio: chunk shorter than one sample");
  const size_t n_chunks = (w.samples.size() + win - 1) / win;
  std::vector<Waveform> out;
  out.reserve(n_chunks);
  for (size_t c = 0; c < n_chunks; ++c) {
    Waveform chunk;
    chunk.sample_rate = w.sample_rate;
    chunk.samples.assign(win, 0.0);
    const size_t begin = c * win;
    const size_t len = std::min(win, w.samples.size() - begin);
    std::copy_n(w.samples.begin() + static_cast<long>(begin), len,
                chunk.samples.begin());
    out.push_back(std::move(chunk));
  }
  return out;
}

// ---------------------------------------------------------------------------
// 16-bit PCM mono WAV I/O
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ofstream& f, uint32_t v) {
  char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
               static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
  f.write(b, 4);
}
inline void put_u16(std::ofstream& f, uint16_t v) {
  char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
  f.write(b, 2);
}
inline uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t get_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

inline void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open wav for writing: " + path);
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  f.write("RIFF", 4);
  detail::put_u32(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  detail::put_u32(f, 16);
  detail::put_u16(f, 1);  // PCM
  detail::put_u16(f, 1);  // mono
  detail::put_u32(f, static_cast<uint32_t>(w.sample_rate));
  detail::put_u32(f, static_cast<uint32_t>(w.sample_rate) * 2);
  detail::put_u16(f, 2);
  detail::put_u16(f, 16);
  f.write("data", 4);
  detail::put_u32(f, data_bytes);
  for (double s : w.samples) {
    double c = std::clamp(s, -1.0, 1.0);
    int16_t q = static_cast<int16_t>(std::lround(c * 32767.0));
    char b[2] = {static_cast<char>(q & 0xff), static_cast<char>((q >> 8) & 0xff)};
    f.write(b, 2);
  }
}

inline Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open wav: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  check_arg(bytes.size() >= 44 && std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
                std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
            "read_wav: not a RIFF/WAVE file: " + path);
  Waveform w;
  size_t pos = 12;
  bool got_fmt = false, got_data = false;
  uint16_t channels = 0, bits = 0;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t sz = detail::get_u32(bytes.data() + pos + 4);
    const size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0 && body + 16 <= bytes.size()) {
      const uint16_t fmt = detail::get_u16(bytes.data() + body);
      channels = detail::get_u16(bytes.data() + body + 2);
      w.sample_rate = static_cast<int>(detail::get_u32(bytes.data() + body + 4));
      bits = detail::get_u16(bytes.data() + body + 14);
      check_arg(fmt == 1, "read_wav: only PCM supported: " + path);
      got_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      check_arg(got_fmt, "read_wav: data chunk before fmt: " + path);
      check_arg(channels == 1 && bits == 16,
                "read_wav: expected 16-bit mono, got " + std::to_string(channels) +
                    "ch/" + std::to_string(bits) + "bit: " + path);
      const size_t count = std::min<size_t>(sz, bytes.size() - body) / 2;
      w.samples.resize(count);
      for (size_t i = 0; i < count; ++i) {
        int16_t q = static_cast<int16_t>(
            detail::get_u16(bytes.data() + body + 2 * i));
        w.samples[i] = q / 32768.0;
      }
      got_data = true;
      break;
    }
    pos = body + sz + (sz & 1);
  }
  check_arg(got_data, "read_wav: missing data chunk: " + path);
  return w;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

struct CorpusSpec {
  int n_train = 200;  // per class
  int n_dev = 50;
  int n_eval = 200;
  uint64_t seed = 123;
  std::vector<std::string> artifact_kinds = {"spectral_notch", "aliasing_fold",
                                             "phase_jitter", "am_buzz"};
  double min_seconds = 1.0;
  double max_seconds = 2.0;
};

struct ManifestEntry {
  std::string utt_id;
  std::string wav_path;
  Label label = Label::kBonafide;
  std::string split;  // train | dev | eval
};

inline void write_manifest(const std::vector<ManifestEntry>& entries,
                           const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open manifest for writing: " + path);
  for (const auto& e : entries)
    f << e.utt_id << ' ' << e.wav_path << ' ' << label_name(e.label) << ' '
      << e.split << '\n';
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    ManifestEntry e;
    std::string label;
    if (!(is >> e.utt_id >> e.wav_path >> label >> e.split))
      throw std::runtime_error("malformed manifest line: " + line);
    e.label = label_from_name(label);
    out.push_back(std::move(e));
  }
  return out;
}

namespace detail {

// Second-order IIR notch (RBJ cookbook), applied in place.
inline void iir_notch(std::vector<double>& x, double center_hz, double q, int sr) {
  const double w0 = 2.0 * 3.141592653589793238462643383279502884 * center_hz / sr;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha;
  const double b0 = 1.0 / a0, b1 = -2.0 * cw / a0, b2 = 1.0 / a0;
  const double a1 = -2.0 * cw / a0, a2 = (1.0 - alpha) / a0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (double& v : x) {
    const double in = v;
    v = b0 * in + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = in;
    y2 = y1;
    y1 = v;
  }
}

}  // namespace detail

// One synthetic voiced utterance: harmonic stack on a random f0 with
// formant-like band emphasis plus noise at a random SNR. A non-empty
// artifact kind layers one spoofing artifact on top.
inline Waveform synth_utterance(const CorpusSpec& spec, RngStream& rng,
                                const std::string& artifact) {
  Waveform w;
  w.sample_rate = kSampleRate;
  const double dur = rng.uniform(spec.min_seconds, spec.max_seconds);
  const size_t n = static_cast<size_t>(std::llround(dur * kSampleRate));
  const double f0 = rng.uniform(80.0, 300.0);
  const int harmonics = std::max(3, static_cast<int>(4000.0 / f0));
  const double tilt = rng.uniform(0.5, 1.5);

  std::vector<double> amp(static_cast<size_t>(harmonics));
  std::vector<double> phase(static_cast<size_t>(harmonics));
  for (int k = 0; k < harmonics; ++k) {
    amp[static_cast<size_t>(k)] = std::pow(k + 1.0, -tilt);
    phase[static_cast<size_t>(k)] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  }
  // Two formant-like resonances boost nearby harmonics.
  for (int r = 0; r < 2; ++r) {
    const double fc = rng.uniform(300.0, 3000.0);
    const double bw = rng.uniform(80.0, 300.0);
    const double gain = rng.uniform(1.0, 4.0);
    for (int k = 0; k < harmonics; ++k) {
      const double fk = (k + 1) * f0;
      amp[static_cast<size_t>(k)] *=
          1.0 + gain * std::exp(-0.5 * (fk - fc) * (fk - fc) / (bw * bw));
    }
  }

  // Artifact parameters drawn up front so the stream layout is fixed.
  const double notch_hz = rng.uniform(500.0, 5000.0);
  const int fold = rng.uniform_int(2, 4);
  const double jitter_depth = rng.uniform(0.3, 0.6);
  const double jitter_hz = rng.uniform(4.0, 14.0);
  const double jitter_phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double buzz_depth = rng.uniform(0.4, 0.7);
  const double buzz_hz = rng.uniform(20.0, 80.0);
  const double hum_level = rng.uniform(0.02, 0.05);

  w.samples.assign(n, 0.0);
  const double two_pi = 2.0 * 3.141592653589793238462643383279502884;
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    double jit = 0.0;
    if (artifact == "phase_jitter")
      jit = jitter_depth * std::sin(two_pi * jitter_hz * t + jitter_phase);
    double s = 0.0;
    for (int k = 0; k < harmonics; ++k) {
      const double fk = (k + 1) * f0;
      if (fk >= kSampleRate / 2.0) break;
      s += amp[static_cast<size_t>(k)] *
           std::sin(two_pi * fk * t + phase[static_cast<size_t>(k)] + (k + 1) * jit);
    }
    w.samples[i] = s;
  }

  // Normalize, then add noise at SNR in [10, 30] dB.
  double peak = 1e-12;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  double rms = 0.0;
  for (double& v : w.samples) {
    v *= 0.6 / peak;
    rms += v * v;
  }
  rms = std::sqrt(rms / static_cast<double>(n));
  const double snr_db = rng.uniform(10.0, 30.0);
  const double noise_std = rms / std::pow(10.0, snr_db / 20.0);
  for (double& v : w.samples) v += noise_std * rng.normal();

  if (artifact == "spectral_notch") {
    detail::iir_notch(w.samples, notch_hz, 1.2, kSampleRate);
    detail::iir_notch(w.samples, notch_hz, 1.2, kSampleRate);
  } else if (artifact == "aliasing_fold") {
    for (size_t i = 0; i < n; ++i)
      w.samples[i] = w.samples[i - (i % static_cast<size_t>(fold))];
  } else if (artifact == "am_buzz") {
    // Amplitude modulation plus an additive hum line at the buzz frequency.
    for (size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / kSampleRate;
      const double buzz = std::sin(two_pi * buzz_hz * t);
      w.samples[i] = w.samples[i] * (1.0 + buzz_depth * buzz) + hum_level * buzz;
    }
  }

  peak = 1e-12;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.95)
    for (double& v : w.samples) v *= 0.95 / peak;
  return w;
}

// Deterministic synthetic corpus: waveforms under <out_dir>/wav plus a
// manifest. Spoof utterances reuse the bonafide generator with one sampled
// artifact kind; an empty artifact list makes the classes indistinguishable.
inline std::vector<ManifestEntry> synth_corpus(const CorpusSpec& spec,
                                               const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "wav");
  std::vector<ManifestEntry> manifest;
  const struct {
    const char* split;
    int count;
  } splits[] = {{"train", spec.n_train}, {"dev", spec.n_dev}, {"eval", spec.n_eval}};
  for (const auto& sp : splits) {
    for (Label label : {Label::kBonafide, Label::kSpoof}) {
      for (int i = 0; i < sp.count; ++i) {
        char utt[96];
        std::snprintf(utt, sizeof(utt), "%s_%s_%04d", sp.split, label_name(label), i);
        RngStream rng(spec.seed, std::string("corpus/") + utt);
        std::string artifact;
        if (label == Label::kSpoof && !spec.artifact_kinds.empty()) {
          const int pick = rng.uniform_int(
              0, static_cast<int>(spec.artifact_kinds.size()) - 1);
          artifact = spec.artifact_kinds[static_cast<size_t>(pick)];
        }
        Waveform w = synth_utterance(spec, rng, artifact);
        const std::string rel = std::string("wav/") + utt + ".wav";
        write_wav((fs::path(out_dir) / rel).string(), w);
        manifest.push_back({utt, rel, label, sp.split});
      }
    }
  }
  write_manifest(manifest, (fs::path(out_dir) / "manifest.txt").string());
  return manifest;
}

// ---------------------------------------------------------------------------
// Frozen feature extractor stand-in: Hann STFT log-power, projected to d
// channels by a fixed seed-derived random matrix.
// ---------------------------------------------------------------------------

namespace detail {

// In-place iterative radix-2 FFT over re/im of power-of-two length.
inline void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
  const size_t n = re.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * 3.141592653589793238462643383279502884 /
                       static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (size_t k = 0; k < len / 2; ++k) {
        const size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

}  // namespace detail

class FrontEnd {
 public:
  FrontEnd(int d, uint64_t seed) : d_(d), seed_(seed) {
    RngStream rng(seed, "frontend");
    const double std = 1.0 / std::sqrt(static_cast<double>(kFrontendBins));
    proj_ = Tensor::randn({kFrontendBins, d}, rng, std, false);
  }

  int dim() const { return d_; }
  uint64_t seed() const { return seed_; }
  const Tensor& projection() const { return proj_; }

  // Frame count is floor(n/hop) + 1; trailing windows are zero-padded, so a
  // 4 s chunk at 16 kHz maps to exactly 201 frames.
  static int frame_count(size_t n_samples) {
    return static_cast<int>(n_samples / kFrontendHop) + 1;
  }

  // (T, d) feature matrix; frozen (never requires grad) and deterministic.
  Tensor features(const Waveform& w) const {
    check_arg(w.sample_rate == kSampleRate,
              "frontend: expected 16 kHz input, got " +
                  std::to_string(w.sample_rate));
    check_arg(!w.samples.empty(), "frontend: empty waveform");
    const int T = frame_count(w.samples.size());
    Tensor out = Tensor::zeros({T, d_});
    std::vector<double> re(kFrontendFft), im(kFrontendFft);
    std::vector<double> logmag(kFrontendBins);
    for (int t = 0; t < T; ++t) {
      const size_t start = static_cast<size_t>(t) * kFrontendHop;
      std::fill(re.begin(), re.end(), 0.0);
      std::fill(im.begin(), im.end(), 0.0);
      for (int i = 0; i < kFrontendWindow; ++i) {
        const size_t idx = start + static_cast<size_t>(i);
        if (idx >= w.samples.size()) break;
        const double hann =
            0.5 * (1.0 - std::cos(2.0 * 3.141592653589793238462643383279502884 *
                                  i / (kFrontendWindow - 1)));
        re[static_cast<size_t>(i)] = w.samples[idx] * hann;
      }
      detail::fft_radix2(re, im);
      for (int b = 0; b < kFrontendBins; ++b)
        logmag[static_cast<size_t>(b)] = std::log(
            re[static_cast<size_t>(b)] * re[static_cast<size_t>(b)] +
            im[static_cast<size_t>(b)] * im[static_cast<size_t>(b)] + 1e-10);
      for (int j = 0; j < d_; ++j) {
        double acc = 0.0;
        for (int b = 0; b < kFrontendBins; ++b)
          acc += logmag[static_cast<size_t>(b)] * proj_.at(b, j);
        out.set(t, j, acc);
      }
    }
    return out;
  }

 private:
  int d_;
  uint64_t seed_;
  Tensor proj_;
};

inline Tensor frontend_features(const Waveform& w, int d, uint64_t seed) {
  return FrontEnd(d, seed).features(w);
}

}  // namespace wavesp
