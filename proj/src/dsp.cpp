#include "kws/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fft.hpp"
#include "kws/errors.hpp"

namespace kws {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLogFloor = 1e-10;

constexpr int kMelBins = 64;
constexpr int kMelWindow = 1024;
constexpr int kMelHop = 256;

constexpr int kHfccWindow = 640;  // 40 ms at 16 kHz
constexpr int kHfccHop = 160;     // 10 ms
constexpr int kHfccFilters = 29;
constexpr int kHfccCoeffs = 13;
constexpr int kHfccFft = 1024;

double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    return std::sin(kPi * x) / (kPi * x);
}

double bessel_i0(double x) {
    // Power series; converges quickly for the argument range used here.
    double sum = 1.0, term = 1.0;
    for (int k = 1; k < 64; ++k) {
        term *= (x / (2.0 * k)) * (x / (2.0 * k));
        sum += term;
        if (term < 1e-16 * sum) break;
    }
    return sum;
}

}  // namespace

std::string to_string(SpectrogramKind kind) {
    return kind == SpectrogramKind::log_mel ? "log_mel" : "hfcc";
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double erb_hz(double center_hz) {
    return 6.23e-6 * center_hz * center_hz + 93.39e-3 * center_hz + 28.52;
}

std::vector<double> mel_filter_centers_hz(int count, double f_lo_hz, double f_hi_hz) {
    std::vector<double> centers(count);
    double m_lo = hz_to_mel(f_lo_hz), m_hi = hz_to_mel(f_hi_hz);
    for (int i = 0; i < count; ++i) {
        centers[i] = mel_to_hz(m_lo + (m_hi - m_lo) * (i + 1) / (count + 1));
    }
    return centers;
}

AudioBuffer resample(const AudioBuffer& audio, int target_rate_hz) {
    if (audio.samples.empty()) throw degenerate_input_error("resample: empty audio");
    if (audio.sample_rate_hz < 1 || target_rate_hz < 1) {
        throw config_error("resample: sample rates must be positive");
    }
    if (audio.sample_rate_hz == target_rate_hz) return audio;

    const double ratio = static_cast<double>(target_rate_hz) / audio.sample_rate_hz;
    const double scale = std::min(1.0, ratio);  // anti-alias cutoff
    constexpr double kBeta = 8.0;
    constexpr double kHalfTaps = 32.0;  // 64 taps per phase
    const double i0_beta = bessel_i0(kBeta);
    const double half_width = kHalfTaps / scale;  // support in input samples

    const size_t in_len = audio.samples.size();
    const size_t out_len = static_cast<size_t>(std::llround(in_len * ratio));

    AudioBuffer out;
    out.sample_rate_hz = target_rate_hz;
    out.samples.resize(out_len);
    for (size_t m = 0; m < out_len; ++m) {
        const double center = m / ratio;
        const long k_lo = std::max<long>(0, static_cast<long>(std::ceil(center - half_width)));
        const long k_hi =
            std::min<long>(static_cast<long>(in_len) - 1, static_cast<long>(std::floor(center + half_width)));
        double acc = 0.0;
        for (long k = k_lo; k <= k_hi; ++k) {
            const double u = (k - center) * scale;  // in [-kHalfTaps, kHalfTaps]
            const double frac = u / kHalfTaps;
            const double window = bessel_i0(kBeta * std::sqrt(std::max(0.0, 1.0 - frac * frac))) / i0_beta;
            acc += audio.samples[k] * scale * sinc(u) * window;
        }
        out.samples[m] = static_cast<float>(acc);
    }
    return out;
}

AudioBuffer highpass(const AudioBuffer& audio, double cutoff_hz) {
    if (audio.samples.empty()) throw degenerate_input_error("highpass: empty audio");
    const double k = std::tan(kPi * cutoff_hz / audio.sample_rate_hz);
    const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k * k);
    const double b0 = norm;
    const double b1 = -2.0 * norm;
    const double b2 = norm;
    const double a1 = 2.0 * (k * k - 1.0) * norm;
    const double a2 = (1.0 - std::numbers::sqrt2 * k + k * k) * norm;

    AudioBuffer out;
    out.sample_rate_hz = audio.sample_rate_hz;
    out.samples.resize(audio.samples.size());

    // Transposed direct form II, states seeded with the steady state for
    // x[0] (the high-pass steady-state output is exactly 0).
    const double x0 = audio.samples.front();
    double s1 = -b0 * x0;
    double s2 = b2 * x0;
    for (size_t n = 0; n < audio.samples.size(); ++n) {
        const double x = audio.samples[n];
        const double y = b0 * x + s1;
        s1 = b1 * x - a1 * y + s2;
        s2 = b2 * x - a2 * y;
        out.samples[n] = static_cast<float>(y);
    }
    return out;
}

AudioBuffer preprocess(const AudioBuffer& audio, bool* silent) {
    if (silent) *silent = false;
    if (audio.samples.empty()) throw degenerate_input_error("preprocess: empty audio");

    AudioBuffer work = resample(audio, 16000);
    work = highpass(work, 50.0);

    float peak = 0.0f;
    for (float s : work.samples) peak = std::max(peak, std::abs(s));
    if (peak < 1e-9f) {
        std::fill(work.samples.begin(), work.samples.end(), 0.0f);
        if (silent) *silent = true;
        return work;
    }
    for (float& s : work.samples) s /= peak;
    return work;
}

namespace {

struct Frame {
    std::vector<double> windowed;
    double raw_energy = 0.0;
};

std::vector<double> hann_window(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
    return w;
}

std::vector<double> hamming_window(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / n);
    return w;
}

int frame_count(size_t samples, int window, int hop) {
    return 1 + static_cast<int>((samples - window) / hop);
}

void require_16k(const AudioBuffer& audio, const char* who) {
    if (audio.sample_rate_hz != 16000) {
        throw config_error(std::string(who) + ": expected 16 kHz input, got " +
                           std::to_string(audio.sample_rate_hz) + " Hz (run preprocess first)");
    }
}

/// Triangular filter weights evaluated at the one-sided FFT bin frequencies.
std::vector<std::vector<double>> triangle_bank(const std::vector<double>& lo,
                                               const std::vector<double>& center,
                                               const std::vector<double>& hi, int fft_size,
                                               double sample_rate) {
    const int bins = fft_size / 2 + 1;
    std::vector<std::vector<double>> bank(center.size(), std::vector<double>(bins, 0.0));
    for (size_t m = 0; m < center.size(); ++m) {
        for (int k = 0; k < bins; ++k) {
            const double f = k * sample_rate / fft_size;
            double w = 0.0;
            if (f > lo[m] && f < center[m]) {
                w = (f - lo[m]) / (center[m] - lo[m]);
            } else if (f == center[m]) {
                w = 1.0;
            } else if (f > center[m] && f < hi[m]) {
                w = (hi[m] - f) / (hi[m] - center[m]);
            }
            bank[m][k] = w;
        }
    }
    return bank;
}

Spectrogram filterbank_spectrogram(const AudioBuffer& audio, int window, int hop, int fft_size,
                                   const std::vector<double>& win,
                                   const std::vector<std::vector<double>>& bank,
                                   SpectrogramKind kind, const char* who) {
    if (audio.samples.size() < static_cast<size_t>(window)) {
        throw degenerate_input_error(std::string(who) + ": audio shorter than one window (" +
                                     std::to_string(audio.samples.size()) + " < " +
                                     std::to_string(window) + " samples)");
    }
    const int frames = frame_count(audio.samples.size(), window, hop);
    const int n_filters = static_cast<int>(bank.size());

    Spectrogram spec;
    spec.kind = kind;
    spec.hop_seconds = static_cast<double>(hop) / audio.sample_rate_hz;
    spec.frames = MatrixF(frames, n_filters);

    std::vector<double> buf(fft_size, 0.0);
    for (int t = 0; t < frames; ++t) {
        const float* x = audio.samples.data() + static_cast<size_t>(t) * hop;
        for (int i = 0; i < window; ++i) buf[i] = x[i] * win[i];
        std::fill(buf.begin() + window, buf.end(), 0.0);
        auto spectrum = fft::rfft(buf);
        for (int m = 0; m < n_filters; ++m) {
            double acc = 0.0;
            const auto& weights = bank[m];
            for (size_t k = 0; k < spectrum.size(); ++k) {
                acc += weights[k] * std::norm(spectrum[k]);
            }
            spec.frames.at(t, m) = static_cast<float>(std::log(std::max(acc, kLogFloor)));
        }
    }
    return spec;
}

}  // namespace

Spectrogram log_mel(const AudioBuffer& audio) {
    require_16k(audio, "log_mel");
    static const std::vector<double> win = hann_window(kMelWindow);

    // 66 mel-spaced edge points over 0..8000 Hz; filter m spans points
    // [m, m+2] and peaks at point m+1 so adjacent weights sum to one.
    static const std::vector<std::vector<double>> bank = [] {
        const double m_lo = hz_to_mel(0.0), m_hi = hz_to_mel(8000.0);
        std::vector<double> points(kMelBins + 2);
        for (int i = 0; i < kMelBins + 2; ++i) {
            points[i] = mel_to_hz(m_lo + (m_hi - m_lo) * i / (kMelBins + 1));
        }
        std::vector<double> lo(points.begin(), points.end() - 2);
        std::vector<double> center(points.begin() + 1, points.end() - 1);
        std::vector<double> hi(points.begin() + 2, points.end());
        return triangle_bank(lo, center, hi, kMelWindow, 16000.0);
    }();

    return filterbank_spectrogram(audio, kMelWindow, kMelHop, kMelWindow, win, bank,
                                  SpectrogramKind::log_mel, "log_mel");
}

namespace {

/// Solves f s.t. f + sign * erb(f) = target, by bisection on [0, 16 kHz].
double solve_erb_edge(double target, double sign) {
    double lo = 0.0, hi = 16000.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (mid + sign * erb_hz(mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

Spectrogram hfcc(const AudioBuffer& audio) {
    require_16k(audio, "hfcc");
    static const std::vector<double> win = hamming_window(kHfccWindow);

    // Center frequencies mel-spaced between the extreme centers whose
    // ERB-wide triangles still fit into 0..8000 Hz.
    static const std::vector<std::vector<double>> bank = [] {
        const double fc_min = solve_erb_edge(0.0, -1.0);
        const double fc_max = solve_erb_edge(8000.0, +1.0);
        const double m_min = hz_to_mel(fc_min), m_max = hz_to_mel(fc_max);
        std::vector<double> center(kHfccFilters), lo(kHfccFilters), hi(kHfccFilters);
        for (int i = 0; i < kHfccFilters; ++i) {
            center[i] = mel_to_hz(m_min + (m_max - m_min) * i / (kHfccFilters - 1));
            const double half = erb_hz(center[i]);
            lo[i] = center[i] - half;
            hi[i] = center[i] + half;
        }
        return triangle_bank(lo, center, hi, kHfccFft, 16000.0);
    }();

    Spectrogram fb = filterbank_spectrogram(audio, kHfccWindow, kHfccHop, kHfccFft, win, bank,
                                            SpectrogramKind::hfcc, "hfcc");

    // Orthonormal DCT-II down to 13 coefficients, c0 = log frame energy.
    Spectrogram out;
    out.kind = SpectrogramKind::hfcc;
    out.hop_seconds = fb.hop_seconds;
    out.frames = MatrixF(fb.length(), kHfccCoeffs);
    const double scale = std::sqrt(2.0 / kHfccFilters);
    for (int t = 0; t < fb.length(); ++t) {
        const float* x = audio.samples.data() + static_cast<size_t>(t) * kHfccHop;
        double energy = 0.0;
        for (int i = 0; i < kHfccWindow; ++i) energy += static_cast<double>(x[i]) * x[i];
        out.frames.at(t, 0) = static_cast<float>(std::log(std::max(energy, kLogFloor)));
        for (int c = 1; c < kHfccCoeffs; ++c) {
            double acc = 0.0;
            for (int m = 0; m < kHfccFilters; ++m) {
                acc += fb.frames.at(t, m) * std::cos(kPi * c * (m + 0.5) / kHfccFilters);
            }
            out.frames.at(t, c) = static_cast<float>(scale * acc);
        }
    }
    return out;
}

EmbeddingSequence spectrogram_to_sequence(const Spectrogram& spec) {
    const int t_len = spec.length();
    const int m = spec.bins();
    if (t_len < 2) {
        throw degenerate_input_error(
            "spectrogram_to_sequence: need at least 2 frames to standardize (variance undefined)");
    }

    std::vector<double> mean(m, 0.0), var(m, 0.0);
    for (int t = 0; t < t_len; ++t) {
        for (int d = 0; d < m; ++d) mean[d] += spec.frames.at(t, d);
    }
    for (double& v : mean) v /= t_len;
    for (int t = 0; t < t_len; ++t) {
        for (int d = 0; d < m; ++d) {
            const double diff = spec.frames.at(t, d) - mean[d];
            var[d] += diff * diff;
        }
    }
    for (int d = 0; d < m; ++d) {
        var[d] /= t_len;
        if (var[d] < 1e-24) {
            throw degenerate_input_error("spectrogram_to_sequence: feature column " +
                                         std::to_string(d) + " is constant");
        }
    }

    EmbeddingSequence seq;
    seq.hop_seconds = spec.hop_seconds;
    seq.label = to_string(spec.kind);
    seq.frames = MatrixF(t_len, m);
    for (int t = 0; t < t_len; ++t) {
        for (int d = 0; d < m; ++d) {
            seq.frames.at(t, d) =
                static_cast<float>((spec.frames.at(t, d) - mean[d]) / std::sqrt(var[d]));
        }
    }
    return normalize_rows(seq);
}

EmbeddingSequence spectrogram_as_raw_sequence(const Spectrogram& spec) {
    EmbeddingSequence seq;
    seq.frames = spec.frames;
    seq.hop_seconds = spec.hop_seconds;
    seq.label = to_string(spec.kind);
    return seq;
}

}  // namespace kws
