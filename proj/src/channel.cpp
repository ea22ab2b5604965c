#include "kws/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fft.hpp"
#include "kws/errors.hpp"
#include "kws/rng.hpp"

namespace kws {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr long kMaxFirHalf = 32768;  // caps the Doppler FIR for tiny spreads

/// Catmull-Rom interpolation of a complex sample track.
std::complex<double> catmull_rom(const std::vector<std::complex<double>>& p, double t) {
    const long n = static_cast<long>(p.size());
    long i = static_cast<long>(std::floor(t));
    i = std::clamp(i, 1L, n - 3);
    const double u = t - i;
    const auto p0 = p[i - 1], p1 = p[i], p2 = p[i + 1], p3 = p[i + 2];
    return 0.5 * ((2.0 * p1) + (-p0 + p2) * u + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * (u * u) +
                  (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * (u * u * u));
}

}  // namespace

void ChannelConfig::validate() const {
    if (differential_delay_seconds < 0.0) throw config_error("channel: delay must be >= 0");
    if (!(doppler_spread_hz > 0.0)) throw config_error("channel: doppler spread must be > 0");
    if (num_paths < 1) throw config_error("channel: num_paths must be >= 1");
}

std::vector<std::complex<double>> doppler_taps(double spread_hz, double rate_hz, size_t count,
                                               uint64_t seed) {
    if (!(spread_hz > 0.0) || !(rate_hz > 0.0)) {
        throw config_error("doppler_taps: spread and rate must be > 0");
    }
    // Gaussian PSD with std sigma has autocorrelation exp(-2 pi^2 sigma^2 tau^2);
    // a Gaussian FIR with time constant a = 1/(2 sqrt(2) pi sigma) applied to
    // white noise reproduces it.
    const double sigma = spread_hz / 2.0;
    const double a = 1.0 / (2.0 * std::numbers::sqrt2 * kPi * sigma);
    const long half = std::min(kMaxFirHalf, static_cast<long>(std::ceil(4.0 * a * rate_hz)));
    std::vector<double> fir(2 * half + 1);
    double energy = 0.0;
    for (long k = -half; k <= half; ++k) {
        const double t = k / rate_hz;
        fir[k + half] = std::exp(-t * t / (2.0 * a * a));
        energy += fir[k + half] * fir[k + half];
    }
    const double gain = 1.0 / std::sqrt(energy);
    for (double& h : fir) h *= gain;

    GaussianRng rng(seed);
    std::vector<std::complex<double>> white(count + fir.size() - 1);
    for (auto& w : white) w = rng.complex_gaussian();

    std::vector<std::complex<double>> taps(count);
    for (size_t i = 0; i < count; ++i) {
        std::complex<double> acc = 0.0;
        for (size_t k = 0; k < fir.size(); ++k) acc += fir[k] * white[i + k];
        taps[i] = acc;
    }
    return taps;
}

AudioBuffer watterson(const AudioBuffer& audio, const ChannelConfig& cfg, WattersonStats* stats) {
    cfg.validate();
    if (audio.samples.empty()) throw degenerate_input_error("watterson: empty audio");
    if (audio.sample_rate_hz != 16000) {
        throw config_error("watterson: expected 16 kHz preprocessed input");
    }
    const double duration = audio.duration_seconds();
    if (cfg.differential_delay_seconds >= duration) {
        throw config_error("watterson: differential delay (" +
                           std::to_string(cfg.differential_delay_seconds) +
                           " s) must be shorter than the recording (" + std::to_string(duration) +
                           " s)");
    }

    const auto analytic = fft::analytic_signal(audio.samples);
    const size_t n = audio.samples.size();

    const double tap_rate = std::max(50.0, 16.0 * cfg.doppler_spread_hz);
    const size_t tap_count = static_cast<size_t>(std::ceil(duration * tap_rate)) + 4;
    const double path_scale = 1.0 / std::sqrt(static_cast<double>(cfg.num_paths));

    std::vector<double> out(n, 0.0);
    for (int p = 0; p < cfg.num_paths; ++p) {
        const uint64_t path_seed = splitmix64(cfg.seed ^ (0xC4A11B00ULL + p));
        const auto taps = doppler_taps(cfg.doppler_spread_hz, tap_rate, tap_count, path_seed);
        const size_t delay =
            cfg.num_paths > 1
                ? static_cast<size_t>(std::llround(cfg.differential_delay_seconds *
                                                   audio.sample_rate_hz * p / (cfg.num_paths - 1)))
                : 0;
        for (size_t i = delay; i < n; ++i) {
            const double t = static_cast<double>(i) / audio.sample_rate_hz * tap_rate;
            const std::complex<double> gain = catmull_rom(taps, t) * path_scale;
            out[i] += (gain * analytic[i - delay]).real();
        }
    }

    if (stats) {
        double in_power = 0.0, out_power = 0.0;
        for (size_t i = 0; i < n; ++i) {
            in_power += static_cast<double>(audio.samples[i]) * audio.samples[i];
            out_power += out[i] * out[i];
        }
        stats->power_ratio = in_power > 0.0 ? out_power / in_power : 0.0;
    }

    double peak = 0.0;
    for (double v : out) peak = std::max(peak, std::abs(v));

    AudioBuffer result;
    result.sample_rate_hz = audio.sample_rate_hz;
    result.samples.resize(n);
    const double norm = peak > 1e-12 ? 1.0 / peak : 0.0;
    for (size_t i = 0; i < n; ++i) result.samples[i] = static_cast<float>(out[i] * norm);
    return result;
}

AudioBuffer add_awgn(const AudioBuffer& audio, SnrSpec snr, uint64_t seed, size_t* clipped) {
    if (clipped) *clipped = 0;
    if (std::isinf(snr.snr_db) && snr.snr_db > 0) return audio;  // --clean sentinel
    if (!std::isfinite(snr.snr_db)) throw config_error("add_awgn: SNR must be finite");
    if (audio.samples.empty()) throw degenerate_input_error("add_awgn: empty audio");

    double power = 0.0;
    for (float s : audio.samples) power += static_cast<double>(s) * s;
    power /= static_cast<double>(audio.samples.size());
    if (power < 1e-20) {
        throw degenerate_input_error("add_awgn: silent input, SNR undefined");
    }

    const double sigma = std::sqrt(power / std::pow(10.0, snr.snr_db / 10.0));
    GaussianRng rng(seed);

    AudioBuffer out;
    out.sample_rate_hz = audio.sample_rate_hz;
    out.samples.resize(audio.samples.size());
    size_t clip_count = 0;
    for (size_t i = 0; i < audio.samples.size(); ++i) {
        double v = audio.samples[i] + sigma * rng.gaussian();
        if (v > 1.0) {
            v = 1.0;
            ++clip_count;
        } else if (v < -1.0) {
            v = -1.0;
            ++clip_count;
        }
        out.samples[i] = static_cast<float>(v);
    }
    if (clipped) *clipped = clip_count;
    return out;
}

std::vector<SnrSpec> snr_grid() {
    std::vector<SnrSpec> grid;
    for (int db = -12; db <= 30; db += 3) grid.push_back({static_cast<double>(db)});
    return grid;
}

}  // namespace kws
