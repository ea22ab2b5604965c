#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "fft.hpp"
#include "kws/channel.hpp"
#include "kws/errors.hpp"

using namespace kws;

namespace {

AudioBuffer speechish(double seconds, unsigned seed, double amplitude = 0.3) {
    // Amplitude-modulated multi-tone: has a moving envelope like speech.
    AudioBuffer buf;
    buf.sample_rate_hz = 16000;
    const size_t n = static_cast<size_t>(seconds * 16000);
    buf.samples.resize(n);
    std::mt19937 rng(seed);
    const double f1 = 300 + rng() % 400, f2 = 900 + rng() % 900;
    for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / 16000.0;
        const double env = 0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * 1.7 * t);
        buf.samples[i] = static_cast<float>(
            amplitude * env *
            (std::sin(2.0 * std::numbers::pi * f1 * t) + 0.5 * std::sin(2.0 * std::numbers::pi * f2 * t)));
    }
    return buf;
}

double measured_snr_db(const AudioBuffer& clean, const AudioBuffer& noisy) {
    double signal = 0.0, noise = 0.0;
    for (size_t i = 0; i < clean.samples.size(); ++i) {
        signal += static_cast<double>(clean.samples[i]) * clean.samples[i];
        const double d = noisy.samples[i] - clean.samples[i];
        noise += d * d;
    }
    return 10.0 * std::log10(signal / noise);
}

}  // namespace

TEST_SUITE("channel") {

TEST_CASE("snr_grid: -12 to 30 dB in 3 dB steps, 15 entries") {
    auto grid = snr_grid();
    REQUIRE(grid.size() == 15);
    CHECK(grid.front().snr_db == -12.0);
    CHECK(grid.back().snr_db == 30.0);
    for (size_t i = 1; i < grid.size(); ++i) {
        CHECK(grid[i].snr_db - grid[i - 1].snr_db == 3.0);
    }
}

TEST_CASE("add_awgn: 0 dB noise power matches signal power within 2%") {
    AudioBuffer in = speechish(10.0, 1, 0.2);
    AudioBuffer out = add_awgn(in, {0.0}, 42);
    double signal = 0.0, noise = 0.0;
    for (size_t i = 0; i < in.samples.size(); ++i) {
        signal += static_cast<double>(in.samples[i]) * in.samples[i];
        const double d = out.samples[i] - in.samples[i];
        noise += d * d;
    }
    CHECK(noise / signal == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("add_awgn: infinite SNR passes the input through untouched") {
    AudioBuffer in = speechish(0.5, 2);
    AudioBuffer out = add_awgn(in, {std::numeric_limits<double>::infinity()}, 7);
    CHECK(out.samples == in.samples);
}

TEST_CASE("add_awgn: deterministic for a fixed seed") {
    AudioBuffer in = speechish(1.0, 3);
    AudioBuffer a = add_awgn(in, {6.0}, 123);
    AudioBuffer b = add_awgn(in, {6.0}, 123);
    AudioBuffer c = add_awgn(in, {6.0}, 124);
    CHECK(a.samples == b.samples);
    CHECK(a.samples != c.samples);
}

TEST_CASE("add_awgn: silent input has no defined SNR") {
    AudioBuffer in;
    in.sample_rate_hz = 16000;
    in.samples.assign(1000, 0.0f);
    CHECK_THROWS_AS(add_awgn(in, {10.0}, 1), degenerate_input_error);
}

TEST_CASE("add_awgn: clipping is counted, not hidden") {
    AudioBuffer in;
    in.sample_rate_hz = 16000;
    in.samples.assign(16000, 0.95f);  // high signal close to full scale
    size_t clipped = 0;
    AudioBuffer out = add_awgn(in, {0.0}, 11, &clipped);
    CHECK(clipped > 0);
    for (float s : out.samples) {
        CHECK(s <= 1.0f);
        CHECK(s >= -1.0f);
    }
}

TEST_CASE("add_awgn: measured SNR tracks the target within 0.1 dB on 10 s audio") {
    AudioBuffer in = speechish(10.0, 4, 0.1);
    for (double target : {-12.0, 0.0, 15.0, 30.0}) {
        AudioBuffer out = add_awgn(in, {target}, 77);
        CHECK(std::abs(measured_snr_db(in, out) - target) < 0.1);
    }
}

TEST_CASE("doppler_taps: unit power and Gaussian autocorrelation shape") {
    const double spread = 0.5, rate = 50.0;
    const double sigma = spread / 2.0;
    const size_t count = 3000;  // 60 s at 50 Hz

    // Average the normalized autocorrelation over 20 independent seeds.
    const int max_lag = 100;
    std::vector<double> corr(max_lag, 0.0);
    double power = 0.0;
    for (unsigned seed = 0; seed < 20; ++seed) {
        auto taps = doppler_taps(spread, rate, count, 1000 + seed);
        double r0 = 0.0;
        for (const auto& z : taps) r0 += std::norm(z);
        r0 /= static_cast<double>(count);
        power += r0;
        for (int lag = 0; lag < max_lag; ++lag) {
            std::complex<double> acc = 0.0;
            for (size_t i = 0; i + lag < count; ++i) acc += taps[i] * std::conj(taps[i + lag]);
            corr[lag] += (acc.real() / static_cast<double>(count - lag)) / r0;
        }
    }
    power /= 20.0;
    for (auto& c : corr) c /= 20.0;

    CHECK(power == doctest::Approx(1.0).epsilon(0.1));

    // Lag where correlation crosses 0.5, linearly interpolated.
    int k = 0;
    while (k < max_lag && corr[k] > 0.5) ++k;
    REQUIRE(k > 0);
    REQUIRE(k < max_lag);
    const double frac = (corr[k - 1] - 0.5) / (corr[k - 1] - corr[k]);
    const double tau_half = (k - 1 + frac) / rate;
    const double expected = std::sqrt(std::log(2.0) / (2.0 * std::numbers::pi * std::numbers::pi *
                                                       sigma * sigma));
    CHECK(std::abs(tau_half - expected) < 0.1 * expected);
}

TEST_CASE("watterson: deterministic for a fixed seed") {
    AudioBuffer in = speechish(2.0, 5);
    ChannelConfig cfg;
    cfg.seed = 99;
    AudioBuffer a = watterson(in, cfg);
    AudioBuffer b = watterson(in, cfg);
    CHECK(a.samples == b.samples);
    cfg.seed = 100;
    AudioBuffer c = watterson(in, cfg);
    CHECK(a.samples != c.samples);
}

TEST_CASE("watterson: near-zero spread single path is the identity up to rotation") {
    AudioBuffer in = speechish(1.0, 6);
    ChannelConfig cfg;
    cfg.num_paths = 1;
    cfg.doppler_spread_hz = 1e-6;
    cfg.differential_delay_seconds = 0.0;
    cfg.seed = 3;
    AudioBuffer out = watterson(in, cfg);

    // A constant complex tap scales and phase-shifts the analytic signal, so
    // the envelopes must be proportional.
    auto env_in = fft::analytic_signal(in.samples);
    auto env_out = fft::analytic_signal(out.samples);
    double sxy = 0.0, sxx = 0.0, syy = 0.0, sx = 0.0, sy = 0.0;
    const size_t n = in.samples.size();
    for (size_t i = 0; i < n; ++i) {
        const double x = std::abs(env_in[i]), y = std::abs(env_out[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    const double num = sxy - sx * sy / n;
    const double den = std::sqrt((sxx - sx * sx / n) * (syy - sy * sy / n));
    CHECK(num / den > 0.999);
}

TEST_CASE("watterson: output power before re-normalization stays within 1 dB") {
    AudioBuffer in = speechish(10.0, 7);
    double ratio_sum = 0.0;
    for (unsigned seed = 0; seed < 20; ++seed) {
        ChannelConfig cfg;
        cfg.seed = 500 + seed;
        WattersonStats stats;
        watterson(in, cfg, &stats);
        ratio_sum += stats.power_ratio;
    }
    const double mean_ratio = ratio_sum / 20.0;
    CHECK(std::abs(10.0 * std::log10(mean_ratio)) < 1.0);
}

TEST_CASE("watterson: two-path output differs from single-path, peak is 1") {
    AudioBuffer in = speechish(2.0, 8);
    ChannelConfig two;
    two.seed = 17;
    AudioBuffer out = watterson(in, two);
    float peak = 0.0f;
    for (float s : out.samples) peak = std::max(peak, std::abs(s));
    CHECK(peak == doctest::Approx(1.0).epsilon(1e-5));

    ChannelConfig one = two;
    one.num_paths = 1;
    CHECK(watterson(in, one).samples != out.samples);
}

TEST_CASE("watterson: delay longer than the recording is a parameter error") {
    AudioBuffer in = speechish(0.5, 9);
    ChannelConfig cfg;
    cfg.differential_delay_seconds = 1.0;
    CHECK_THROWS_AS(watterson(in, cfg), config_error);
}

TEST_CASE("channel config validation") {
    ChannelConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.doppler_spread_hz = 0.0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = {};
    cfg.num_paths = 0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = {};
    cfg.differential_delay_seconds = -0.1;
    CHECK_THROWS_AS(cfg.validate(), config_error);
}

}  // TEST_SUITE
