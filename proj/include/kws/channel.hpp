#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "kws/types.hpp"

namespace kws {

/// Two-path HF fading channel parameters (ITU-R moderate mid-latitude
/// defaults: 1 ms differential delay, 0.5 Hz Doppler spread, equal powers).
struct ChannelConfig {
    double differential_delay_seconds = 0.001;
    double doppler_spread_hz = 0.5;
    int num_paths = 2;
    uint64_t seed = 0;

    void validate() const;
};

struct SnrSpec {
    double snr_db = 0.0;
};

struct WattersonStats {
    double power_ratio = 0.0;  // output/input power before re-normalization
};

/// Complex Gaussian tap-gain process with Gaussian Doppler spectrum whose
/// two-sided 2-sigma width equals spread_hz. Unit average power; bit-exact
/// for a given seed. Exposed so tests can fit the tap autocorrelation.
std::vector<std::complex<double>> doppler_taps(double spread_hz, double rate_hz, size_t count,
                                               uint64_t seed);

/// Watterson fading: sum over paths of Re{a_p(t) * x_analytic(t - tau_p)},
/// each tap gain an independent Gaussian-Doppler process, paths equally
/// powered, then re-normalized to peak 1. Deterministic given cfg.seed.
AudioBuffer watterson(const AudioBuffer& audio, const ChannelConfig& cfg,
                      WattersonStats* stats = nullptr);

/// Adds white Gaussian noise scaled to the target SNR against the mean
/// squared sample of the whole recording. Samples pushed outside [-1, 1]
/// are clipped (count reported via *clipped). An infinite snr_db passes the
/// input through untouched.
AudioBuffer add_awgn(const AudioBuffer& audio, SnrSpec snr, uint64_t seed,
                     size_t* clipped = nullptr);

/// The evaluation grid: -12 dB to +30 dB in 3 dB steps (15 values).
std::vector<SnrSpec> snr_grid();

}  // namespace kws
