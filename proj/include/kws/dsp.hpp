#pragma once

#include <vector>

#include "kws/types.hpp"

namespace kws {

enum class SpectrogramKind { log_mel, hfcc };

std::string to_string(SpectrogramKind kind);

struct Spectrogram {
    MatrixF frames;  // T x M
    double hop_seconds = 0.0;
    SpectrogramKind kind = SpectrogramKind::log_mel;

    int length() const { return frames.rows; }
    int bins() const { return frames.cols; }
};

/// Arbitrary-ratio windowed-sinc resampler (Kaiser beta = 8, 64 taps per
/// phase). Output length is round(input length * target / source).
AudioBuffer resample(const AudioBuffer& audio, int target_rate_hz);

/// Second-order Butterworth high-pass, forward (causal) only. The filter
/// state starts at the steady state for the first sample, so constant
/// signals come out as (numerically) zero without a startup click.
AudioBuffer highpass(const AudioBuffer& audio, double cutoff_hz);

/// Full front-end chain: resample to 16 kHz, 50 Hz high-pass, normalize the
/// peak amplitude to 1. Input whose peak vanishes after filtering is
/// returned as all zeros with *silent set.
AudioBuffer preprocess(const AudioBuffer& audio, bool* silent = nullptr);

/// Log-mel spectrogram: 64 HTK-mel bins over 0-8000 Hz, Hann window 1024,
/// hop 256, power spectrum, log floored at 1e-10. Frames start at sample 0
/// with no padding, so T = 1 + floor((N - 1024) / 256).
Spectrogram log_mel(const AudioBuffer& audio);

/// HFCC front-end: 40 ms window / 10 ms hop at 16 kHz, 29 triangular filters
/// with mel-spaced centers and ERB-derived bandwidths, DCT-II to 13 cepstral
/// coefficients with c0 replaced by log frame energy.
Spectrogram hfcc(const AudioBuffer& audio);

/// Standardizes each feature column over the recording (zero mean, unit
/// variance), then unit-normalizes rows so the result can flow through the
/// same DTW backend as learned embeddings.
EmbeddingSequence spectrogram_to_sequence(const Spectrogram& spec);

/// Raw spectrogram wrapped as a sequence for ESEQ serialization; the kind is
/// recorded in the label field. No standardization or normalization.
EmbeddingSequence spectrogram_as_raw_sequence(const Spectrogram& spec);

/// Center frequencies (Hz) of `count` filters equally spaced on the HTK mel
/// scale between the mel values of f_lo and f_hi (exclusive edges).
std::vector<double> mel_filter_centers_hz(int count, double f_lo_hz, double f_hi_hz);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Moore-Glasberg equivalent rectangular bandwidth, Hz.
double erb_hz(double center_hz);

}  // namespace kws
