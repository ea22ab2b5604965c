#pragma once

#include <complex>
#include <cstddef>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace kws::fft {

// FFTW plan creation is not thread-safe; execution is.
inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

/// One-sided real-to-complex FFT, returns n/2 + 1 bins.
inline std::vector<std::complex<double>> rfft(const std::vector<double>& in) {
    const size_t n = in.size();
    std::vector<std::complex<double>> out(n / 2 + 1);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), const_cast<double*>(in.data()),
                                    reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    return out;
}

/// In-place complex FFT (sign = FFTW_FORWARD or FFTW_BACKWARD). The inverse
/// transform is unscaled, matching FFTW conventions.
inline void cfft(std::vector<std::complex<double>>& data, int sign) {
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        plan = fftw_plan_dft_1d(static_cast<int>(data.size()),
                                reinterpret_cast<fftw_complex*>(data.data()),
                                reinterpret_cast<fftw_complex*>(data.data()), sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
}

/// Analytic signal via the frequency-domain Hilbert construction.
inline std::vector<std::complex<double>> analytic_signal(const std::vector<float>& x) {
    const size_t n = x.size();
    std::vector<std::complex<double>> spec(n);
    for (size_t i = 0; i < n; ++i) spec[i] = x[i];
    cfft(spec, FFTW_FORWARD);
    // Keep DC and (for even n) Nyquist as-is, double positive frequencies,
    // zero negative ones.
    for (size_t k = 1; k < (n + 1) / 2; ++k) spec[k] *= 2.0;
    for (size_t k = n / 2 + 1; k < n; ++k) spec[k] = 0.0;
    cfft(spec, FFTW_BACKWARD);
    for (auto& v : spec) v /= static_cast<double>(n);
    return spec;
}

}  // namespace kws::fft
