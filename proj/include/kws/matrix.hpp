#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "kws/errors.hpp"

namespace kws {

/// Dense row-major float32 matrix. Rows are time steps, columns are
/// feature/embedding dimensions throughout this codebase.
struct MatrixF {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    MatrixF() = default;
    MatrixF(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0f) {}
    MatrixF(int r, int c, std::vector<float> values) : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != static_cast<size_t>(r) * c) {
            throw config_error("matrix: payload size does not match shape");
        }
    }

    float& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    std::span<float> row(int r) { return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
    std::span<const float> row(int r) const {
        return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
    }

    bool same_shape(const MatrixF& other) const { return rows == other.rows && cols == other.cols; }
};

inline double dot(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

inline double norm(std::span<const float> a) {
    return std::sqrt(dot(a, a));
}

inline bool all_finite(std::span<const float> a) {
    for (float v : a) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace kws
