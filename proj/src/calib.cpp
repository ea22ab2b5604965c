#include "kws/calib.hpp"

#include <algorithm>
#include <cmath>

#include "kws/errors.hpp"

namespace kws {

CalibrationMode parse_calibration_mode(const std::string& name) {
    if (name == "none") return CalibrationMode::none;
    if (name == "quantize") return CalibrationMode::quantize;
    if (name == "normalize") return CalibrationMode::normalize;
    if (name == "combined") return CalibrationMode::combined;
    throw config_error("unknown calibration mode '" + name + "'");
}

std::string to_string(CalibrationMode mode) {
    switch (mode) {
        case CalibrationMode::none: return "none";
        case CalibrationMode::quantize: return "quantize";
        case CalibrationMode::normalize: return "normalize";
        case CalibrationMode::combined: return "combined";
    }
    return "?";
}

CalibrationSides parse_calibration_sides(const std::string& name) {
    if (name == "both") return CalibrationSides::both;
    if (name == "query") return CalibrationSides::query_only;
    throw config_error("unknown calibration sides '" + name + "' (expected both|query)");
}

std::string to_string(CalibrationSides sides) {
    return sides == CalibrationSides::both ? "both" : "query";
}

void SegmentLayout::validate() const {
    if (segment_frames < 1 || hop_frames < 1) {
        throw config_error("segment layout: frames and hop must be >= 1");
    }
    if (hop_frames > segment_frames) {
        throw config_error("segment layout: hop must not exceed segment length");
    }
}

NearestCenter nearest_center(std::span<const float> embedding, const CenterBank& bank) {
    if (bank.num_centers() < 1 || bank.centers.rows < 1) {
        throw config_error("nearest_center: empty center bank");
    }
    if (static_cast<int>(embedding.size()) != bank.dim()) {
        throw config_error("nearest_center: embedding dimension does not match bank");
    }
    NearestCenter best{0, dot(embedding, bank.center(0))};
    for (int i = 1; i < bank.centers.rows; ++i) {
        double s = dot(embedding, bank.center(i));
        if (s > best.similarity) best = {i, s};
    }
    return best;
}

EmbeddingSequence kappa(const EmbeddingSequence& seq, const CenterBank& bank) {
    EmbeddingSequence out = seq;
    for (int t = 0; t < seq.length(); ++t) {
        NearestCenter nc = nearest_center(seq.frames.row(t), bank);
        auto center = bank.center(nc.index);
        std::copy(center.begin(), center.end(), out.frames.row(t).begin());
    }
    return out;
}

EmbeddingSequence nu(const EmbeddingSequence& seq, const CenterBank& bank) {
    EmbeddingSequence out = seq;
    for (int t = 0; t < seq.length(); ++t) {
        NearestCenter nc = nearest_center(seq.frames.row(t), bank);
        double denom = std::max(1.0 + nc.similarity, 1e-6);
        for (float& v : out.frames.row(t)) v = static_cast<float>(v / denom);
    }
    return out;
}

EmbeddingSequence gamma(const EmbeddingSequence& seq, const CenterBank& bank) {
    EmbeddingSequence out = seq;
    for (int t = 0; t < seq.length(); ++t) {
        NearestCenter nc = nearest_center(seq.frames.row(t), bank);
        auto center = bank.center(nc.index);
        double denom = std::max(1.0 + nc.similarity, 1e-6);
        auto row = out.frames.row(t);
        for (int d = 0; d < seq.dim(); ++d) {
            row[d] = static_cast<float>(center[d] + row[d] / denom);
        }
    }
    return out;
}

EmbeddingSequence apply_calibration(const EmbeddingSequence& seq, const CenterBank& bank,
                                    CalibrationMode mode) {
    switch (mode) {
        case CalibrationMode::none: return seq;
        case CalibrationMode::quantize: return kappa(seq, bank);
        case CalibrationMode::normalize: return nu(seq, bank);
        case CalibrationMode::combined: return gamma(seq, bank);
    }
    throw config_error("apply_calibration: invalid mode");
}

EmbeddingSequence combine_segments(const std::vector<EmbeddingSequence>& segments,
                                   const SegmentLayout& layout, int total_frames) {
    layout.validate();
    if (segments.empty()) throw config_error("combine_segments: no segments");
    if (total_frames < 1) throw config_error("combine_segments: total_frames must be >= 1");

    const int dim = segments.front().dim();
    std::vector<double> acc(static_cast<size_t>(total_frames) * dim, 0.0);
    std::vector<int> cover(total_frames, 0);

    for (size_t s = 0; s < segments.size(); ++s) {
        const EmbeddingSequence& seg = segments[s];
        if (seg.dim() != dim) throw config_error("combine_segments: dimension mismatch");
        int offset = static_cast<int>(s) * layout.hop_frames;
        for (int t = 0; t < seg.length(); ++t) {
            int j = offset + t;
            if (j >= total_frames) {
                throw config_error("combine_segments: segment " + std::to_string(s) +
                                   " extends past frame " + std::to_string(total_frames));
            }
            auto row = seg.frames.row(t);
            for (int d = 0; d < dim; ++d) acc[static_cast<size_t>(j) * dim + d] += row[d];
            ++cover[j];
        }
    }

    EmbeddingSequence out;
    out.frames = MatrixF(total_frames, dim);
    out.hop_seconds = segments.front().hop_seconds;
    out.label = segments.front().label;
    for (int j = 0; j < total_frames; ++j) {
        if (cover[j] == 0) {
            throw config_error("combine_segments: frame " + std::to_string(j) +
                               " covered by no segment");
        }
        for (int d = 0; d < dim; ++d) {
            out.frames.at(j, d) = static_cast<float>(acc[static_cast<size_t>(j) * dim + d] / cover[j]);
        }
    }
    return normalize_rows(out);
}

double cossim_sets(const EmbeddingSequence& seq, const CenterBank& bank, int cell_first,
                   int cell_last) {
    if (cell_first >= cell_last || cell_first < 0 || cell_last > bank.centers.rows) {
        throw config_error("cossim_sets: empty or out-of-range center cell");
    }
    double total = 0.0;
    for (int t = 0; t < seq.length(); ++t) {
        auto row = seq.frames.row(t);
        double row_norm = norm(row);
        if (row_norm < 1e-12) throw degenerate_input_error("cossim_sets: zero row");
        double best = -2.0;
        for (int c = cell_first; c < cell_last; ++c) {
            // centers are unit norm, so cosine = dot / ||row||
            best = std::max(best, dot(row, bank.center(c)) / row_norm);
        }
        total += best;
    }
    return total / seq.length();
}

}  // namespace kws
