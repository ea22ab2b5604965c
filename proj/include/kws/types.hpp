#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kws/matrix.hpp"

namespace kws {

/// Time-indexed sequence of D-dimensional embeddings (or feature rows),
/// one row per time step.
struct EmbeddingSequence {
    MatrixF frames;             // T x D
    double hop_seconds = 0.0;   // seconds per time step
    std::optional<std::string> label;

    int length() const { return frames.rows; }
    int dim() const { return frames.cols; }
};

/// Validates shape/finiteness invariants; throws on violation.
void validate_sequence(const EmbeddingSequence& seq);

/// Divides every row by its Euclidean norm. Rows with norm below 1e-8 are
/// rejected with a degenerate_input_error naming the row.
EmbeddingSequence normalize_rows(const EmbeddingSequence& seq);

/// Bank of unit-norm prototype vectors, one cell of n_clusters centers per
/// (keyword, position) pair. Cells are laid out keyword-major, positions
/// next, clusters contiguous.
struct CenterBank {
    MatrixF centers;  // (n_keywords * n_positions * n_clusters) x D
    int n_keywords = 0;
    int n_positions = 0;
    int n_clusters = 0;
    std::vector<std::string> keyword_names;
    std::vector<std::string> load_warnings;  // filled by read_center_bank

    int dim() const { return centers.cols; }
    int num_centers() const { return n_keywords * n_positions * n_clusters; }
    int cell_start(int keyword, int position) const {
        return (keyword * n_positions + position) * n_clusters;
    }
    std::span<const float> center(int flat_index) const { return centers.row(flat_index); }
    /// Flat center indices [first, first + n_clusters) for one cell.
    std::pair<int, int> cell_range(int keyword, int position) const {
        int first = cell_start(keyword, position);
        return {first, first + n_clusters};
    }
};

void validate_center_bank(const CenterBank& bank);

/// Mono audio, samples nominally in [-1, 1].
struct AudioBuffer {
    std::vector<float> samples;
    int sample_rate_hz = 0;

    double duration_seconds() const {
        return sample_rate_hz > 0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
    }
};

void validate_audio(const AudioBuffer& audio);

/// One ground-truth keyword occurrence.
struct AnnotatedEvent {
    std::string file_id;
    std::string keyword;
    double onset_seconds = 0.0;
    double offset_seconds = 0.0;
};

struct AnnotationSet {
    std::vector<AnnotatedEvent> events;
};

/// Checks onset/offset sanity and (optionally) keyword membership.
/// `open_set_label` names the designated non-keyword class, if any.
void validate_annotations(const AnnotationSet& set,
                          const std::vector<std::string>& keyword_names = {},
                          const std::string& open_set_label = "");

/// One detected keyword occurrence with its decision score.
struct DetectionEvent {
    std::string file_id;
    std::string keyword;
    double onset_seconds = 0.0;
    double offset_seconds = 0.0;
    double score = 0.0;

    // Frame-level bookkeeping used by post-processing; kept alongside the
    // second-level fields so trimming can work at frame resolution.
    int onset_frame = 0;
    int offset_frame = 0;  // inclusive
    double hop_seconds = 0.0;
    double query_seconds = 0.0;  // duration of the matched query template
};

}  // namespace kws
