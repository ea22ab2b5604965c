#pragma once

#include <span>
#include <string>
#include <vector>

#include "kws/types.hpp"

namespace kws {

/// Score calibration variants. `quantize` snaps each embedding to its
/// nearest bank center, `normalize` rescales it by the quantization error,
/// `combined` sums both transforms.
enum class CalibrationMode { none, quantize, normalize, combined };

CalibrationMode parse_calibration_mode(const std::string& name);
std::string to_string(CalibrationMode mode);

/// Which sequences the pipeline calibrates: query templates and test
/// recordings symmetrically, or query templates only.
enum class CalibrationSides { both, query_only };

CalibrationSides parse_calibration_sides(const std::string& name);
std::string to_string(CalibrationSides sides);

/// Segmentation geometry used when embeddings of overlapping segments are
/// merged back into one per-frame sequence.
struct SegmentLayout {
    int segment_frames = 0;  // frames per segment
    int hop_frames = 0;      // frame offset between consecutive segments

    void validate() const;
};

struct NearestCenter {
    int index = -1;        // flat center index, ties resolved to the lowest
    double similarity = 0; // inner product with the winning center
};

/// Argmax over all bank centers of <e, c>. Ties break to the lowest flat
/// center index so results do not depend on search order.
NearestCenter nearest_center(std::span<const float> embedding, const CenterBank& bank);

/// Replaces every row by its nearest center.
EmbeddingSequence kappa(const EmbeddingSequence& seq, const CenterBank& bank);

/// Scales every row e by 1 / (1 + s_max(e)), where s_max is the similarity
/// to the nearest center. The denominator is floored at 1e-6.
EmbeddingSequence nu(const EmbeddingSequence& seq, const CenterBank& bank);

/// Row-wise kappa + nu. Rows are intentionally not re-normalized: scores
/// against gamma rows then decompose into the quantize and normalize scores
/// by linearity of the inner product.
EmbeddingSequence gamma(const EmbeddingSequence& seq, const CenterBank& bank);

EmbeddingSequence apply_calibration(const EmbeddingSequence& seq, const CenterBank& bank,
                                    CalibrationMode mode);

/// Merges per-segment embedding sequences into one sequence over
/// `total_frames` frames: frame j is the mean of all segment rows landing on
/// j (segment i starts at frame i * hop), unit-normalized afterwards.
/// Every frame must be covered by at least one segment.
EmbeddingSequence combine_segments(const std::vector<EmbeddingSequence>& segments,
                                   const SegmentLayout& layout, int total_frames);

/// Mean over rows of the best cosine similarity to any center in
/// [cell_first, cell_last) of the bank.
double cossim_sets(const EmbeddingSequence& seq, const CenterBank& bank, int cell_first,
                   int cell_last);

}  // namespace kws
