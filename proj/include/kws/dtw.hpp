#pragma once

#include <utility>
#include <vector>

#include "kws/types.hpp"

namespace kws {

/// Pairwise DTW costs, cost[i][j] = 1 - <query_i, test_j>. For row-unit-norm
/// inputs values lie in [0, 2]; calibrated rows can exceed unit norm, in
/// which case `bound` widens accordingly and negative costs are legal.
struct CostMatrix {
    int query_len = 0;
    int test_len = 0;
    std::vector<double> values;  // row-major, query x test
    double bound = 1.0;          // values lie in [1 - bound, 1 + bound]

    CostMatrix() = default;
    CostMatrix(int q, int t, std::vector<double> v, double b = 1.0)
        : query_len(q), test_len(t), values(std::move(v)), bound(b) {}

    double at(int i, int j) const { return values[static_cast<size_t>(i) * test_len + j]; }
    double& at(int i, int j) { return values[static_cast<size_t>(i) * test_len + j]; }
};

/// Admissible DP transitions (query delta, test delta). Order doubles as the
/// tie-break preference; the default is (1,1) over (2,1) over (1,2).
struct StepSizes {
    std::vector<std::pair<int, int>> steps{{1, 1}, {2, 1}, {1, 2}};

    void validate() const;
    int max_query_delta() const;
    int min_query_delta() const;
};

struct PathPoint {
    int query = 0;
    int test = 0;
    bool operator==(const PathPoint&) const = default;
};

/// One subsequence alignment ending at a specific test column.
struct DtwMatch {
    int onset_frame = 0;   // first test frame on the path
    int offset_frame = 0;  // last test frame on the path (inclusive)
    double normalized_cost = 0.0;
    std::vector<PathPoint> path;  // visited cells, start to end
};

struct WarpResult {
    int query_len = 0;
    int test_len = 0;
    std::vector<DtwMatch> matches;  // one per reachable end column, ascending offset
};

CostMatrix cost_matrix(const EmbeddingSequence& query, const EmbeddingSequence& test);

/// Subsequence DTW with per-path-length cost normalization. A path may start
/// at query row 0 in any test column and must end at the last query row; for
/// every test column the minimum of (summed cell costs / cell count) over
/// all admissible paths ending there is reported, together with the
/// backtracked path. Ties resolve to the shorter path, then to the step
/// preference order, so results are reproducible.
WarpResult subsequence_dtw(const CostMatrix& cost, const StepSizes& steps = {},
                           bool record_paths = true);

/// Per test frame j: 1 - best normalized cost of a path ending at j.
/// Frames no path can end at get -infinity.
std::vector<double> score_curve(const WarpResult& result, int test_len);

enum class CurveAggregation { max, mean };

/// Detection-score curve over a test recording for one keyword, with the
/// warp-path metadata detection needs to place onsets and length-filter.
struct ScoreCurve {
    std::vector<double> score;       // per test frame; -inf where unreachable
    std::vector<int> onset_frame;    // implied onset, -1 where unreachable
    std::vector<int> query_frames;   // length of the winning query template
    double hop_seconds = 0.0;

    int length() const { return static_cast<int>(score.size()); }
};

/// Runs one DTW per query template and aggregates the per-column score
/// curves: `max` keeps the best query per frame (its onset and length are
/// retained), `mean` averages scores over the queries reachable at a frame
/// while onsets still follow the per-frame best query.
ScoreCurve multi_sample_scores(const std::vector<EmbeddingSequence>& queries,
                               const EmbeddingSequence& test, const StepSizes& steps = {},
                               CurveAggregation aggregation = CurveAggregation::max);

}  // namespace kws
