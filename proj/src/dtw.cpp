#include "kws/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kws/errors.hpp"

namespace kws {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr uint8_t kStart = 0xFF;  // predecessor marker for fresh path starts
}  // namespace

void StepSizes::validate() const {
    if (steps.empty()) throw config_error("step sizes: empty set");
    for (auto [dq, dt] : steps) {
        if (dq < 1 || dt < 1) throw config_error("step sizes: deltas must be >= 1");
    }
    if (steps.size() > 250) throw config_error("step sizes: too many steps");
}

int StepSizes::max_query_delta() const {
    int m = 1;
    for (auto [dq, dt] : steps) m = std::max(m, dq);
    return m;
}

int StepSizes::min_query_delta() const {
    int m = steps.front().first;
    for (auto [dq, dt] : steps) m = std::min(m, dq);
    return m;
}

CostMatrix cost_matrix(const EmbeddingSequence& query, const EmbeddingSequence& test) {
    if (query.dim() != test.dim()) {
        throw config_error("cost_matrix: query dim " + std::to_string(query.dim()) +
                           " != test dim " + std::to_string(test.dim()));
    }
    double max_q = 0.0, max_t = 0.0;
    for (int i = 0; i < query.length(); ++i) max_q = std::max(max_q, norm(query.frames.row(i)));
    for (int j = 0; j < test.length(); ++j) max_t = std::max(max_t, norm(test.frames.row(j)));
    const bool unit_inputs = max_q <= 1.0 + 1e-5 && max_t <= 1.0 + 1e-5;

    CostMatrix out(query.length(), test.length(),
                   std::vector<double>(static_cast<size_t>(query.length()) * test.length()),
                   std::max(1.0, max_q * max_t));
    for (int i = 0; i < query.length(); ++i) {
        auto qrow = query.frames.row(i);
        for (int j = 0; j < test.length(); ++j) {
            double c = 1.0 - dot(qrow, test.frames.row(j));
            if (unit_inputs && c < 0.0) {
                if (c < -1e-6) {
                    throw degenerate_input_error(
                        "cost_matrix: cost " + std::to_string(c) + " at (" + std::to_string(i) +
                        "," + std::to_string(j) + ") is negative beyond tolerance; inputs are "
                        "not row-normalized");
                }
                c = 0.0;
            }
            out.at(i, j) = c;
        }
    }
    return out;
}

namespace {

// Per-row DP storage. Path length is strictly tied to the query row only
// through the step set, so states are stratified by length: bucket(i, len)
// holds the minimum accumulated cost over all admissible paths from row 0 to
// (i, j) visiting exactly `len` cells. Keeping every length exact (rather
// than one greedy state per cell) is what makes the reported per-column
// minima equal exhaustive path enumeration.
struct RowStates {
    int len_lo = 0;  // smallest feasible path length at this row
    int n_len = 0;
    int test_len = 0;
    std::vector<double> acc;   // [j * n_len + (len - len_lo)]
    std::vector<uint8_t> pred; // step index taken into this cell, kStart for starts

    void init(int lo, int hi, int t_len) {
        len_lo = lo;
        n_len = hi - lo + 1;
        test_len = t_len;
        acc.assign(static_cast<size_t>(t_len) * n_len, kInf);
        pred.assign(static_cast<size_t>(t_len) * n_len, kStart);
    }
    size_t idx(int j, int len) const {
        return static_cast<size_t>(j) * n_len + (len - len_lo);
    }
    bool has(int len) const { return len >= len_lo && len < len_lo + n_len; }
};

}  // namespace

WarpResult subsequence_dtw(const CostMatrix& cost, const StepSizes& steps, bool record_paths) {
    steps.validate();
    const int q_len = cost.query_len;
    const int t_len = cost.test_len;
    if (q_len < 1 || t_len < 1) throw degenerate_input_error("subsequence_dtw: empty cost matrix");
    for (double v : cost.values) {
        if (!std::isfinite(v)) throw degenerate_input_error("subsequence_dtw: non-finite cost");
    }

    const int max_dq = steps.max_query_delta();
    const int min_dq = steps.min_query_delta();
    auto len_lo = [&](int row) { return 1 + (row + max_dq - 1) / max_dq; };
    auto len_hi = [&](int row) { return 1 + row / min_dq; };

    // rows[i] stays alive for backtracking; the DP itself only reads the
    // previous max_dq rows.
    std::vector<RowStates> rows(q_len);
    rows[0].init(1, 1, t_len);
    for (int j = 0; j < t_len; ++j) {
        rows[0].acc[rows[0].idx(j, 1)] = cost.at(0, j);
    }

    const int n_steps = static_cast<int>(steps.steps.size());
    for (int i = 1; i < q_len; ++i) {
        rows[i].init(len_lo(i), len_hi(i), t_len);
        RowStates& cur = rows[i];
        for (int j = 0; j < t_len; ++j) {
            const double c = cost.at(i, j);
            for (int len = cur.len_lo; len < cur.len_lo + cur.n_len; ++len) {
                double best = kInf;
                uint8_t best_step = kStart;
                for (int s = 0; s < n_steps; ++s) {
                    auto [dq, dt] = steps.steps[s];
                    int pi = i - dq, pj = j - dt;
                    if (pi < 0 || pj < 0) continue;
                    const RowStates& prev = rows[pi];
                    if (!prev.has(len - 1)) continue;
                    double a = prev.acc[prev.idx(pj, len - 1)];
                    if (a == kInf) continue;
                    double total = a + c;
                    if (total < best) {
                        best = total;
                        best_step = static_cast<uint8_t>(s);
                    }
                }
                if (best != kInf) {
                    cur.acc[cur.idx(j, len)] = best;
                    cur.pred[cur.idx(j, len)] = best_step;
                }
            }
        }
    }

    WarpResult result;
    result.query_len = q_len;
    result.test_len = t_len;

    const RowStates& last = rows[q_len - 1];
    for (int j = 0; j < t_len; ++j) {
        double best_norm = kInf;
        int best_len = -1;
        for (int len = last.len_lo; len < last.len_lo + last.n_len; ++len) {
            double a = last.acc[last.idx(j, len)];
            if (a == kInf) continue;
            double n = a / len;
            if (n < best_norm) {  // tie across lengths keeps the shorter path
                best_norm = n;
                best_len = len;
            }
        }
        if (best_len < 0) continue;

        DtwMatch match;
        match.offset_frame = j;
        match.normalized_cost = best_norm;

        // Backtrack via stored step choices.
        int bi = q_len - 1, bj = j, blen = best_len;
        std::vector<PathPoint> rev;
        rev.reserve(best_len);
        while (true) {
            rev.push_back({bi, bj});
            uint8_t s = rows[bi].pred[rows[bi].idx(bj, blen)];
            if (s == kStart) break;
            auto [dq, dt] = steps.steps[s];
            bi -= dq;
            bj -= dt;
            --blen;
        }
        match.onset_frame = rev.back().test;
        if (record_paths) {
            match.path.assign(rev.rbegin(), rev.rend());
        }
        result.matches.push_back(std::move(match));
    }

    if (result.matches.empty()) {
        throw degenerate_input_error(
            "subsequence_dtw: test sequence shorter than the minimal path footprint for a " +
            std::to_string(q_len) + "-frame query");
    }
    return result;
}

std::vector<double> score_curve(const WarpResult& result, int test_len) {
    std::vector<double> scores(test_len, -kInf);
    for (const DtwMatch& m : result.matches) {
        if (m.offset_frame >= 0 && m.offset_frame < test_len) {
            scores[m.offset_frame] = 1.0 - m.normalized_cost;
        }
    }
    return scores;
}

ScoreCurve multi_sample_scores(const std::vector<EmbeddingSequence>& queries,
                               const EmbeddingSequence& test, const StepSizes& steps,
                               CurveAggregation aggregation) {
    if (queries.empty()) throw config_error("multi_sample_scores: empty query list");
    const int t_len = test.length();

    ScoreCurve curve;
    curve.score.assign(t_len, -kInf);
    curve.onset_frame.assign(t_len, -1);
    curve.query_frames.assign(t_len, 0);
    curve.hop_seconds = test.hop_seconds;

    std::vector<double> mean_sum(t_len, 0.0);
    std::vector<int> mean_count(t_len, 0);

    for (size_t q = 0; q < queries.size(); ++q) {
        WarpResult warp = subsequence_dtw(cost_matrix(queries[q], test), steps,
                                          /*record_paths=*/false);
        for (const DtwMatch& m : warp.matches) {
            int j = m.offset_frame;
            double s = 1.0 - m.normalized_cost;
            if (s > curve.score[j]) {
                curve.score[j] = s;
                curve.onset_frame[j] = m.onset_frame;
                curve.query_frames[j] = queries[q].length();
            }
            mean_sum[j] += s;
            ++mean_count[j];
        }
    }

    if (aggregation == CurveAggregation::mean) {
        for (int j = 0; j < t_len; ++j) {
            if (mean_count[j] > 0) curve.score[j] = mean_sum[j] / mean_count[j];
        }
    }
    return curve;
}

}  // namespace kws
