#pragma once

#include <map>
#include <string>
#include <vector>

#include "kws/dtw.hpp"
#include "kws/types.hpp"

namespace kws {

/// Decision threshold: one global value or a per-keyword map.
struct Threshold {
    double global = 0.0;
    std::map<std::string, double> per_keyword;  // overrides global when present

    double value_for(const std::string& keyword) const {
        auto it = per_keyword.find(keyword);
        return it != per_keyword.end() ? it->second : global;
    }
};

/// Event matching tolerances: onsets must agree within the collar, offsets
/// within max(collar, offset_ratio * ground-truth duration).
struct MatchingConfig {
    double collar_seconds = 0.25;
    double offset_ratio = 0.5;
};

struct KeywordCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
};

struct EvalReport {
    std::map<std::string, KeywordCounts> per_keyword;
    long tp = 0;
    long fp = 0;
    long fn = 0;
    double micro_f = 0.0;  // 2TP / (2TP + FP + FN) over pooled counts
    double macro_f = 0.0;  // mean of per-keyword F, reported for reference
    Threshold threshold_used;
};

/// Score curves for one test recording, keyed by keyword.
using KeywordCurves = std::map<std::string, ScoreCurve>;
/// ... and for a whole split, keyed by file id.
using CurvesByFile = std::map<std::string, KeywordCurves>;

/// Turns score curves of one recording into raw candidate events: maximal
/// frame runs with score >= threshold(keyword). Event onsets come from the
/// warp path of the run's best-scoring frame, offsets from the run end, and
/// the event score is the run maximum.
std::vector<DetectionEvent> threshold_scores(const KeywordCurves& curves,
                                             const std::string& file_id, const Threshold& thr);

/// Post-processing for one recording's events: (1) at every frame claimed by
/// more than one event only the highest-scoring event keeps it; trimmed
/// events retain their longest remaining contiguous span; (2) events shorter
/// than half their matched query template are discarded. Idempotent.
std::vector<DetectionEvent> postprocess(std::vector<DetectionEvent> events);

/// Greedy one-to-one event matching per (file, keyword) under `matching`;
/// micro-averaged F from pooled TP/FP/FN.
EvalReport event_f_score(const std::vector<DetectionEvent>& detections, const AnnotationSet& truth,
                         const MatchingConfig& matching = {});

/// threshold -> postprocess -> all files pooled.
std::vector<DetectionEvent> detect_events(const CurvesByFile& curves, const Threshold& thr);

/// Evenly spaced grid over the observed finite score range (101 points).
std::vector<double> default_threshold_grid(const CurvesByFile& curves, int points = 101);

enum class SweepMode { global, per_keyword };

struct SweepResult {
    Threshold best;
    EvalReport best_report;
    std::vector<EvalReport> by_grid_point;  // global-threshold curve over the grid
};

/// Evaluates the full threshold -> postprocess -> F pipeline at every grid
/// value and returns the argmax (ties to the lowest threshold). Per-keyword
/// mode additionally optimizes each keyword's threshold coordinate-wise in
/// one pass over the grid.
SweepResult sweep_threshold(const CurvesByFile& curves, const AnnotationSet& truth,
                            const std::vector<double>& grid, const MatchingConfig& matching = {},
                            SweepMode mode = SweepMode::global);

struct GapResult {
    double threshold_val = 0.0;   // argmax F on the validation split
    double threshold_test = 0.0;  // oracle argmax F on the test split
    double threshold_delta = 0.0; // test - validation
    double f_test_at_estimated = 0.0;
    double f_test_at_oracle = 0.0;
    double f_delta = 0.0;         // oracle - estimated, always >= 0
};

/// Compares the validation-estimated global threshold with the test-split
/// oracle threshold and the resulting test performance gap.
GapResult threshold_gap_analysis(const CurvesByFile& validation_curves,
                                 const AnnotationSet& validation_truth,
                                 const CurvesByFile& test_curves, const AnnotationSet& test_truth,
                                 const std::vector<double>& grid,
                                 const MatchingConfig& matching = {});

}  // namespace kws
