#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "kws/calib.hpp"
#include "kws/channel.hpp"
#include "kws/detect.hpp"
#include "kws/dtw.hpp"
#include "kws/fixtures.hpp"
#include "kws/types.hpp"

namespace kws {

inline constexpr const char* kVersion = "0.1.0";

/// Resolved configuration for the experiment pipeline. Serializes to/from
/// JSON; the manifest written next to every run's outputs is exactly this
/// structure, so a run can be reproduced from its manifest.
struct PipelineConfig {
    std::string input_root;        // dataset root: queries/, val/, test/, val.tsv, test.tsv
    std::string input_kind = "eseq";  // "eseq" (embeddings) or "wav" (audio front-end)
    std::string bank_path;         // CBNK file; defaults to <root>/bank.cbnk when present
    std::string output_dir;        // empty: nothing is written
    std::string features = "hfcc";    // wav mode front-end: "hfcc" or "log_mel"
    std::vector<CalibrationMode> modes{CalibrationMode::none};
    CalibrationSides sides = CalibrationSides::both;
    StepSizes steps;
    MatchingConfig matching;
    int grid_points = 101;
    std::vector<double> snr_db;    // wav mode noise grid; empty = clean only
    bool clean_queries = false;    // wav mode: keep query templates channel-free
    double channel_delay_ms = 1.0;
    double channel_doppler_hz = 0.5;
    int trials = 1;
    uint64_t seed = 0;
    CurveAggregation aggregation = CurveAggregation::max;
    SweepMode sweep = SweepMode::global;

    void validate() const;
    std::string to_json() const;
    static PipelineConfig from_json(const std::string& text);
};

/// Everything measured for one (condition row, mode, trial).
struct TrialOutcome {
    double threshold_estimated = 0.0;  // argmax F on validation
    double threshold_oracle = 0.0;     // argmax F on test
    double f_val = 0.0;                // validation F at its own best threshold
    double f_test_estimated = 0.0;     // test F at the validation threshold
    double f_test_oracle = 0.0;        // test F at the oracle threshold
    EvalReport test_report;            // test split at the estimated threshold
};

struct EndToEndResult {
    std::vector<std::string> rows;  // "clean" or e.g. "-12dB", in run order
    std::vector<CalibrationMode> modes;
    // rows -> mode name -> one outcome per trial
    std::map<std::string, std::map<std::string, std::vector<TrialOutcome>>> cells;
};

/// Full experiment: per condition row (clean or SNR) and calibration mode,
/// score every (query, recording) pair with multi-sample subsequence DTW,
/// estimate the decision threshold on the validation split and evaluate the
/// test split with it. Writes per-condition reports, detections, aggregate
/// tables and a manifest into output_dir when set.
EndToEndResult run_end_to_end(const PipelineConfig& config);

struct GapRow {
    std::string row;
    std::string mode;
    double threshold_delta_mean = 0.0;
    double threshold_delta_ci95 = 0.0;
    double f_delta_mean = 0.0;
    double f_delta_ci95 = 0.0;
};

struct GapAnalysisResult {
    std::vector<GapRow> rows;
    EndToEndResult raw;
};

/// Oracle-vs-estimated threshold analysis per condition row and mode.
GapAnalysisResult run_gap_analysis(const PipelineConfig& config);

/// Writes a synthetic world as a dataset tree run_end_to_end can consume
/// (bank.cbnk, queries/, val/, test/, val.tsv, test.tsv).
void write_toy_world(const ToyWorld& world, const std::filesystem::path& out_dir);

/// Mean and 95% confidence half-width (Student t) of a sample.
std::pair<double, double> mean_ci95(const std::vector<double>& values);

/// Index-parallel loop; honors the KWS_THREADS environment variable.
void parallel_for(size_t count, const std::function<void(size_t)>& body);

}  // namespace kws
