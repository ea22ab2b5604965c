#include "kws/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "kws/dsp.hpp"
#include "kws/errors.hpp"
#include "kws/rng.hpp"
#include "kws/tensorio.hpp"

namespace kws {

namespace fsys = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config (de)serialization

void PipelineConfig::validate() const {
    if (input_root.empty()) throw config_error("pipeline: input_root is required");
    if (input_kind != "eseq" && input_kind != "wav") {
        throw config_error("pipeline: input_kind must be eseq or wav");
    }
    if (features != "hfcc" && features != "log_mel") {
        throw config_error("pipeline: features must be hfcc or log_mel");
    }
    if (modes.empty()) throw config_error("pipeline: at least one calibration mode");
    if (grid_points < 1) throw config_error("pipeline: grid_points must be >= 1");
    if (trials < 1) throw config_error("pipeline: trials must be >= 1");
    steps.validate();
}

std::string PipelineConfig::to_json() const {
    json steps_json = json::array();
    for (auto [dq, dt] : steps.steps) steps_json.push_back({dq, dt});
    json modes_json = json::array();
    for (auto m : modes) modes_json.push_back(to_string(m));
    json j{{"version", kVersion},
           {"input_root", input_root},
           {"input_kind", input_kind},
           {"bank_path", bank_path},
           {"output_dir", output_dir},
           {"features", features},
           {"modes", modes_json},
           {"sides", kws::to_string(sides)},
           {"steps", steps_json},
           {"matching", {{"collar_seconds", matching.collar_seconds},
                         {"offset_ratio", matching.offset_ratio}}},
           {"grid_points", grid_points},
           {"snr_db", snr_db},
           {"clean_queries", clean_queries},
           {"channel_delay_ms", channel_delay_ms},
           {"channel_doppler_hz", channel_doppler_hz},
           {"trials", trials},
           {"seed", seed},
           {"aggregation", aggregation == CurveAggregation::max ? "max" : "mean"},
           {"sweep", sweep == SweepMode::global ? "global" : "per_keyword"}};
    return j.dump(2);
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw format_error(std::string("pipeline config: invalid JSON: ") + e.what());
    }
    PipelineConfig cfg;
    try {
        cfg.input_root = j.value("input_root", "");
        cfg.input_kind = j.value("input_kind", "eseq");
        cfg.bank_path = j.value("bank_path", "");
        cfg.output_dir = j.value("output_dir", "");
        cfg.features = j.value("features", "hfcc");
        if (j.contains("modes")) {
            cfg.modes.clear();
            for (const auto& m : j["modes"]) cfg.modes.push_back(parse_calibration_mode(m));
        }
        cfg.sides = parse_calibration_sides(j.value("sides", "both"));
        if (j.contains("steps")) {
            cfg.steps.steps.clear();
            for (const auto& s : j["steps"]) {
                cfg.steps.steps.emplace_back(s.at(0).get<int>(), s.at(1).get<int>());
            }
        }
        if (j.contains("matching")) {
            cfg.matching.collar_seconds = j["matching"].value("collar_seconds", 0.25);
            cfg.matching.offset_ratio = j["matching"].value("offset_ratio", 0.5);
        }
        cfg.grid_points = j.value("grid_points", 101);
        if (j.contains("snr_db")) cfg.snr_db = j["snr_db"].get<std::vector<double>>();
        cfg.clean_queries = j.value("clean_queries", false);
        cfg.channel_delay_ms = j.value("channel_delay_ms", 1.0);
        cfg.channel_doppler_hz = j.value("channel_doppler_hz", 0.5);
        cfg.trials = j.value("trials", 1);
        cfg.seed = j.value("seed", static_cast<uint64_t>(0));
        cfg.aggregation = j.value("aggregation", "max") == std::string("mean")
                              ? CurveAggregation::mean
                              : CurveAggregation::max;
        cfg.sweep = j.value("sweep", "global") == std::string("per_keyword")
                        ? SweepMode::per_keyword
                        : SweepMode::global;
    } catch (const json::exception& e) {
        throw format_error(std::string("pipeline config: bad field: ") + e.what());
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Small utilities

std::pair<double, double> mean_ci95(const std::vector<double>& values) {
    if (values.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    if (values.size() < 2) return {mean, 0.0};

    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double stderr_mean =
        std::sqrt(ss / (values.size() - 1)) / std::sqrt(static_cast<double>(values.size()));

    // Two-sided 97.5% Student t quantiles for df = 1..30, then the normal limit.
    static constexpr double kT[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                    2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                    2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                    2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
    const size_t df = values.size() - 1;
    const double t = df <= 30 ? kT[df - 1] : 1.96;
    return {mean, t * stderr_mean};
}

void parallel_for(size_t count, const std::function<void(size_t)>& body) {
    if (count == 0) return;
    size_t threads = std::thread::hardware_concurrency();
    if (const char* env = std::getenv("KWS_THREADS")) {
        threads = static_cast<size_t>(std::max(1L, std::atol(env)));
    }
    threads = std::min(threads == 0 ? 1 : threads, count);
    if (threads <= 1) {
        for (size_t i = 0; i < count; ++i) body(i);
        return;
    }

    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

namespace {

std::string snr_row_label(double snr_db) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%gdB", snr_db);
    return buf;
}

std::vector<fsys::path> list_files(const fsys::path& dir, const std::string& extension) {
    if (!fsys::is_directory(dir)) {
        throw config_error("pipeline: missing directory " + dir.string());
    }
    std::vector<fsys::path> files;
    for (const auto& entry : fsys::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == extension) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw config_error("pipeline: no *" + extension + " files in " + dir.string());
    }
    return files;
}

/// Keyword of a query file: the ESEQ label when present, otherwise the stem
/// up to the last "_shot"/"_" suffix, otherwise the whole stem.
std::string query_keyword(const fsys::path& path, const std::optional<std::string>& label) {
    if (label && !label->empty()) return *label;
    std::string stem = path.stem().string();
    size_t pos = stem.find("_shot");
    if (pos == std::string::npos) pos = stem.rfind('_');
    return pos == std::string::npos ? stem : stem.substr(0, pos);
}

struct LoadedDataset {
    bool wav_mode = false;
    bool has_bank = false;
    CenterBank bank;
    // eseq mode
    std::map<std::string, std::vector<EmbeddingSequence>> queries;
    std::map<std::string, EmbeddingSequence> val_seqs, test_seqs;
    // wav mode
    std::map<std::string, std::vector<std::pair<std::string, AudioBuffer>>> query_wavs;
    std::map<std::string, AudioBuffer> val_wavs, test_wavs;

    AnnotationSet val_truth, test_truth;
};

LoadedDataset load_dataset(const PipelineConfig& cfg) {
    LoadedDataset data;
    data.wav_mode = cfg.input_kind == "wav";
    const fsys::path root = cfg.input_root;

    fsys::path bank_path = cfg.bank_path.empty() ? root / "bank.cbnk" : fsys::path(cfg.bank_path);
    if (fsys::exists(bank_path)) {
        data.bank = read_center_bank(bank_path);
        data.has_bank = true;
    } else if (!cfg.bank_path.empty()) {
        throw config_error("pipeline: center bank not found at " + bank_path.string());
    }

    data.val_truth = read_annotations(root / "val.tsv");
    data.test_truth = read_annotations(root / "test.tsv");
    if (data.has_bank) {
        validate_annotations(data.val_truth, data.bank.keyword_names);
        validate_annotations(data.test_truth, data.bank.keyword_names);
    }

    if (!data.wav_mode) {
        for (const auto& path : list_files(root / "queries", ".eseq")) {
            EmbeddingSequence seq = read_embedding_sequence(path);
            data.queries[query_keyword(path, seq.label)].push_back(std::move(seq));
        }
        for (const auto& path : list_files(root / "val", ".eseq")) {
            data.val_seqs[path.stem().string()] = read_embedding_sequence(path);
        }
        for (const auto& path : list_files(root / "test", ".eseq")) {
            data.test_seqs[path.stem().string()] = read_embedding_sequence(path);
        }
    } else {
        for (const auto& path : list_files(root / "queries", ".wav")) {
            data.query_wavs[query_keyword(path, std::nullopt)].emplace_back(path.stem().string(),
                                                                            read_wav(path));
        }
        for (const auto& path : list_files(root / "val", ".wav")) {
            data.val_wavs[path.stem().string()] = read_wav(path);
        }
        for (const auto& path : list_files(root / "test", ".wav")) {
            data.test_wavs[path.stem().string()] = read_wav(path);
        }
    }

    if (data.has_bank) {
        const auto& names = data.bank.keyword_names;
        auto check = [&](const std::string& keyword) {
            if (std::find(names.begin(), names.end(), keyword) == names.end()) {
                throw config_error("pipeline: query keyword '" + keyword +
                                   "' not in the center bank");
            }
        };
        if (!data.wav_mode) {
            for (const auto& [keyword, shots] : data.queries) check(keyword);
        } else {
            for (const auto& [keyword, shots] : data.query_wavs) check(keyword);
        }
    }
    return data;
}

struct ConditionInputs {
    std::map<std::string, std::vector<EmbeddingSequence>> queries;
    std::map<std::string, EmbeddingSequence> val_seqs, test_seqs;
};

EmbeddingSequence front_end(const AudioBuffer& audio, const std::string& features) {
    AudioBuffer prepped = preprocess(audio);
    Spectrogram spec = features == "hfcc" ? hfcc(prepped) : log_mel(prepped);
    return spectrogram_to_sequence(spec);
}

AudioBuffer degrade(const AudioBuffer& audio, const PipelineConfig& cfg, double snr_db,
                    uint64_t condition_seed, const std::string& file_id) {
    AudioBuffer prepped = preprocess(audio);
    ChannelConfig channel;
    channel.differential_delay_seconds = cfg.channel_delay_ms / 1000.0;
    channel.doppler_spread_hz = cfg.channel_doppler_hz;
    channel.seed = splitmix64(condition_seed ^ fnv1a64(file_id));
    AudioBuffer faded = watterson(prepped, channel);
    return add_awgn(faded, {snr_db}, splitmix64(channel.seed ^ 0xA36EULL));
}

/// Produces the embedding sequences for one condition row. For wav input the
/// channel + noise + front-end run here; eseq input passes through.
ConditionInputs materialize(const LoadedDataset& data, const PipelineConfig& cfg, bool clean,
                            double snr_db, uint64_t condition_seed) {
    ConditionInputs inputs;
    if (!data.wav_mode) {
        inputs.queries = data.queries;
        inputs.val_seqs = data.val_seqs;
        inputs.test_seqs = data.test_seqs;
        return inputs;
    }

    struct Job {
        const AudioBuffer* audio;
        std::string file_id;
        bool is_query;
        std::string keyword;
        EmbeddingSequence out;
    };
    std::vector<Job> jobs;
    for (const auto& [keyword, shots] : data.query_wavs) {
        for (const auto& [file_id, audio] : shots) {
            jobs.push_back({&audio, file_id, true, keyword, {}});
        }
    }
    for (const auto& [file_id, audio] : data.val_wavs) {
        jobs.push_back({&audio, file_id, false, "", {}});
    }
    for (const auto& [file_id, audio] : data.test_wavs) {
        jobs.push_back({&audio, file_id, false, "", {}});
    }

    parallel_for(jobs.size(), [&](size_t i) {
        Job& job = jobs[i];
        const bool skip_channel = clean || (job.is_query && cfg.clean_queries);
        if (skip_channel) {
            job.out = front_end(*job.audio, cfg.features);
        } else {
            AudioBuffer noisy = degrade(*job.audio, cfg, snr_db, condition_seed, job.file_id);
            job.out = front_end(noisy, cfg.features);
        }
    });

    size_t idx = 0;
    for (const auto& [keyword, shots] : data.query_wavs) {
        for (size_t s = 0; s < shots.size(); ++s) {
            inputs.queries[keyword].push_back(std::move(jobs[idx++].out));
        }
    }
    for (const auto& [file_id, audio] : data.val_wavs) {
        inputs.val_seqs[file_id] = std::move(jobs[idx++].out);
    }
    for (const auto& [file_id, audio] : data.test_wavs) {
        inputs.test_seqs[file_id] = std::move(jobs[idx++].out);
    }
    return inputs;
}

CurvesByFile score_split(const std::map<std::string, EmbeddingSequence>& recordings,
                         const std::map<std::string, std::vector<EmbeddingSequence>>& queries,
                         const PipelineConfig& cfg) {
    struct Pair {
        const std::string* file_id;
        const EmbeddingSequence* recording;
        const std::string* keyword;
        const std::vector<EmbeddingSequence>* shots;
        ScoreCurve curve;
    };
    std::vector<Pair> pairs;
    for (const auto& [file_id, recording] : recordings) {
        for (const auto& [keyword, shots] : queries) {
            pairs.push_back({&file_id, &recording, &keyword, &shots, {}});
        }
    }
    parallel_for(pairs.size(), [&](size_t i) {
        Pair& p = pairs[i];
        p.curve = multi_sample_scores(*p.shots, *p.recording, cfg.steps, cfg.aggregation);
    });

    CurvesByFile curves;
    for (auto& p : pairs) curves[*p.file_id][*p.keyword] = std::move(p.curve);
    return curves;
}

json report_to_json(const EvalReport& report) {
    json per_kw = json::object();
    for (const auto& [keyword, c] : report.per_keyword) {
        per_kw[keyword] = {{"tp", c.tp},          {"fp", c.fp},
                           {"fn", c.fn},          {"precision", c.precision},
                           {"recall", c.recall},  {"f_score", c.f_score}};
    }
    return json{{"tp", report.tp},
                {"fp", report.fp},
                {"fn", report.fn},
                {"micro_f", report.micro_f},
                {"macro_f", report.macro_f},
                {"per_keyword", per_kw}};
}

}  // namespace

void write_toy_world(const ToyWorld& world, const fsys::path& out_dir) {
    fsys::create_directories(out_dir / "queries");
    fsys::create_directories(out_dir / "val");
    fsys::create_directories(out_dir / "test");
    write_center_bank(world.bank, out_dir / "bank.cbnk");
    for (const auto& [keyword, shots] : world.queries) {
        for (size_t s = 0; s < shots.size(); ++s) {
            write_embedding_sequence(
                shots[s], out_dir / "queries" / (keyword + "_shot" + std::to_string(s) + ".eseq"));
        }
    }
    for (const auto& [file_id, seq] : world.validation) {
        write_embedding_sequence(seq, out_dir / "val" / (file_id + ".eseq"));
    }
    for (const auto& [file_id, seq] : world.test) {
        write_embedding_sequence(seq, out_dir / "test" / (file_id + ".eseq"));
    }
    write_annotations(world.validation_truth, out_dir / "val.tsv");
    write_annotations(world.test_truth, out_dir / "test.tsv");
}

EndToEndResult run_end_to_end(const PipelineConfig& config) {
    config.validate();
    const LoadedDataset data = load_dataset(config);

    const bool needs_bank = std::any_of(config.modes.begin(), config.modes.end(),
                                        [](CalibrationMode m) { return m != CalibrationMode::none; });
    if (needs_bank && !data.has_bank) {
        throw config_error("pipeline: calibration modes require a center bank");
    }

    std::vector<std::pair<std::string, double>> rows;  // label, snr (nan for clean)
    if (data.wav_mode && !config.snr_db.empty()) {
        for (double snr : config.snr_db) rows.emplace_back(snr_row_label(snr), snr);
    } else {
        rows.emplace_back("clean", std::numeric_limits<double>::quiet_NaN());
    }

    const fsys::path out_dir = config.output_dir;
    const bool write_outputs = !config.output_dir.empty();
    if (write_outputs) {
        fsys::create_directories(out_dir / "reports");
        std::ofstream(out_dir / "manifest.json") << config.to_json() << "\n";
    }

    EndToEndResult result;
    result.modes = config.modes;
    for (const auto& [label, snr] : rows) result.rows.push_back(label);

    for (int trial = 0; trial < config.trials; ++trial) {
        const uint64_t trial_seed = splitmix64(config.seed ^ (0x7321ULL + trial));
        for (size_t r = 0; r < rows.size(); ++r) {
            const auto& [row_label, snr] = rows[r];
            const bool clean = std::isnan(snr);
            const uint64_t condition_seed = splitmix64(trial_seed ^ (r * 0x9E37ULL));
            ConditionInputs inputs = materialize(data, config, clean, snr, condition_seed);

            for (CalibrationMode mode : config.modes) {
                // Calibration precedes any combination across segments/queries.
                auto calibrated_queries = inputs.queries;
                auto calibrated_val = inputs.val_seqs;
                auto calibrated_test = inputs.test_seqs;
                if (mode != CalibrationMode::none) {
                    for (auto& [keyword, shots] : calibrated_queries) {
                        for (auto& shot : shots) shot = apply_calibration(shot, data.bank, mode);
                    }
                    if (config.sides == CalibrationSides::both) {
                        for (auto& [file_id, seq] : calibrated_val) {
                            seq = apply_calibration(seq, data.bank, mode);
                        }
                        for (auto& [file_id, seq] : calibrated_test) {
                            seq = apply_calibration(seq, data.bank, mode);
                        }
                    }
                }

                CurvesByFile val_curves = score_split(calibrated_val, calibrated_queries, config);
                CurvesByFile test_curves = score_split(calibrated_test, calibrated_queries, config);

                const auto grid = default_threshold_grid(val_curves, config.grid_points);
                SweepResult val_sweep =
                    sweep_threshold(val_curves, data.val_truth, grid, config.matching, config.sweep);
                SweepResult test_sweep =
                    sweep_threshold(test_curves, data.test_truth, grid, config.matching, config.sweep);

                TrialOutcome outcome;
                outcome.threshold_estimated = val_sweep.best.global;
                outcome.threshold_oracle = test_sweep.best.global;
                outcome.f_val = val_sweep.best_report.micro_f;
                outcome.f_test_oracle = test_sweep.best_report.micro_f;
                auto test_detections = detect_events(test_curves, val_sweep.best);
                outcome.test_report =
                    event_f_score(test_detections, data.test_truth, config.matching);
                outcome.test_report.threshold_used = val_sweep.best;
                outcome.f_test_estimated = outcome.test_report.micro_f;

                if (write_outputs) {
                    const std::string stem = row_label + "_" + to_string(mode) + "_trial" +
                                             std::to_string(trial);
                    json j{{"row", row_label},
                           {"mode", to_string(mode)},
                           {"trial", trial},
                           {"threshold_estimated", outcome.threshold_estimated},
                           {"threshold_oracle", outcome.threshold_oracle},
                           {"f_val", outcome.f_val},
                           {"f_test_estimated", outcome.f_test_estimated},
                           {"f_test_oracle", outcome.f_test_oracle},
                           {"test_report", report_to_json(outcome.test_report)}};
                    std::ofstream(out_dir / "reports" / (stem + ".json")) << j.dump(2) << "\n";
                    write_detections(test_detections, out_dir / "reports" / (stem + ".tsv"));
                }
                result.cells[row_label][to_string(mode)].push_back(std::move(outcome));
            }
        }
    }

    if (write_outputs) {
        // Aggregate table: rows are conditions, one column pair per mode,
        // values are percent F with 95% CI half-widths over trials.
        std::ofstream table(out_dir / "aggregate.tsv");
        table << "row";
        for (CalibrationMode mode : config.modes) {
            table << "\tval:" << to_string(mode) << "\ttest:" << to_string(mode);
        }
        table << "\n";
        char cell[64];
        for (const auto& row_label : result.rows) {
            table << row_label;
            for (CalibrationMode mode : config.modes) {
                const auto& outcomes = result.cells[row_label][to_string(mode)];
                std::vector<double> val_f, test_f;
                for (const auto& o : outcomes) {
                    val_f.push_back(100.0 * o.f_val);
                    test_f.push_back(100.0 * o.f_test_estimated);
                }
                auto [vm, vc] = mean_ci95(val_f);
                auto [tm, tc] = mean_ci95(test_f);
                std::snprintf(cell, sizeof(cell), "\t%.1f±%.1f\t%.1f±%.1f", vm, vc, tm, tc);
                table << cell;
            }
            table << "\n";
        }
    }
    return result;
}

GapAnalysisResult run_gap_analysis(const PipelineConfig& config) {
    GapAnalysisResult result;
    result.raw = run_end_to_end(config);

    for (const auto& row_label : result.raw.rows) {
        for (CalibrationMode mode : result.raw.modes) {
            const auto& outcomes = result.raw.cells[row_label][to_string(mode)];
            std::vector<double> thr_delta, f_delta;
            for (const auto& o : outcomes) {
                thr_delta.push_back(o.threshold_oracle - o.threshold_estimated);
                f_delta.push_back(o.f_test_oracle - o.f_test_estimated);
            }
            GapRow row;
            row.row = row_label;
            row.mode = to_string(mode);
            std::tie(row.threshold_delta_mean, row.threshold_delta_ci95) = mean_ci95(thr_delta);
            std::tie(row.f_delta_mean, row.f_delta_ci95) = mean_ci95(f_delta);
            result.rows.push_back(row);
        }
    }

    if (!config.output_dir.empty()) {
        const fsys::path out_dir = config.output_dir;
        fsys::create_directories(out_dir);
        std::ofstream tsv(out_dir / "gap.tsv");
        tsv << "row\tmode\tthreshold_delta\tthreshold_delta_ci95\tf_delta\tf_delta_ci95\n";
        json rows_json = json::array();
        for (const auto& row : result.rows) {
            char line[160];
            std::snprintf(line, sizeof(line), "%s\t%s\t%.6f\t%.6f\t%.6f\t%.6f\n", row.row.c_str(),
                          row.mode.c_str(), row.threshold_delta_mean, row.threshold_delta_ci95,
                          row.f_delta_mean, row.f_delta_ci95);
            tsv << line;
            rows_json.push_back({{"row", row.row},
                                 {"mode", row.mode},
                                 {"threshold_delta", row.threshold_delta_mean},
                                 {"threshold_delta_ci95", row.threshold_delta_ci95},
                                 {"f_delta", row.f_delta_mean},
                                 {"f_delta_ci95", row.f_delta_ci95}});
        }
        std::ofstream(out_dir / "gap.json") << rows_json.dump(2) << "\n";
    }
    return result;
}

}  // namespace kws
