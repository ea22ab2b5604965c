// Command-line front end for the keyword-spotting toolkit. Subcommands cover
// feature extraction, channel simulation, synthetic fixtures, calibration,
// detection, threshold sweeps, evaluation and the full experiment pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kws/calib.hpp"
#include "kws/channel.hpp"
#include "kws/detect.hpp"
#include "kws/dsp.hpp"
#include "kws/dtw.hpp"
#include "kws/errors.hpp"
#include "kws/fixtures.hpp"
#include "kws/pipeline.hpp"
#include "kws/rng.hpp"
#include "kws/tensorio.hpp"

namespace fsys = std::filesystem;
using nlohmann::json;

namespace {

kws::PipelineConfig load_pipeline_config(const std::string& config_path) {
    if (config_path.empty()) return {};
    std::ifstream in(config_path);
    if (!in) throw kws::config_error("cannot open config " + config_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return kws::PipelineConfig::from_json(buf.str());
}

/// Pipeline subcommands share the dataset/options surface; flags override
/// whatever the optional --config JSON provided.
struct PipelineArgs {
    std::string config_path;
    std::string input_root, input_kind, bank, output, features, sides, aggregation, sweep;
    std::vector<std::string> modes;
    std::vector<double> snr;
    bool snr_grid = false;
    bool clean_queries = false;
    int trials = -1;
    int grid_points = -1;
    double collar = -1.0, offset_ratio = -1.0, delay_ms = -1.0, doppler_hz = -1.0;
    long long seed = -1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON pipeline config (or a previous manifest)");
        cmd->add_option("--input", input_root, "dataset root (queries/, val/, test/, *.tsv)");
        cmd->add_option("--input-kind", input_kind, "eseq|wav")->check(CLI::IsMember({"eseq", "wav"}));
        cmd->add_option("--bank", bank, "center bank (CBNK)");
        cmd->add_option("--output", output, "output directory");
        cmd->add_option("--features", features, "wav front-end: hfcc|log_mel")
            ->check(CLI::IsMember({"hfcc", "log_mel"}));
        cmd->add_option("--mode", modes, "calibration modes (repeatable)")
            ->check(CLI::IsMember({"none", "quantize", "normalize", "combined"}));
        cmd->add_option("--sides", sides, "calibrate both|query")
            ->check(CLI::IsMember({"both", "query"}));
        cmd->add_option("--snr-db", snr, "SNR values in dB (wav input)");
        cmd->add_flag("--snr-grid", snr_grid, "use the full -12..30 dB grid");
        cmd->add_flag("--clean-queries", clean_queries, "keep query templates channel-free");
        cmd->add_option("--trials", trials, "independent trials");
        cmd->add_option("--grid-points", grid_points, "threshold grid resolution");
        cmd->add_option("--collar", collar, "matching collar in seconds");
        cmd->add_option("--offset-ratio", offset_ratio, "offset tolerance as truth-duration ratio");
        cmd->add_option("--delay-ms", delay_ms, "channel differential delay (ms)");
        cmd->add_option("--doppler-hz", doppler_hz, "channel Doppler spread (Hz)");
        cmd->add_option("--seed", seed, "base RNG seed");
        cmd->add_option("--aggregation", aggregation, "multi-sample aggregation: max|mean")
            ->check(CLI::IsMember({"max", "mean"}));
        cmd->add_option("--sweep", sweep, "threshold sweep: global|per_keyword")
            ->check(CLI::IsMember({"global", "per_keyword"}));
    }

    kws::PipelineConfig resolve() const {
        kws::PipelineConfig cfg = load_pipeline_config(config_path);
        if (!input_root.empty()) cfg.input_root = input_root;
        if (!input_kind.empty()) cfg.input_kind = input_kind;
        if (!bank.empty()) cfg.bank_path = bank;
        if (!output.empty()) cfg.output_dir = output;
        if (!features.empty()) cfg.features = features;
        if (!modes.empty()) {
            cfg.modes.clear();
            for (const auto& name : modes) cfg.modes.push_back(kws::parse_calibration_mode(name));
        }
        if (!sides.empty()) cfg.sides = kws::parse_calibration_sides(sides);
        if (snr_grid) {
            cfg.snr_db.clear();
            for (auto spec : kws::snr_grid()) cfg.snr_db.push_back(spec.snr_db);
        } else if (!snr.empty()) {
            cfg.snr_db = snr;
        }
        if (clean_queries) cfg.clean_queries = true;
        if (trials > 0) cfg.trials = trials;
        if (grid_points > 0) cfg.grid_points = grid_points;
        if (collar >= 0.0) cfg.matching.collar_seconds = collar;
        if (offset_ratio >= 0.0) cfg.matching.offset_ratio = offset_ratio;
        if (delay_ms >= 0.0) cfg.channel_delay_ms = delay_ms;
        if (doppler_hz >= 0.0) cfg.channel_doppler_hz = doppler_hz;
        if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
        if (!aggregation.empty()) {
            cfg.aggregation = aggregation == "mean" ? kws::CurveAggregation::mean
                                                    : kws::CurveAggregation::max;
        }
        if (!sweep.empty()) {
            cfg.sweep = sweep == "per_keyword" ? kws::SweepMode::per_keyword
                                               : kws::SweepMode::global;
        }
        return cfg;
    }
};

int run(int argc, char** argv) {
    CLI::App app{"Template-based open-set keyword spotting with subsequence DTW"};
    app.require_subcommand(1);

    // --- features ---------------------------------------------------------
    auto* features_cmd = app.add_subcommand("features", "extract log-mel or HFCC features");
    std::string feat_in, feat_out, feat_kind = "log_mel";
    bool feat_standardize = false;
    features_cmd->add_option("--in", feat_in, "input WAV")->required();
    features_cmd->add_option("--out", feat_out, "output ESEQ")->required();
    features_cmd->add_option("--kind", feat_kind, "log_mel|hfcc")
        ->check(CLI::IsMember({"log_mel", "hfcc"}));
    features_cmd->add_flag("--standardize", feat_standardize,
                           "standardize + row-normalize for direct DTW use");
    features_cmd->callback([&] {
        kws::AudioBuffer audio = kws::preprocess(kws::read_wav(feat_in));
        kws::Spectrogram spec = feat_kind == "hfcc" ? kws::hfcc(audio) : kws::log_mel(audio);
        kws::EmbeddingSequence seq = feat_standardize ? kws::spectrogram_to_sequence(spec)
                                                      : kws::spectrogram_as_raw_sequence(spec);
        kws::write_embedding_sequence(seq, feat_out);
        std::cout << feat_out << ": " << seq.length() << " x " << seq.dim() << " ("
                  << feat_kind << ")\n";
    });

    // --- simulate-channel --------------------------------------------------
    auto* channel_cmd = app.add_subcommand("simulate-channel", "Watterson fading + AWGN");
    std::string ch_in, ch_out;
    double ch_snr = 30.0, ch_delay = 1.0, ch_doppler = 0.5;
    long long ch_seed = 0;
    bool ch_clean = false;
    channel_cmd->add_option("--in", ch_in, "input WAV")->required();
    channel_cmd->add_option("--out", ch_out, "output WAV")->required();
    channel_cmd->add_option("--snr-db", ch_snr, "AWGN SNR in dB");
    channel_cmd->add_option("--delay-ms", ch_delay, "differential delay (ms)");
    channel_cmd->add_option("--doppler-hz", ch_doppler, "Doppler spread (Hz)");
    channel_cmd->add_option("--seed", ch_seed, "RNG seed");
    channel_cmd->add_flag("--clean", ch_clean, "skip the noise (channel only)");
    channel_cmd->callback([&] {
        kws::AudioBuffer audio = kws::preprocess(kws::read_wav(ch_in));
        kws::ChannelConfig cfg;
        cfg.differential_delay_seconds = ch_delay / 1000.0;
        cfg.doppler_spread_hz = ch_doppler;
        cfg.seed = static_cast<uint64_t>(ch_seed);
        kws::AudioBuffer faded = kws::watterson(audio, cfg);
        size_t clipped = 0;
        kws::SnrSpec snr{ch_clean ? std::numeric_limits<double>::infinity() : ch_snr};
        kws::AudioBuffer noisy =
            kws::add_awgn(faded, snr, kws::splitmix64(cfg.seed ^ 0xA36EULL), &clipped);
        kws::write_wav(noisy, ch_out, kws::WavFormat::float32);
        std::cout << ch_out << ": " << noisy.samples.size() << " samples";
        if (clipped > 0) std::cout << ", " << clipped << " clipped";
        std::cout << "\n";
    });

    // --- make-fixtures ------------------------------------------------------
    auto* fixtures_cmd = app.add_subcommand("make-fixtures", "generate a synthetic dataset");
    std::string fix_out;
    kws::ToyWorldConfig fix_cfg;
    kws::ToyWorldLayout fix_layout;
    long long fix_seed = 0;
    fixtures_cmd->add_option("--out", fix_out, "output dataset root")->required();
    fixtures_cmd->add_option("--keywords", fix_cfg.n_keywords, "keyword classes");
    fixtures_cmd->add_option("--positions", fix_cfg.n_positions, "positional classes");
    fixtures_cmd->add_option("--clusters", fix_cfg.n_clusters, "clusters per class");
    fixtures_cmd->add_option("--dim", fix_cfg.dim, "embedding dimension");
    fixtures_cmd->add_option("--keyword-frames", fix_cfg.frames_per_keyword, "frames per keyword");
    fixtures_cmd->add_option("--noise-sigma", fix_cfg.noise_sigma, "embedding noise scale");
    fixtures_cmd->add_option("--seed", fix_seed, "RNG seed");
    fixtures_cmd->add_option("--shots", fix_layout.shots_per_keyword, "query shots per keyword");
    fixtures_cmd->add_option("--recordings", fix_layout.recordings_per_split,
                             "recordings per split");
    fixtures_cmd->add_option("--plants", fix_layout.plants_per_recording,
                             "keywords planted per recording");
    fixtures_cmd->add_option("--recording-frames", fix_layout.frames_per_recording,
                             "frames per recording");
    fixtures_cmd->callback([&] {
        fix_cfg.seed = static_cast<uint64_t>(fix_seed);
        kws::ToyWorld world = kws::make_toy_world(fix_cfg, fix_layout);
        kws::write_toy_world(world, fix_out);
        std::cout << fix_out << ": " << world.bank.num_centers() << " centers, "
                  << world.queries.size() << " keywords, " << world.validation.size()
                  << "+" << world.test.size() << " recordings\n";
    });

    // --- calibrate ----------------------------------------------------------
    auto* calibrate_cmd = app.add_subcommand("calibrate", "apply score calibration to ESEQ files");
    std::string cal_in, cal_out, cal_root, cal_out_root, cal_bank, cal_mode = "combined",
                cal_sides = "both";
    calibrate_cmd->add_option("--in", cal_in, "single input ESEQ");
    calibrate_cmd->add_option("--out", cal_out, "single output ESEQ");
    calibrate_cmd->add_option("--root", cal_root, "dataset root to calibrate in bulk");
    calibrate_cmd->add_option("--out-root", cal_out_root, "output dataset root for --root");
    calibrate_cmd->add_option("--bank", cal_bank, "center bank (CBNK)")->required();
    calibrate_cmd->add_option("--mode", cal_mode, "none|quantize|normalize|combined")
        ->check(CLI::IsMember({"none", "quantize", "normalize", "combined"}));
    calibrate_cmd->add_option("--sides", cal_sides,
                              "with --root: calibrate both sides or queries only")
        ->check(CLI::IsMember({"both", "query"}));
    calibrate_cmd->callback([&] {
        kws::CenterBank bank = kws::read_center_bank(cal_bank);
        kws::CalibrationMode mode = kws::parse_calibration_mode(cal_mode);
        if (!cal_in.empty()) {
            if (cal_out.empty()) throw kws::config_error("calibrate: --out required with --in");
            kws::EmbeddingSequence seq = kws::read_embedding_sequence(cal_in);
            kws::write_embedding_sequence(kws::apply_calibration(seq, bank, mode), cal_out);
            std::cout << cal_out << "\n";
            return;
        }
        if (cal_root.empty() || cal_out_root.empty()) {
            throw kws::config_error("calibrate: need --in/--out or --root/--out-root");
        }
        kws::CalibrationSides sides = kws::parse_calibration_sides(cal_sides);
        fsys::create_directories(fsys::path(cal_out_root));
        size_t files = 0;
        for (const char* sub : {"queries", "val", "test"}) {
            fsys::path src = fsys::path(cal_root) / sub;
            if (!fsys::is_directory(src)) continue;
            const bool calibrate_this =
                std::string(sub) == "queries" || sides == kws::CalibrationSides::both;
            fsys::create_directories(fsys::path(cal_out_root) / sub);
            for (const auto& entry : fsys::directory_iterator(src)) {
                if (!entry.is_regular_file() || entry.path().extension() != ".eseq") continue;
                kws::EmbeddingSequence seq = kws::read_embedding_sequence(entry.path());
                if (calibrate_this) seq = kws::apply_calibration(seq, bank, mode);
                kws::write_embedding_sequence(
                    seq, fsys::path(cal_out_root) / sub / entry.path().filename());
                ++files;
            }
        }
        for (const char* extra : {"val.tsv", "test.tsv", "bank.cbnk"}) {
            fsys::path src = fsys::path(cal_root) / extra;
            if (fsys::exists(src)) {
                fsys::copy_file(src, fsys::path(cal_out_root) / extra,
                                fsys::copy_options::overwrite_existing);
            }
        }
        std::cout << cal_out_root << ": " << files << " sequences (" << cal_mode << ", "
                  << cal_sides << ")\n";
    });

    // --- detect --------------------------------------------------------------
    auto* detect_cmd = app.add_subcommand("detect", "detect keywords in a single recording");
    std::string det_test, det_queries, det_bank, det_out, det_mode = "none", det_sides = "both";
    double det_threshold = 0.5;
    detect_cmd->add_option("--test", det_test, "test recording (ESEQ)")->required();
    detect_cmd->add_option("--queries", det_queries, "directory of query ESEQ files")->required();
    detect_cmd->add_option("--bank", det_bank, "center bank (needed for calibration)");
    detect_cmd->add_option("--mode", det_mode, "calibration mode")
        ->check(CLI::IsMember({"none", "quantize", "normalize", "combined"}));
    detect_cmd->add_option("--sides", det_sides, "both|query")
        ->check(CLI::IsMember({"both", "query"}));
    detect_cmd->add_option("--threshold", det_threshold, "decision threshold");
    detect_cmd->add_option("--out", det_out, "output detections TSV (default stdout)");
    detect_cmd->callback([&] {
        kws::CalibrationMode mode = kws::parse_calibration_mode(det_mode);
        kws::CalibrationSides sides = kws::parse_calibration_sides(det_sides);
        kws::CenterBank bank;
        if (mode != kws::CalibrationMode::none) {
            if (det_bank.empty()) throw kws::config_error("detect: --bank required for calibration");
            bank = kws::read_center_bank(det_bank);
        }
        kws::EmbeddingSequence test = kws::read_embedding_sequence(det_test);
        if (mode != kws::CalibrationMode::none && sides == kws::CalibrationSides::both) {
            test = kws::apply_calibration(test, bank, mode);
        }
        std::map<std::string, std::vector<kws::EmbeddingSequence>> queries;
        for (const auto& entry : fsys::directory_iterator(det_queries)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".eseq") continue;
            kws::EmbeddingSequence q = kws::read_embedding_sequence(entry.path());
            std::string keyword = q.label.value_or(entry.path().stem().string());
            if (mode != kws::CalibrationMode::none) q = kws::apply_calibration(q, bank, mode);
            queries[keyword].push_back(std::move(q));
        }
        if (queries.empty()) throw kws::config_error("detect: no queries found");

        kws::KeywordCurves curves;
        for (const auto& [keyword, shots] : queries) {
            curves[keyword] = kws::multi_sample_scores(shots, test);
        }
        kws::Threshold thr;
        thr.global = det_threshold;
        std::string file_id = fsys::path(det_test).stem().string();
        auto events = kws::postprocess(kws::threshold_scores(curves, file_id, thr));
        if (det_out.empty()) {
            for (const auto& ev : events) {
                std::cout << ev.file_id << '\t' << ev.onset_seconds << '\t' << ev.offset_seconds
                          << '\t' << ev.keyword << '\t' << ev.score << "\n";
            }
        } else {
            kws::write_detections(events, det_out);
            std::cout << det_out << ": " << events.size() << " events\n";
        }
    });

    // --- evaluate --------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("evaluate", "event-based F-score of detections vs truth");
    std::string ev_detections, ev_truth, ev_out;
    double ev_collar = 0.25, ev_ratio = 0.5;
    eval_cmd->add_option("--detections", ev_detections, "detections TSV")->required();
    eval_cmd->add_option("--truth", ev_truth, "annotations TSV")->required();
    eval_cmd->add_option("--collar", ev_collar, "onset collar (s)");
    eval_cmd->add_option("--offset-ratio", ev_ratio, "offset tolerance ratio");
    eval_cmd->add_option("--out", ev_out, "report JSON (default stdout)");
    eval_cmd->callback([&] {
        auto detections = kws::read_detections(ev_detections);
        auto truth = kws::read_annotations(ev_truth);
        kws::MatchingConfig matching{ev_collar, ev_ratio};
        kws::EvalReport report = kws::event_f_score(detections, truth, matching);
        json per_kw = json::object();
        for (const auto& [keyword, c] : report.per_keyword) {
            per_kw[keyword] = {{"tp", c.tp},         {"fp", c.fp},
                               {"fn", c.fn},         {"precision", c.precision},
                               {"recall", c.recall}, {"f_score", c.f_score}};
        }
        json j{{"tp", report.tp},           {"fp", report.fp},       {"fn", report.fn},
               {"micro_f", report.micro_f}, {"macro_f", report.macro_f}, {"per_keyword", per_kw}};
        if (ev_out.empty()) {
            std::cout << j.dump(2) << "\n";
        } else {
            std::ofstream(ev_out) << j.dump(2) << "\n";
            std::cout << ev_out << ": micro-F " << report.micro_f << "\n";
        }
    });

    // --- sweep-threshold / end-to-end / gap-analysis -----------------------------
    PipelineArgs sweep_args, e2e_args, gap_args;

    auto* sweep_cmd =
        app.add_subcommand("sweep-threshold", "sweep decision thresholds on the validation split");
    sweep_args.attach(sweep_cmd);
    sweep_cmd->callback([&] {
        kws::PipelineConfig cfg = sweep_args.resolve();
        if (cfg.modes.size() != 1) {
            throw kws::config_error("sweep-threshold: exactly one --mode");
        }
        kws::EndToEndResult result = kws::run_end_to_end(cfg);
        for (const auto& row : result.rows) {
            const auto& outcomes = result.cells[row][kws::to_string(cfg.modes[0])];
            for (size_t t = 0; t < outcomes.size(); ++t) {
                std::cout << row << "\ttrial" << t << "\tbest_threshold "
                          << outcomes[t].threshold_estimated << "\tval_F "
                          << 100.0 * outcomes[t].f_val << "\n";
            }
        }
    });

    auto* e2e_cmd = app.add_subcommand("end-to-end", "full experiment pipeline");
    e2e_args.attach(e2e_cmd);
    e2e_cmd->callback([&] {
        kws::PipelineConfig cfg = e2e_args.resolve();
        kws::EndToEndResult result = kws::run_end_to_end(cfg);
        std::cout << "row";
        for (auto mode : result.modes) std::cout << "\tval:" << kws::to_string(mode)
                                                 << "\ttest:" << kws::to_string(mode);
        std::cout << "\n";
        for (const auto& row : result.rows) {
            std::cout << row;
            for (auto mode : result.modes) {
                const auto& outcomes = result.cells[row][kws::to_string(mode)];
                std::vector<double> val_f, test_f;
                for (const auto& o : outcomes) {
                    val_f.push_back(100.0 * o.f_val);
                    test_f.push_back(100.0 * o.f_test_estimated);
                }
                auto [vm, vc] = kws::mean_ci95(val_f);
                auto [tm, tc] = kws::mean_ci95(test_f);
                char cell[64];
                std::snprintf(cell, sizeof(cell), "\t%.1f±%.1f\t%.1f±%.1f", vm, vc, tm, tc);
                std::cout << cell;
            }
            std::cout << "\n";
        }
    });

    auto* gap_cmd = app.add_subcommand("gap-analysis", "oracle vs estimated threshold gap");
    gap_args.attach(gap_cmd);
    gap_cmd->callback([&] {
        kws::PipelineConfig cfg = gap_args.resolve();
        kws::GapAnalysisResult result = kws::run_gap_analysis(cfg);
        std::cout << "row\tmode\tthreshold_delta\tf_delta\n";
        for (const auto& row : result.rows) {
            char line[128];
            std::snprintf(line, sizeof(line), "%s\t%s\t%.4f±%.4f\t%.4f±%.4f\n",
                          row.row.c_str(), row.mode.c_str(), row.threshold_delta_mean,
                          row.threshold_delta_ci95, row.f_delta_mean, row.f_delta_ci95);
            std::cout << line;
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // bad usage is a configuration error
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const kws::config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const kws::format_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const kws::degenerate_input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
