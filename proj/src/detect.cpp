#include "kws/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

#include "kws/errors.hpp"

namespace kws {

namespace {

double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

void finish_counts(KeywordCounts& c) {
    c.precision = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
    c.recall = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
    c.f_score = safe_div(2.0 * c.tp, static_cast<double>(2 * c.tp + c.fp + c.fn));
}

}  // namespace

std::vector<DetectionEvent> threshold_scores(const KeywordCurves& curves,
                                             const std::string& file_id, const Threshold& thr) {
    std::vector<DetectionEvent> events;
    for (const auto& [keyword, curve] : curves) {
        const double cut = thr.value_for(keyword);
        int t = 0;
        while (t < curve.length()) {
            if (!(curve.score[t] >= cut)) {
                ++t;
                continue;
            }
            int run_start = t;
            int peak = t;
            while (t < curve.length() && curve.score[t] >= cut) {
                if (curve.score[t] > curve.score[peak]) peak = t;
                ++t;
            }
            int run_end = t - 1;

            DetectionEvent ev;
            ev.file_id = file_id;
            ev.keyword = keyword;
            ev.hop_seconds = curve.hop_seconds;
            ev.onset_frame = curve.onset_frame[peak] >= 0 ? curve.onset_frame[peak] : run_start;
            ev.offset_frame = run_end;
            ev.score = curve.score[peak];
            ev.query_seconds = curve.query_frames[peak] * curve.hop_seconds;
            ev.onset_seconds = ev.onset_frame * curve.hop_seconds;
            ev.offset_seconds = (ev.offset_frame + 1) * curve.hop_seconds;
            events.push_back(std::move(ev));
        }
    }
    return events;
}

std::vector<DetectionEvent> postprocess(std::vector<DetectionEvent> events) {
    if (events.empty()) return events;

    // Higher score wins a contested frame; the rest of the ordering only
    // makes the outcome reproducible under exact score ties.
    std::stable_sort(events.begin(), events.end(), [](const DetectionEvent& a, const DetectionEvent& b) {
        return std::tie(b.score, a.onset_frame, a.keyword, a.offset_frame) <
               std::tie(a.score, b.onset_frame, b.keyword, b.offset_frame);
    });

    int max_frame = 0;
    for (const auto& ev : events) max_frame = std::max(max_frame, ev.offset_frame);
    std::vector<char> claimed(static_cast<size_t>(max_frame) + 1, 0);

    std::vector<DetectionEvent> kept;
    for (auto& ev : events) {
        // Longest unclaimed contiguous span inside the event (earliest wins ties).
        int best_start = -1, best_len = 0;
        int cur_start = -1;
        for (int f = ev.onset_frame; f <= ev.offset_frame + 1; ++f) {
            const bool free_frame = f <= ev.offset_frame && f >= 0 && !claimed[f];
            if (free_frame) {
                if (cur_start < 0) cur_start = f;
            } else if (cur_start >= 0) {
                const int len = f - cur_start;
                if (len > best_len) {
                    best_len = len;
                    best_start = cur_start;
                }
                cur_start = -1;
            }
        }
        if (best_len == 0) continue;

        ev.onset_frame = best_start;
        ev.offset_frame = best_start + best_len - 1;
        ev.onset_seconds = ev.onset_frame * ev.hop_seconds;
        ev.offset_seconds = (ev.offset_frame + 1) * ev.hop_seconds;
        for (int f = ev.onset_frame; f <= ev.offset_frame; ++f) claimed[f] = 1;

        // Detections shorter than half their query template are spurious.
        const double duration = ev.offset_seconds - ev.onset_seconds;
        if (duration < 0.5 * ev.query_seconds) continue;
        kept.push_back(std::move(ev));
    }

    std::sort(kept.begin(), kept.end(), [](const DetectionEvent& a, const DetectionEvent& b) {
        return std::tie(a.onset_frame, a.offset_frame, a.keyword) <
               std::tie(b.onset_frame, b.offset_frame, b.keyword);
    });
    return kept;
}

EvalReport event_f_score(const std::vector<DetectionEvent>& detections, const AnnotationSet& truth,
                         const MatchingConfig& matching) {
    // Duplicate ground-truth events are an annotation bug, not a metric input.
    {
        std::set<std::tuple<std::string, std::string, double, double>> seen;
        for (const auto& t : truth.events) {
            if (!seen.insert({t.file_id, t.keyword, t.onset_seconds, t.offset_seconds}).second) {
                throw format_error("event_f_score: duplicate annotation for '" + t.keyword +
                                   "' in " + t.file_id);
            }
        }
    }

    struct Group {
        std::vector<const DetectionEvent*> dets;
        std::vector<const AnnotatedEvent*> truths;
    };
    std::map<std::pair<std::string, std::string>, Group> groups;  // (file, keyword)
    for (const auto& d : detections) groups[{d.file_id, d.keyword}].dets.push_back(&d);
    for (const auto& t : truth.events) groups[{t.file_id, t.keyword}].truths.push_back(&t);

    EvalReport report;
    for (auto& [key, group] : groups) {
        const std::string& keyword = key.second;
        auto& counts = report.per_keyword[keyword];

        auto by_onset = [](const auto* a, const auto* b) {
            return a->onset_seconds < b->onset_seconds;
        };
        std::sort(group.dets.begin(), group.dets.end(), by_onset);
        std::sort(group.truths.begin(), group.truths.end(), by_onset);

        std::vector<char> truth_used(group.truths.size(), 0);
        for (const DetectionEvent* det : group.dets) {
            bool matched = false;
            for (size_t i = 0; i < group.truths.size(); ++i) {
                if (truth_used[i]) continue;
                const AnnotatedEvent* gt = group.truths[i];
                const double truth_dur = gt->offset_seconds - gt->onset_seconds;
                const double offset_tol =
                    std::max(matching.collar_seconds, matching.offset_ratio * truth_dur);
                if (std::abs(det->onset_seconds - gt->onset_seconds) <= matching.collar_seconds &&
                    std::abs(det->offset_seconds - gt->offset_seconds) <= offset_tol) {
                    truth_used[i] = 1;
                    matched = true;
                    break;
                }
            }
            if (matched) {
                ++counts.tp;
            } else {
                ++counts.fp;
            }
        }
        for (char used : truth_used) {
            if (!used) ++counts.fn;
        }
    }

    double f_sum = 0.0;
    for (auto& [keyword, counts] : report.per_keyword) {
        finish_counts(counts);
        report.tp += counts.tp;
        report.fp += counts.fp;
        report.fn += counts.fn;
        f_sum += counts.f_score;
    }
    report.micro_f = safe_div(2.0 * report.tp, static_cast<double>(2 * report.tp + report.fp + report.fn));
    report.macro_f = report.per_keyword.empty() ? 0.0 : f_sum / report.per_keyword.size();
    return report;
}

std::vector<DetectionEvent> detect_events(const CurvesByFile& curves, const Threshold& thr) {
    std::vector<DetectionEvent> all;
    for (const auto& [file_id, keyword_curves] : curves) {
        auto events = postprocess(threshold_scores(keyword_curves, file_id, thr));
        all.insert(all.end(), std::make_move_iterator(events.begin()),
                   std::make_move_iterator(events.end()));
    }
    return all;
}

std::vector<double> default_threshold_grid(const CurvesByFile& curves, int points) {
    if (points < 1) throw config_error("default_threshold_grid: points must be >= 1");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& [file_id, keyword_curves] : curves) {
        for (const auto& [keyword, curve] : keyword_curves) {
            for (double s : curve.score) {
                if (!std::isfinite(s)) continue;
                lo = std::min(lo, s);
                hi = std::max(hi, s);
            }
        }
    }
    if (!std::isfinite(lo)) throw degenerate_input_error("default_threshold_grid: no finite scores");
    std::vector<double> grid(points);
    for (int i = 0; i < points; ++i) {
        grid[i] = points == 1 ? lo : lo + (hi - lo) * i / (points - 1);
    }
    return grid;
}

SweepResult sweep_threshold(const CurvesByFile& curves, const AnnotationSet& truth,
                            const std::vector<double>& grid, const MatchingConfig& matching,
                            SweepMode mode) {
    if (grid.empty()) throw config_error("sweep_threshold: empty grid");
    if (!std::is_sorted(grid.begin(), grid.end())) {
        throw config_error("sweep_threshold: grid must be sorted ascending");
    }

    SweepResult result;
    double best_f = -1.0;
    for (double g : grid) {
        Threshold thr;
        thr.global = g;
        EvalReport report = event_f_score(detect_events(curves, thr), truth, matching);
        report.threshold_used = thr;
        if (report.micro_f > best_f) {  // ties keep the lowest threshold
            best_f = report.micro_f;
            result.best = thr;
        }
        result.by_grid_point.push_back(std::move(report));
    }

    if (mode == SweepMode::per_keyword) {
        // Coordinate-wise pass: each keyword's threshold maximizes its own
        // event F-score with only that keyword's curves active.
        std::set<std::string> keywords;
        for (const auto& [file_id, keyword_curves] : curves) {
            for (const auto& [keyword, curve] : keyword_curves) keywords.insert(keyword);
        }
        Threshold per_kw;
        per_kw.global = result.best.global;
        for (const std::string& keyword : keywords) {
            CurvesByFile only;
            for (const auto& [file_id, keyword_curves] : curves) {
                auto it = keyword_curves.find(keyword);
                if (it != keyword_curves.end()) only[file_id][keyword] = it->second;
            }
            AnnotationSet only_truth;
            for (const auto& ev : truth.events) {
                if (ev.keyword == keyword) only_truth.events.push_back(ev);
            }
            double kw_best_f = -1.0;
            double kw_best_thr = grid.front();
            for (double g : grid) {
                Threshold thr;
                thr.global = g;
                EvalReport r = event_f_score(detect_events(only, thr), only_truth, matching);
                if (r.micro_f > kw_best_f) {
                    kw_best_f = r.micro_f;
                    kw_best_thr = g;
                }
            }
            per_kw.per_keyword[keyword] = kw_best_thr;
        }
        result.best = per_kw;
    }

    result.best_report = event_f_score(detect_events(curves, result.best), truth, matching);
    result.best_report.threshold_used = result.best;
    return result;
}

GapResult threshold_gap_analysis(const CurvesByFile& validation_curves,
                                 const AnnotationSet& validation_truth,
                                 const CurvesByFile& test_curves, const AnnotationSet& test_truth,
                                 const std::vector<double>& grid, const MatchingConfig& matching) {
    SweepResult val = sweep_threshold(validation_curves, validation_truth, grid, matching);
    SweepResult test = sweep_threshold(test_curves, test_truth, grid, matching);

    GapResult gap;
    gap.threshold_val = val.best.global;
    gap.threshold_test = test.best.global;
    gap.threshold_delta = gap.threshold_test - gap.threshold_val;
    gap.f_test_at_oracle = test.best_report.micro_f;

    Threshold estimated;
    estimated.global = val.best.global;
    gap.f_test_at_estimated =
        event_f_score(detect_events(test_curves, estimated), test_truth, matching).micro_f;
    gap.f_delta = gap.f_test_at_oracle - gap.f_test_at_estimated;
    return gap;
}

}  // namespace kws
