#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kws/types.hpp"

namespace kws {

/// Parameters of the synthetic embedding world used for end-to-end testing
/// without a trained embedding model.
struct ToyWorldConfig {
    int n_keywords = 3;
    int n_positions = 4;
    int n_clusters = 2;
    int dim = 32;
    int frames_per_keyword = 12;
    double noise_sigma = 0.0;
    uint64_t seed = 0;
    double hop_seconds = 0.016;

    void validate() const;
};

/// Samples n_kw * n_pos * n_c unit centers with pairwise inner product below
/// 0.8 (rejection sampling; fails on infeasible packings). Deterministic for
/// a given seed. Keyword names are "kw00", "kw01", ...
CenterBank make_center_bank(const ToyWorldConfig& cfg);

struct PlantedKeyword {
    int keyword = 0;     // index into bank.keyword_names
    int start_frame = 0; // span covers [start, start + frames_per_keyword)
};

/// Builds a recording of `total_frames` random unit background frames with
/// keyword signatures planted per the script: each span walks the keyword's
/// positional centers in order (one cluster per occurrence) plus Gaussian
/// noise of scale noise_sigma, row-normalized. noise_sigma == 0 reproduces
/// the centers bit-exactly. Returns the sequence and frame-accurate truth.
std::pair<EmbeddingSequence, AnnotationSet> make_recording(const ToyWorldConfig& cfg,
                                                           const CenterBank& bank,
                                                           const std::vector<PlantedKeyword>& script,
                                                           int total_frames,
                                                           const std::string& file_id,
                                                           uint64_t seed);

/// How much material make_toy_world generates per split.
struct ToyWorldLayout {
    int shots_per_keyword = 3;
    int recordings_per_split = 6;
    int plants_per_recording = 2;
    int frames_per_recording = 120;
};

struct ToyWorld {
    CenterBank bank;
    std::map<std::string, std::vector<EmbeddingSequence>> queries;  // keyword -> shots
    std::map<std::string, EmbeddingSequence> validation;            // file id -> sequence
    AnnotationSet validation_truth;
    std::map<std::string, EmbeddingSequence> test;
    AnnotationSet test_truth;
};

/// Complete synthetic dataset: per-keyword query templates plus annotated
/// validation and test splits with independently drawn noise and scripts.
ToyWorld make_toy_world(const ToyWorldConfig& cfg, const ToyWorldLayout& layout = {});

}  // namespace kws
