#include "kws/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "kws/errors.hpp"
#include "kws/rng.hpp"

namespace kws {

namespace {

void sample_unit_vector(GaussianRng& rng, std::span<float> out) {
    double n2 = 0.0;
    std::vector<double> raw(out.size());
    do {
        n2 = 0.0;
        for (auto& v : raw) {
            v = rng.gaussian();
            n2 += v * v;
        }
    } while (n2 < 1e-12);
    const double inv = 1.0 / std::sqrt(n2);
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(raw[i] * inv);
}

std::string keyword_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "kw%02d", index);
    return buf;
}

}  // namespace

void ToyWorldConfig::validate() const {
    if (n_keywords < 1 || n_positions < 1 || n_clusters < 1 || dim < 1 ||
        frames_per_keyword < 1) {
        throw config_error("toy world: all counts must be positive");
    }
    if (noise_sigma < 0.0) throw config_error("toy world: noise_sigma must be >= 0");
    if (hop_seconds <= 0.0) throw config_error("toy world: hop_seconds must be > 0");
}

CenterBank make_center_bank(const ToyWorldConfig& cfg) {
    cfg.validate();
    const int total = cfg.n_keywords * cfg.n_positions * cfg.n_clusters;

    CenterBank bank;
    bank.n_keywords = cfg.n_keywords;
    bank.n_positions = cfg.n_positions;
    bank.n_clusters = cfg.n_clusters;
    bank.centers = MatrixF(total, cfg.dim);
    for (int k = 0; k < cfg.n_keywords; ++k) bank.keyword_names.push_back(keyword_name(k));

    GaussianRng rng(splitmix64(cfg.seed ^ 0xBA11C0DEULL));
    std::vector<float> candidate(cfg.dim);
    constexpr int kMaxAttemptsPerCenter = 1000;
    for (int i = 0; i < total; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < kMaxAttemptsPerCenter && !placed; ++attempt) {
            sample_unit_vector(rng, candidate);
            placed = true;
            for (int j = 0; j < i; ++j) {
                if (dot(candidate, bank.centers.row(j)) >= 0.8) {
                    placed = false;
                    break;
                }
            }
        }
        if (!placed) {
            throw config_error("make_center_bank: could not place " + std::to_string(total) +
                               " centers with pairwise similarity < 0.8 in dimension " +
                               std::to_string(cfg.dim));
        }
        std::copy(candidate.begin(), candidate.end(), bank.centers.row(i).begin());
    }
    return bank;
}

std::pair<EmbeddingSequence, AnnotationSet> make_recording(const ToyWorldConfig& cfg,
                                                           const CenterBank& bank,
                                                           const std::vector<PlantedKeyword>& script,
                                                           int total_frames,
                                                           const std::string& file_id,
                                                           uint64_t seed) {
    cfg.validate();
    if (total_frames < 1) throw config_error("make_recording: total_frames must be >= 1");
    const int span = cfg.frames_per_keyword;

    // Overlapping plants would make the frame-accurate truth ambiguous.
    std::vector<std::pair<int, int>> occupied;
    for (const auto& plant : script) {
        if (plant.keyword < 0 || plant.keyword >= bank.n_keywords) {
            throw config_error("make_recording: keyword index out of range");
        }
        if (plant.start_frame < 0 || plant.start_frame + span > total_frames) {
            throw config_error("make_recording: planted span leaves the recording");
        }
        for (auto [s, e] : occupied) {
            if (plant.start_frame < e && s < plant.start_frame + span) {
                throw config_error("make_recording: overlapping planted spans");
            }
        }
        occupied.push_back({plant.start_frame, plant.start_frame + span});
    }

    GaussianRng rng(seed);
    EmbeddingSequence seq;
    seq.hop_seconds = cfg.hop_seconds;
    seq.frames = MatrixF(total_frames, cfg.dim);
    for (int t = 0; t < total_frames; ++t) {
        sample_unit_vector(rng, seq.frames.row(t));
    }

    AnnotationSet truth;
    for (const auto& plant : script) {
        const int cluster = static_cast<int>(rng.next_u64() % cfg.n_clusters);
        for (int f = 0; f < span; ++f) {
            const int position = f * bank.n_positions / span;
            const int center_idx = bank.cell_start(plant.keyword, position) + cluster;
            auto center = bank.center(center_idx);
            auto row = seq.frames.row(plant.start_frame + f);
            if (cfg.noise_sigma == 0.0) {
                std::copy(center.begin(), center.end(), row.begin());
            } else {
                double n2 = 0.0;
                for (int d = 0; d < cfg.dim; ++d) {
                    const double v = center[d] + cfg.noise_sigma * rng.gaussian();
                    row[d] = static_cast<float>(v);
                    n2 += v * v;
                }
                const double inv = 1.0 / std::sqrt(n2);
                for (float& v : row) v = static_cast<float>(v * inv);
            }
        }
        truth.events.push_back({file_id, bank.keyword_names[plant.keyword],
                                plant.start_frame * cfg.hop_seconds,
                                (plant.start_frame + span) * cfg.hop_seconds});
    }
    return {std::move(seq), std::move(truth)};
}

namespace {

std::vector<PlantedKeyword> random_script(const ToyWorldConfig& cfg, const ToyWorldLayout& layout,
                                          GaussianRng& rng) {
    std::vector<PlantedKeyword> script;
    const int span = cfg.frames_per_keyword;
    constexpr int kMaxAttempts = 1000;
    for (int p = 0; p < layout.plants_per_recording; ++p) {
        PlantedKeyword plant;
        plant.keyword = static_cast<int>(rng.next_u64() % cfg.n_keywords);
        bool placed = false;
        for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
            plant.start_frame =
                static_cast<int>(rng.next_u64() % (layout.frames_per_recording - span + 1));
            placed = true;
            for (const auto& other : script) {
                if (plant.start_frame < other.start_frame + span &&
                    other.start_frame < plant.start_frame + span) {
                    placed = false;
                    break;
                }
            }
        }
        if (!placed) {
            throw config_error("make_toy_world: recording too short for requested plants");
        }
        script.push_back(plant);
    }
    std::sort(script.begin(), script.end(),
              [](const PlantedKeyword& a, const PlantedKeyword& b) {
                  return a.start_frame < b.start_frame;
              });
    return script;
}

}  // namespace

ToyWorld make_toy_world(const ToyWorldConfig& cfg, const ToyWorldLayout& layout) {
    cfg.validate();
    if (layout.shots_per_keyword < 1 || layout.recordings_per_split < 1 ||
        layout.plants_per_recording < 0 ||
        layout.frames_per_recording < cfg.frames_per_keyword) {
        throw config_error("make_toy_world: bad layout");
    }

    ToyWorld world;
    world.bank = make_center_bank(cfg);

    // Queries are single planted spans with no background.
    for (int k = 0; k < cfg.n_keywords; ++k) {
        const std::string name = world.bank.keyword_names[k];
        for (int s = 0; s < layout.shots_per_keyword; ++s) {
            auto [seq, truth] = make_recording(
                cfg, world.bank, {{k, 0}}, cfg.frames_per_keyword,
                name + "_shot" + std::to_string(s),
                splitmix64(cfg.seed ^ (0x51D5ULL + static_cast<uint64_t>(k) * 131 + s)));
            seq.label = name;
            world.queries[name].push_back(std::move(seq));
        }
    }

    auto build_split = [&](const char* prefix, uint64_t salt,
                           std::map<std::string, EmbeddingSequence>& split, AnnotationSet& truth) {
        for (int r = 0; r < layout.recordings_per_split; ++r) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%s_%03d", prefix, r);
            const uint64_t rec_seed = splitmix64(cfg.seed ^ (salt + static_cast<uint64_t>(r) * 9973));
            GaussianRng script_rng(splitmix64(rec_seed ^ 0x5C21B7ULL));
            auto script = random_script(cfg, layout, script_rng);
            auto [seq, rec_truth] =
                make_recording(cfg, world.bank, script, layout.frames_per_recording, buf, rec_seed);
            split[buf] = std::move(seq);
            truth.events.insert(truth.events.end(), rec_truth.events.begin(),
                                rec_truth.events.end());
        }
    };
    build_split("val", 0xA11DA7AULL, world.validation, world.validation_truth);
    build_split("test", 0x7E57DA7AULL, world.test, world.test_truth);
    return world;
}

}  // namespace kws
