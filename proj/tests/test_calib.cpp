#include <doctest.h>

#include <cmath>
#include <random>

#include "kws/calib.hpp"
#include "kws/errors.hpp"
#include "test_util.hpp"

using namespace kws;
using testutil::make_sequence;
using testutil::random_unit_sequence;

namespace {

/// Bank with explicitly given unit-norm center rows.
CenterBank bank_from_rows(int n_kw, int n_pos, int n_c, int dim, std::vector<float> rows) {
    CenterBank bank;
    bank.n_keywords = n_kw;
    bank.n_positions = n_pos;
    bank.n_clusters = n_c;
    bank.centers = MatrixF(n_kw * n_pos * n_c, dim, std::move(rows));
    for (int k = 0; k < n_kw; ++k) bank.keyword_names.push_back("kw" + std::to_string(k));
    return bank;
}

CenterBank axes_bank() {  // centers (1,0) and (0,1)
    return bank_from_rows(1, 1, 2, 2, {1, 0, 0, 1});
}

CenterBank random_bank(int n_centers, int dim, unsigned seed) {
    EmbeddingSequence rows = random_unit_sequence(n_centers, dim, seed);
    return bank_from_rows(1, 1, n_centers, dim, rows.frames.data);
}

}  // namespace

TEST_SUITE("calib") {

TEST_CASE("nearest_center: picks the larger inner product") {
    CenterBank bank = axes_bank();
    std::vector<float> e{0.8f, 0.6f};
    NearestCenter nc = nearest_center(e, bank);
    CHECK(nc.index == 0);
    CHECK(nc.similarity == doctest::Approx(0.8));
}

TEST_CASE("nearest_center: a center matches itself with similarity 1") {
    CenterBank bank = random_bank(8, 16, 1);
    NearestCenter nc = nearest_center(bank.center(5), bank);
    CHECK(nc.index == 5);
    CHECK(nc.similarity == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("nearest_center: exact ties go to the lowest flat index") {
    CenterBank bank = axes_bank();
    const float inv_sqrt2 = 1.0f / std::sqrt(2.0f);
    std::vector<float> e{inv_sqrt2, inv_sqrt2};  // equidistant to both centers
    CHECK(nearest_center(e, bank).index == 0);
}

TEST_CASE("nearest_center: empty bank is a parameter error") {
    CenterBank bank;
    std::vector<float> e{1.0f};
    CHECK_THROWS_AS(nearest_center(e, bank), config_error);
}

TEST_CASE("kappa: sequences already on centers are fixed points") {
    CenterBank bank = random_bank(6, 8, 2);
    EmbeddingSequence seq;
    seq.hop_seconds = 0.016;
    seq.frames = MatrixF(3, 8);
    for (int t = 0; t < 3; ++t) {
        auto c = bank.center(2 * t);
        std::copy(c.begin(), c.end(), seq.frames.row(t).begin());
    }
    EmbeddingSequence out = kappa(seq, bank);
    CHECK(out.frames.data == seq.frames.data);
}

TEST_CASE("kappa: componentwise argmax on the axes bank") {
    CenterBank bank = axes_bank();
    EmbeddingSequence seq = make_sequence(2, 2, {0.6f, 0.8f, 0.8f, 0.6f});
    EmbeddingSequence out = kappa(seq, bank);
    CHECK(out.frames.row(0)[0] == 0.0f);
    CHECK(out.frames.row(0)[1] == 1.0f);
    CHECK(out.frames.row(1)[0] == 1.0f);
    CHECK(out.frames.row(1)[1] == 0.0f);
}

TEST_CASE("kappa: idempotent on tie-free banks (exact)") {
    CenterBank bank = random_bank(10, 12, 3);
    EmbeddingSequence seq = random_unit_sequence(20, 12, 4);
    EmbeddingSequence once = kappa(seq, bank);
    EmbeddingSequence twice = kappa(once, bank);
    CHECK(once.frames.data == twice.frames.data);  // bit-exact
}

TEST_CASE("nu: an exact center shrinks to half norm") {
    CenterBank bank = random_bank(4, 8, 5);
    EmbeddingSequence seq;
    seq.hop_seconds = 0.016;
    seq.frames = MatrixF(1, 8);
    auto c = bank.center(2);
    std::copy(c.begin(), c.end(), seq.frames.row(0).begin());

    EmbeddingSequence out = nu(seq, bank);
    CHECK(norm(out.frames.row(0)) == doctest::Approx(0.5).epsilon(1e-5));
    for (int d = 0; d < 8; ++d) {
        CHECK(out.frames.at(0, d) == doctest::Approx(c[d] / 2.0).epsilon(1e-4));
    }
}

TEST_CASE("nu: embeddings orthogonal to every center pass through") {
    CenterBank bank = bank_from_rows(1, 1, 2, 3, {1, 0, 0, 0, 1, 0});
    EmbeddingSequence seq = make_sequence(1, 3, {0, 0, 1});
    EmbeddingSequence out = nu(seq, bank);
    CHECK(out.frames.at(0, 2) == doctest::Approx(1.0));
    CHECK(norm(out.frames.row(0)) == doctest::Approx(1.0));
}

TEST_CASE("nu: norm is 1/(1+s_max), in [1/2, 1] for s_max in [0, 1]") {
    CenterBank bank = random_bank(16, 10, 6);
    EmbeddingSequence seq = random_unit_sequence(50, 10, 7);
    EmbeddingSequence out = nu(seq, bank);
    for (int t = 0; t < seq.length(); ++t) {
        const double s_max = nearest_center(seq.frames.row(t), bank).similarity;
        const double n = norm(out.frames.row(t));
        CHECK(n == doctest::Approx(1.0 / (1.0 + s_max)).epsilon(1e-5));
        if (s_max >= 0.0) {
            CHECK(n >= 0.5 - 1e-6);
            CHECK(n <= 1.0 + 1e-6);
        }
    }
}

TEST_CASE("nu: the epsilon floor caps the antipodal blow-up at 1e6") {
    CenterBank bank = bank_from_rows(1, 1, 1, 2, {1, 0});
    EmbeddingSequence seq = make_sequence(1, 2, {-1.0f, 0.0f});  // s_max = -1
    EmbeddingSequence out = nu(seq, bank);
    CHECK(norm(out.frames.row(0)) == doctest::Approx(1e6).epsilon(1e-3));
}

TEST_CASE("gamma: an exact center maps to 1.5 of itself") {
    CenterBank bank = axes_bank();
    EmbeddingSequence seq = make_sequence(1, 2, {1.0f, 0.0f});
    EmbeddingSequence out = gamma(seq, bank);
    CHECK(out.frames.at(0, 0) == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(out.frames.at(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("gamma: equals elementwise kappa + nu computed independently") {
    CenterBank bank = random_bank(12, 8, 8);
    EmbeddingSequence seq = random_unit_sequence(10, 8, 9);
    EmbeddingSequence g = gamma(seq, bank);
    EmbeddingSequence k = kappa(seq, bank);
    EmbeddingSequence n = nu(seq, bank);
    for (size_t i = 0; i < g.frames.data.size(); ++i) {
        CHECK(g.frames.data[i] ==
              doctest::Approx(k.frames.data[i] + n.frames.data[i]).epsilon(1e-6));
    }
}

TEST_CASE("gamma: score linearity <gamma(e),v> = <kappa(e),v> + <nu(e),v>") {
    CenterBank bank = random_bank(9, 16, 10);
    EmbeddingSequence seq = random_unit_sequence(25, 16, 11);
    EmbeddingSequence v = random_unit_sequence(1, 16, 12);
    EmbeddingSequence g = gamma(seq, bank);
    EmbeddingSequence k = kappa(seq, bank);
    EmbeddingSequence n = nu(seq, bank);
    for (int t = 0; t < seq.length(); ++t) {
        const double lhs = dot(g.frames.row(t), v.frames.row(0));
        const double rhs = dot(k.frames.row(t), v.frames.row(0)) +
                           dot(n.frames.row(t), v.frames.row(0));
        CHECK(std::abs(lhs - rhs) < 1e-6);
    }
}

TEST_CASE("apply_calibration: mode none is bit-exact identity, combined is gamma") {
    CenterBank bank = random_bank(5, 6, 13);
    EmbeddingSequence seq = random_unit_sequence(7, 6, 14);
    EmbeddingSequence none = apply_calibration(seq, bank, CalibrationMode::none);
    CHECK(none.frames.data == seq.frames.data);
    EmbeddingSequence combined = apply_calibration(seq, bank, CalibrationMode::combined);
    CHECK(combined.frames.data == gamma(seq, bank).frames.data);
}

TEST_CASE("apply_calibration: quantize and normalize differ off the centers") {
    CenterBank bank = random_bank(5, 6, 15);
    EmbeddingSequence seq = random_unit_sequence(7, 6, 16);
    EmbeddingSequence q = apply_calibration(seq, bank, CalibrationMode::quantize);
    EmbeddingSequence n = apply_calibration(seq, bank, CalibrationMode::normalize);
    CHECK(q.frames.data != n.frames.data);
}

TEST_CASE("calibration modes parse round-trip") {
    for (auto mode : {CalibrationMode::none, CalibrationMode::quantize,
                      CalibrationMode::normalize, CalibrationMode::combined}) {
        CHECK(parse_calibration_mode(to_string(mode)) == mode);
    }
    CHECK_THROWS_AS(parse_calibration_mode("bogus"), config_error);
}

TEST_CASE("combine_segments: hop == T concatenates") {
    SegmentLayout layout{4, 4};
    std::vector<EmbeddingSequence> segs{random_unit_sequence(4, 6, 20),
                                        random_unit_sequence(4, 6, 21)};
    EmbeddingSequence out = combine_segments(segs, layout, 8);
    REQUIRE(out.length() == 8);
    for (int t = 0; t < 4; ++t) {
        for (int d = 0; d < 6; ++d) {
            CHECK(out.frames.at(t, d) == doctest::Approx(segs[0].frames.at(t, d)).epsilon(1e-5));
            CHECK(out.frames.at(4 + t, d) ==
                  doctest::Approx(segs[1].frames.at(t, d)).epsilon(1e-5));
        }
    }
}

TEST_CASE("combine_segments: identical overlapping rows are exact (no smearing)") {
    EmbeddingSequence seg = random_unit_sequence(5, 4, 22);
    std::vector<EmbeddingSequence> segs{seg, seg};
    SegmentLayout overlap{5, 5};
    EmbeddingSequence out = combine_segments(segs, overlap, 10);
    for (int t = 0; t < 5; ++t) {
        for (int d = 0; d < 4; ++d) {
            CHECK(out.frames.at(t, d) == doctest::Approx(seg.frames.at(t, d)).epsilon(1e-5));
            CHECK(out.frames.at(5 + t, d) == doctest::Approx(seg.frames.at(t, d)).epsilon(1e-5));
        }
    }
}

TEST_CASE("combine_segments: overlapping frame is the normalized mean of its covers") {
    // T=4, hop=2, two segments: absolute frame 2 (the spec's 1-based frame 3)
    // averages segment-0 row 2 with segment-1 row 0.
    SegmentLayout layout{4, 2};
    EmbeddingSequence a = random_unit_sequence(4, 5, 23);
    EmbeddingSequence b = random_unit_sequence(4, 5, 24);
    EmbeddingSequence out = combine_segments({a, b}, layout, 6);

    std::vector<double> mean(5);
    double n2 = 0.0;
    for (int d = 0; d < 5; ++d) {
        mean[d] = 0.5 * (a.frames.at(2, d) + b.frames.at(0, d));
        n2 += mean[d] * mean[d];
    }
    for (int d = 0; d < 5; ++d) {
        CHECK(out.frames.at(2, d) == doctest::Approx(mean[d] / std::sqrt(n2)).epsilon(1e-5));
    }
}

TEST_CASE("combine_segments: uncovered frames are a coverage error") {
    SegmentLayout layout{2, 2};
    std::vector<EmbeddingSequence> segs{random_unit_sequence(2, 3, 25)};
    CHECK_THROWS_AS(combine_segments(segs, layout, 5), config_error);
}

TEST_CASE("cossim_sets: rows on cell centers score 1, orthogonal rows 0") {
    CenterBank bank = bank_from_rows(1, 1, 2, 3, {1, 0, 0, 0, 1, 0});
    EmbeddingSequence on = make_sequence(2, 3, {1, 0, 0, 0, 1, 0});
    CHECK(cossim_sets(on, bank, 0, 2) == doctest::Approx(1.0).epsilon(1e-6));

    EmbeddingSequence ortho = make_sequence(1, 3, {0, 0, 1});
    CHECK(cossim_sets(ortho, bank, 0, 2) == doctest::Approx(0.0));
}

TEST_CASE("cossim_sets: mean over per-row best similarities") {
    CenterBank bank = bank_from_rows(1, 1, 1, 2, {1, 0});
    // Rows with best similarities 1.0, 0.5, 0.0.
    const float s32 = std::sqrt(3.0f) / 2.0f;
    EmbeddingSequence seq = make_sequence(3, 2, {1, 0, 0.5f, s32, 0, 1});
    CHECK(cossim_sets(seq, bank, 0, 1) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("cossim_sets: empty cell is a parameter error") {
    CenterBank bank = axes_bank();
    EmbeddingSequence seq = make_sequence(1, 2, {1, 0});
    CHECK_THROWS_AS(cossim_sets(seq, bank, 1, 1), config_error);
}

TEST_CASE("quantization contracts the score variance of noisy embeddings") {
    // Well-separated centers, embeddings = normalize(c + sigma * noise) with
    // a unit-norm noise direction: the score against c after kappa varies no
    // more than the raw score.
    CenterBank bank = random_bank(8, 64, 30);
    std::mt19937 rng(31);
    std::normal_distribution<double> normal;
    for (double sigma : {0.1, 0.2, 0.3}) {
        std::vector<double> raw_scores, quant_scores;
        auto c = bank.center(3);
        for (int trial = 0; trial < 200; ++trial) {
            EmbeddingSequence e;
            e.hop_seconds = 0.016;
            e.frames = MatrixF(1, 64);
            std::vector<double> g(64);
            double g2 = 0.0;
            for (auto& v : g) {
                v = normal(rng);
                g2 += v * v;
            }
            double n2 = 0.0;
            std::vector<double> v(64);
            for (int d = 0; d < 64; ++d) {
                v[d] = c[d] + sigma * g[d] / std::sqrt(g2);
                n2 += v[d] * v[d];
            }
            for (int d = 0; d < 64; ++d) {
                e.frames.at(0, d) = static_cast<float>(v[d] / std::sqrt(n2));
            }
            raw_scores.push_back(dot(e.frames.row(0), c));
            EmbeddingSequence q = kappa(e, bank);
            quant_scores.push_back(dot(q.frames.row(0), c));
        }
        auto variance = [](const std::vector<double>& xs) {
            double mean = 0.0;
            for (double x : xs) mean += x;
            mean /= xs.size();
            double var = 0.0;
            for (double x : xs) var += (x - mean) * (x - mean);
            return var / xs.size();
        };
        CHECK(variance(quant_scores) <= variance(raw_scores));
    }
}

}  // TEST_SUITE
