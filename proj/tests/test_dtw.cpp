#include <doctest.h>

#include <cmath>
#include <random>

#include "dtw_oracle.hpp"
#include "kws/dtw.hpp"
#include "kws/errors.hpp"
#include "test_util.hpp"

using namespace kws;
using testutil::make_sequence;
using testutil::random_unit_sequence;

namespace {

CostMatrix random_cost(int q, int t, unsigned seed, double max_cost = 2.0) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, max_cost);
    std::vector<double> values(static_cast<size_t>(q) * t);
    for (auto& v : values) v = dist(rng);
    return CostMatrix(q, t, std::move(values));
}

void check_against_oracle(const CostMatrix& cost, const StepSizes& steps) {
    WarpResult dp = subsequence_dtw(cost, steps);
    auto oracle = testoracle::brute_force_sdtw(cost, steps);

    std::vector<const DtwMatch*> by_column(cost.test_len, nullptr);
    for (const auto& m : dp.matches) by_column[m.offset_frame] = &m;

    for (int j = 0; j < cost.test_len; ++j) {
        REQUIRE(oracle[j].reachable == (by_column[j] != nullptr));
        if (!oracle[j].reachable) continue;
        CHECK(std::abs(by_column[j]->normalized_cost - oracle[j].normalized_cost) < 1e-9);
        CHECK(by_column[j]->onset_frame == oracle[j].onset);
    }
}

}  // namespace

TEST_SUITE("dtw") {

TEST_CASE("cost_matrix: identical, antipodal and orthogonal unit rows") {
    EmbeddingSequence q = make_sequence(3, 2, {1, 0, -1, 0, 0, 1});
    EmbeddingSequence t = make_sequence(1, 2, {1, 0});
    CostMatrix cost = cost_matrix(q, t);
    CHECK(cost.at(0, 0) == doctest::Approx(0.0));  // equal rows
    CHECK(cost.at(1, 0) == doctest::Approx(2.0));  // antipodal
    CHECK(cost.at(2, 0) == doctest::Approx(1.0));  // orthogonal
}

TEST_CASE("cost_matrix: dimension mismatch is an error") {
    EmbeddingSequence q = make_sequence(1, 2, {1, 0});
    EmbeddingSequence t = make_sequence(1, 3, {1, 0, 0});
    CHECK_THROWS_AS(cost_matrix(q, t), config_error);
}

TEST_CASE("cost_matrix: clamps tiny negative costs, rejects big ones for unit inputs") {
    EmbeddingSequence q = make_sequence(1, 2, {1.0f, 0.0f});
    EmbeddingSequence t = q;
    CHECK(cost_matrix(q, t).at(0, 0) >= 0.0);

    // Rows scaled to 1.1 norm look non-unit: negative cost is then legal.
    EmbeddingSequence big = make_sequence(1, 2, {1.1f, 0.0f});
    CostMatrix wide = cost_matrix(big, big);
    CHECK(wide.at(0, 0) == doctest::Approx(1.0 - 1.21));
    CHECK(wide.bound == doctest::Approx(1.21));
}

TEST_CASE("subsequence_dtw: zero-cost diagonal slice is found exactly") {
    // Query equals test[2..4]; everything else costs >= 0.5.
    const int q_len = 3, t_len = 8;
    std::vector<double> values(q_len * t_len, 0.9);
    for (int i = 0; i < q_len; ++i) values[i * t_len + (2 + i)] = 0.0;
    CostMatrix cost(q_len, t_len, std::move(values));

    WarpResult result = subsequence_dtw(cost);
    const DtwMatch* at4 = nullptr;
    for (const auto& m : result.matches) {
        if (m.offset_frame == 4) at4 = &m;
    }
    REQUIRE(at4 != nullptr);
    CHECK(at4->normalized_cost == doctest::Approx(0.0));
    CHECK(at4->onset_frame == 2);
    REQUIRE(at4->path.size() == 3);
    CHECK(at4->path[0] == PathPoint{0, 2});
    CHECK(at4->path[1] == PathPoint{1, 3});
    CHECK(at4->path[2] == PathPoint{2, 4});
}

TEST_CASE("subsequence_dtw: matches brute-force enumeration on random matrices") {
    StepSizes steps;
    for (unsigned seed = 0; seed < 40; ++seed) {
        check_against_oracle(random_cost(3, 5, 1000 + seed), steps);
        check_against_oracle(random_cost(4, 8, 2000 + seed), steps);
        check_against_oracle(random_cost(2, 6, 3000 + seed), steps);
        check_against_oracle(random_cost(1, 4, 4000 + seed), steps);
    }
}

TEST_CASE("subsequence_dtw: oracle agreement holds for other step sets") {
    StepSizes symmetric{{{1, 1}, {2, 1}, {1, 2}}};
    StepSizes diagonal_only{{{1, 1}}};
    StepSizes skippy{{{2, 1}, {1, 1}, {1, 3}}};
    for (unsigned seed = 0; seed < 10; ++seed) {
        check_against_oracle(random_cost(4, 7, 5000 + seed), symmetric);
        check_against_oracle(random_cost(3, 6, 6000 + seed), diagonal_only);
        check_against_oracle(random_cost(4, 8, 7000 + seed), skippy);
    }
}

TEST_CASE("subsequence_dtw: step set {(1,1)} with square matrix has one end column") {
    CostMatrix cost = random_cost(4, 4, 11);
    WarpResult result = subsequence_dtw(cost, StepSizes{{{1, 1}}});
    REQUIRE(result.matches.size() == 1);
    const DtwMatch& m = result.matches[0];
    CHECK(m.offset_frame == 3);
    CHECK(m.onset_frame == 0);
    double diag = (cost.at(0, 0) + cost.at(1, 1) + cost.at(2, 2) + cost.at(3, 3)) / 4.0;
    CHECK(m.normalized_cost == doctest::Approx(diag));
}

TEST_CASE("subsequence_dtw: test shorter than the minimal footprint is an error") {
    // A 5-row query needs at least 3 test columns under (2,1).
    CHECK_THROWS_AS(subsequence_dtw(random_cost(5, 2, 12)), degenerate_input_error);
    CHECK_NOTHROW(subsequence_dtw(random_cost(5, 3, 12)));
}

TEST_CASE("subsequence_dtw: deterministic including paths") {
    CostMatrix cost = random_cost(4, 9, 13);
    WarpResult a = subsequence_dtw(cost);
    WarpResult b = subsequence_dtw(cost);
    REQUIRE(a.matches.size() == b.matches.size());
    for (size_t i = 0; i < a.matches.size(); ++i) {
        CHECK(a.matches[i].normalized_cost == b.matches[i].normalized_cost);
        CHECK(a.matches[i].onset_frame == b.matches[i].onset_frame);
        CHECK(a.matches[i].path == b.matches[i].path);
    }
}

TEST_CASE("subsequence_dtw: prepending cost-2 columns shifts onsets, not interior costs") {
    const int q_len = 3, t_len = 8, k = 3;
    CostMatrix original = random_cost(q_len, t_len, 14, 1.9);
    CostMatrix shifted(q_len, t_len + k,
                       std::vector<double>(static_cast<size_t>(q_len) * (t_len + k), 2.0));
    for (int i = 0; i < q_len; ++i) {
        for (int j = 0; j < t_len; ++j) shifted.at(i, j + k) = original.at(i, j);
    }

    WarpResult base = subsequence_dtw(original);
    WarpResult moved = subsequence_dtw(shifted);
    std::vector<const DtwMatch*> base_by_col(t_len, nullptr), moved_by_col(t_len + k, nullptr);
    for (const auto& m : base.matches) base_by_col[m.offset_frame] = &m;
    for (const auto& m : moved.matches) moved_by_col[m.offset_frame] = &m;

    // Columns far enough from the seam cannot reach back into the padding:
    // the query spans at most 2*(q_len-1) test frames.
    for (int j = 2 * (q_len - 1); j < t_len; ++j) {
        REQUIRE(base_by_col[j] != nullptr);
        REQUIRE(moved_by_col[j + k] != nullptr);
        CHECK(moved_by_col[j + k]->normalized_cost ==
              doctest::Approx(base_by_col[j]->normalized_cost).epsilon(1e-12));
        CHECK(moved_by_col[j + k]->onset_frame == base_by_col[j]->onset_frame + k);
    }
}

TEST_CASE("score_curve: zero-cost diagonal gives score 1 at the slice end") {
    const int q_len = 2, t_len = 5;
    std::vector<double> values(q_len * t_len, 1.2);
    values[0 * t_len + 1] = 0.0;
    values[1 * t_len + 2] = 0.0;
    CostMatrix cost(q_len, t_len, std::move(values));
    auto scores = score_curve(subsequence_dtw(cost), t_len);
    CHECK(scores[2] == doctest::Approx(1.0));
    CHECK(scores[0] == -std::numeric_limits<double>::infinity());  // unreachable
}

TEST_CASE("score_curve: all-cost-2 matrix scores -1 everywhere reachable") {
    CostMatrix cost(2, 4, std::vector<double>(8, 2.0));
    auto scores = score_curve(subsequence_dtw(cost), 4);
    for (int j = 1; j < 4; ++j) CHECK(scores[j] == doctest::Approx(-1.0));
}

TEST_CASE("score_curve: lowering one cell never lowers any score") {
    std::mt19937 rng(15);
    for (int trial = 0; trial < 30; ++trial) {
        CostMatrix cost = random_cost(3, 6, 8000 + trial);
        auto before = score_curve(subsequence_dtw(cost), 6);

        CostMatrix tweaked = cost;
        int cell = static_cast<int>(rng() % tweaked.values.size());
        tweaked.values[cell] *= 0.5;
        auto after = score_curve(subsequence_dtw(tweaked), 6);

        for (int j = 0; j < 6; ++j) {
            if (std::isinf(before[j])) continue;
            CHECK(after[j] >= before[j] - 1e-12);
        }
    }
}

TEST_CASE("multi_sample_scores: one query reduces to its own score curve") {
    EmbeddingSequence query = random_unit_sequence(4, 8, 30);
    EmbeddingSequence test = random_unit_sequence(20, 8, 31);
    ScoreCurve curve = multi_sample_scores({query}, test);
    auto scores = score_curve(subsequence_dtw(cost_matrix(query, test)), test.length());
    REQUIRE(curve.length() == 20);
    for (int j = 0; j < 20; ++j) {
        if (std::isinf(scores[j])) {
            CHECK(curve.onset_frame[j] == -1);
        } else {
            CHECK(curve.score[j] == doctest::Approx(scores[j]));
            CHECK(curve.query_frames[j] == 4);
        }
    }
}

TEST_CASE("multi_sample_scores: duplicate queries change nothing under max") {
    EmbeddingSequence query = random_unit_sequence(4, 8, 32);
    EmbeddingSequence test = random_unit_sequence(15, 8, 33);
    ScoreCurve one = multi_sample_scores({query}, test);
    ScoreCurve two = multi_sample_scores({query, query}, test);
    CHECK(one.score == two.score);
    CHECK(one.onset_frame == two.onset_frame);
}

TEST_CASE("multi_sample_scores: two queries matching different regions give two peaks") {
    // Plant query A at frames 3..6 and query B at frames 10..13 of the test.
    EmbeddingSequence a = random_unit_sequence(4, 16, 34);
    EmbeddingSequence b = random_unit_sequence(4, 16, 35);
    EmbeddingSequence test = random_unit_sequence(18, 16, 36);
    for (int i = 0; i < 4; ++i) {
        std::copy(a.frames.row(i).begin(), a.frames.row(i).end(), test.frames.row(3 + i).begin());
        std::copy(b.frames.row(i).begin(), b.frames.row(i).end(), test.frames.row(10 + i).begin());
    }
    ScoreCurve curve = multi_sample_scores({a, b}, test);
    CHECK(curve.score[6] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(curve.score[13] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(curve.onset_frame[6] == 3);
    CHECK(curve.onset_frame[13] == 10);
    // Background columns stay clearly below the planted peaks.
    int strong = 0;
    for (int j = 0; j < 18; ++j) {
        if (std::isfinite(curve.score[j]) && curve.score[j] > 0.98) ++strong;
    }
    CHECK(strong == 2);
}

TEST_CASE("multi_sample_scores: empty query list is a parameter error") {
    EmbeddingSequence test = random_unit_sequence(10, 4, 37);
    CHECK_THROWS_AS(multi_sample_scores({}, test), config_error);
}

TEST_CASE("multi_sample_scores: mean aggregation averages reachable scores") {
    EmbeddingSequence q1 = random_unit_sequence(3, 6, 38);
    EmbeddingSequence q2 = random_unit_sequence(3, 6, 39);
    EmbeddingSequence test = random_unit_sequence(12, 6, 40);
    ScoreCurve max_curve = multi_sample_scores({q1, q2}, test, {}, CurveAggregation::max);
    ScoreCurve mean_curve = multi_sample_scores({q1, q2}, test, {}, CurveAggregation::mean);
    auto s1 = score_curve(subsequence_dtw(cost_matrix(q1, test)), 12);
    auto s2 = score_curve(subsequence_dtw(cost_matrix(q2, test)), 12);
    for (int j = 0; j < 12; ++j) {
        if (std::isfinite(s1[j]) && std::isfinite(s2[j])) {
            CHECK(mean_curve.score[j] == doctest::Approx(0.5 * (s1[j] + s2[j])));
            CHECK(max_curve.score[j] == doctest::Approx(std::max(s1[j], s2[j])));
        }
    }
}

TEST_CASE("step sizes: validation rejects empty and non-positive sets") {
    CHECK_THROWS_AS(StepSizes{{}}.validate(), config_error);
    CHECK_THROWS_AS((StepSizes{{{0, 1}}}).validate(), config_error);
    CHECK_NOTHROW(StepSizes{}.validate());
}

}  // TEST_SUITE
