#pragma once

// Brute-force reference for subsequence DTW, independent of the DP in
// src/dtw.cpp: enumerates every admissible step-constrained path from query
// row 0 (any start column) to the last query row and keeps, per end column,
// the minimum path-length-normalized cost. Only usable for small matrices.

#include <limits>
#include <vector>

#include "kws/dtw.hpp"

namespace kws::testoracle {

struct OracleMatch {
    bool reachable = false;
    double normalized_cost = std::numeric_limits<double>::infinity();
    int length = 0;
    int onset = -1;
    std::vector<int> reverse_step_ranks;  // step indices, end of path first
};

inline std::vector<OracleMatch> brute_force_sdtw(const CostMatrix& cost, const StepSizes& steps) {
    std::vector<OracleMatch> best(cost.test_len);

    struct Frame {
        int i, j;
        double acc;
        std::vector<int> step_ranks;  // in path order
    };

    // Candidate comparison mirrors the DP tie-break: lower normalized cost,
    // then shorter path, then step preference read from the path end.
    auto better = [](const OracleMatch& a, const OracleMatch& b) {
        if (!b.reachable) return true;
        if (a.normalized_cost != b.normalized_cost) return a.normalized_cost < b.normalized_cost;
        if (a.length != b.length) return a.length < b.length;
        return a.reverse_step_ranks < b.reverse_step_ranks;
    };

    std::vector<Frame> stack;
    for (int j0 = 0; j0 < cost.test_len; ++j0) {
        stack.push_back({0, j0, cost.at(0, j0), {}});
        while (!stack.empty()) {
            Frame frame = std::move(stack.back());
            stack.pop_back();

            if (frame.i == cost.query_len - 1) {
                OracleMatch candidate;
                candidate.reachable = true;
                candidate.length = static_cast<int>(frame.step_ranks.size()) + 1;
                candidate.normalized_cost = frame.acc / candidate.length;
                candidate.onset = j0;
                candidate.reverse_step_ranks.assign(frame.step_ranks.rbegin(),
                                                    frame.step_ranks.rend());
                if (better(candidate, best[frame.j])) best[frame.j] = candidate;
                continue;
            }
            for (size_t s = 0; s < steps.steps.size(); ++s) {
                const auto [dq, dt] = steps.steps[s];
                const int ni = frame.i + dq, nj = frame.j + dt;
                if (ni >= cost.query_len || nj >= cost.test_len) continue;
                Frame next = frame;
                next.i = ni;
                next.j = nj;
                next.acc = frame.acc + cost.at(ni, nj);
                next.step_ranks.push_back(static_cast<int>(s));
                stack.push_back(std::move(next));
            }
        }
    }
    return best;
}

}  // namespace kws::testoracle
