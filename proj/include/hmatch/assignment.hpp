#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hmatch/mat.hpp"

namespace hmatch {

// Rectangular matrix of finite matching costs; rows are predictions,
// columns are targets.
struct CostMatrix {
    Mat entries;

    CostMatrix() = default;
    CostMatrix(int rows, int cols) : entries(rows, cols) {}
    explicit CostMatrix(Mat m) : entries(std::move(m)) {}

    int rows() const { return entries.rows; }
    int cols() const { return entries.cols; }
    double& operator()(int r, int c) { return entries(r, c); }
    double operator()(int r, int c) const { return entries(r, c); }
};

// Injective row->column matching of size min(rows, cols). Pairs are listed
// in ascending row order and total_cost sums the selected entries in that
// order, so two solvers that pick the same pairs report bit-identical cost.
struct Assignment {
    std::vector<std::pair<int, int>> pairs;
    double total_cost = 0.0;
};

// Minimum-cost assignment via shortest augmenting paths (Jonker-Volgenant
// style), O(R*C*min(R,C)). Deterministic; rejects non-finite entries with
// InvalidCostError.
Assignment hungarian(const CostMatrix& c);

// Exhaustive oracle over all injections. Requires min(rows, cols) <= 8
// (OracleTooLargeError otherwise). optimal_count counts injections whose
// total exactly attains the minimum, so callers can restrict tie-sensitive
// property checks to unique-optimum instances.
struct BruteForceResult {
    Assignment best;
    std::int64_t optimal_count = 0;
};
BruteForceResult brute_force(const CostMatrix& c);

// Latency statistics for repeated solves of random matrices (seed-derived,
// deterministic). Used by the CLI bench subcommand.
struct BenchReport {
    int rows = 0;
    int cols = 0;
    int batches = 0;
    double min_ms = 0.0;
    double median_ms = 0.0;
    double p99_ms = 0.0;
    double solves_per_sec = 0.0;
};
BenchReport bench_matching(int rows, int cols, int batches, std::uint64_t seed);

// The matrix stream bench_matching solves; exposed so tests can pin its
// determinism.
CostMatrix bench_matrix(int rows, int cols, std::uint64_t seed, int index);

}  // namespace hmatch
