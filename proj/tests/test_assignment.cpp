#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"

#include "hmatch/assignment.hpp"
#include "hmatch/errors.hpp"
#include "hmatch/rng.hpp"

using namespace hmatch;

namespace {

CostMatrix random_matrix(Rng& rng, int rows, int cols) {
    CostMatrix c(rows, cols);
    for (double& v : c.entries.a) v = rng.uniform();
    return c;
}

void check_invariants(const CostMatrix& c, const Assignment& a) {
    CHECK(static_cast<int>(a.pairs.size()) == std::min(c.rows(), c.cols()));
    std::set<int> rows, cols;
    double sum = 0.0;
    for (const auto& [r, col] : a.pairs) {
        CHECK(r >= 0);
        CHECK(r < c.rows());
        CHECK(col >= 0);
        CHECK(col < c.cols());
        rows.insert(r);
        cols.insert(col);
        sum += c(r, col);
    }
    CHECK(rows.size() == a.pairs.size());
    CHECK(cols.size() == a.pairs.size());
    CHECK(std::abs(sum - a.total_cost) <= 1e-12);
    CHECK(std::is_sorted(a.pairs.begin(), a.pairs.end()));
}

}  // namespace

TEST_CASE("hungarian picks the zero diagonal") {
    CostMatrix c(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) c(i, j) = i == j ? 0.0 : 1.0;
    const Assignment a = hungarian(c);
    CHECK(a.total_cost == 0.0);
    REQUIRE(a.pairs.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(a.pairs[i].first == i);
        CHECK(a.pairs[i].second == i);
    }
}

TEST_CASE("hungarian two by two hand case") {
    CostMatrix c(2, 2);
    c(0, 0) = 1.0;
    c(0, 1) = 2.0;
    c(1, 0) = 2.0;
    c(1, 1) = 1.0;
    const Assignment a = hungarian(c);
    CHECK(a.total_cost == 2.0);
    REQUIRE(a.pairs.size() == 2);
    CHECK(a.pairs[0] == std::pair<int, int>{0, 0});
    CHECK(a.pairs[1] == std::pair<int, int>{1, 1});
}

TEST_CASE("brute_force hand cases") {
    CostMatrix one(1, 1);
    one(0, 0) = 5.0;
    const BruteForceResult r1 = brute_force(one);
    CHECK(r1.best.total_cost == 5.0);
    REQUIRE(r1.best.pairs.size() == 1);
    CHECK(r1.best.pairs[0] == std::pair<int, int>{0, 0});
    CHECK(r1.optimal_count == 1);

    CostMatrix wide(2, 3);
    const double rows[2][3] = {{1, 9, 9}, {9, 1, 9}};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) wide(i, j) = rows[i][j];
    const BruteForceResult r2 = brute_force(wide);
    CHECK(r2.best.total_cost == 2.0);
    REQUIRE(r2.best.pairs.size() == 2);
    CHECK(r2.best.pairs[0] == std::pair<int, int>{0, 0});
    CHECK(r2.best.pairs[1] == std::pair<int, int>{1, 1});
}

TEST_CASE("hungarian equals brute force on random rectangular matrices") {
    Rng rng(101);
    for (int trial = 0; trial < 300; ++trial) {
        const int rows = rng.uniform_int(1, 9);
        int cols = rng.uniform_int(1, 9);
        if (std::min(rows, cols) > 7) cols = 7;
        const CostMatrix c = random_matrix(rng, rows, cols);
        const Assignment h = hungarian(c);
        const BruteForceResult b = brute_force(c);
        CHECK(h.total_cost == b.best.total_cost);
        check_invariants(c, h);
        check_invariants(c, b.best);
        if (b.optimal_count == 1) CHECK(h.pairs == b.best.pairs);
    }
}

TEST_CASE("positive scaling keeps the selected pairs") {
    Rng rng(211);
    int tested = 0;
    while (tested < 50) {
        const CostMatrix c = random_matrix(rng, rng.uniform_int(2, 6), rng.uniform_int(2, 6));
        if (brute_force(c).optimal_count != 1) continue;
        const Assignment base = hungarian(c);
        for (const double alpha : {0.25, 2.0, 13.5}) {
            CostMatrix scaled = c;
            for (double& v : scaled.entries.a) v *= alpha;
            CHECK(hungarian(scaled).pairs == base.pairs);
        }
        ++tested;
    }
}

TEST_CASE("row and column shifts keep the selected pairs") {
    // Shifting a line changes every assignment's total by the same constant
    // only when the line is saturated, i.e. it lies on the short side of the
    // matrix; shifting an unused long-side line can legitimately steal the
    // optimum, so each direction is exercised only where it is sound.
    Rng rng(223);
    int tested = 0;
    while (tested < 50) {
        const CostMatrix c = random_matrix(rng, rng.uniform_int(2, 6), rng.uniform_int(2, 6));
        if (brute_force(c).optimal_count != 1) continue;
        const Assignment base = hungarian(c);

        if (c.rows() <= c.cols()) {
            CostMatrix row_shift = c;
            const int r = rng.uniform_int(0, c.rows() - 1);
            for (int j = 0; j < c.cols(); ++j) row_shift(r, j) += 7.25;
            CHECK(hungarian(row_shift).pairs == base.pairs);
        }
        if (c.cols() <= c.rows()) {
            CostMatrix col_shift = c;
            const int col = rng.uniform_int(0, c.cols() - 1);
            for (int i = 0; i < c.rows(); ++i) col_shift(i, col) += -3.5;
            CHECK(hungarian(col_shift).pairs == base.pairs);
        }
        ++tested;
    }
}

TEST_CASE("row permutation permutes the selected pairs") {
    Rng rng(227);
    int tested = 0;
    while (tested < 50) {
        const int rows = rng.uniform_int(2, 6);
        const CostMatrix c = random_matrix(rng, rows, rng.uniform_int(2, 6));
        if (brute_force(c).optimal_count != 1) continue;
        const Assignment base = hungarian(c);

        std::vector<int> perm(rows);
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = rows - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);

        CostMatrix permuted(rows, c.cols());
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < c.cols(); ++j) permuted(perm[i], j) = c(i, j);

        std::vector<std::pair<int, int>> expected;
        for (const auto& [r, col] : base.pairs) expected.emplace_back(perm[r], col);
        std::sort(expected.begin(), expected.end());
        CHECK(hungarian(permuted).pairs == expected);
        ++tested;
    }
}

TEST_CASE("non-finite entries are rejected") {
    CostMatrix c(2, 2);
    c(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(hungarian(c), InvalidCostError);
    CHECK_THROWS_AS(brute_force(c), InvalidCostError);

    c(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(hungarian(c), InvalidCostError);

    CHECK_THROWS_AS(hungarian(CostMatrix(0, 3)), InvalidCostError);
    CHECK_THROWS_AS(hungarian(CostMatrix(3, 0)), InvalidCostError);
}

TEST_CASE("brute_force rejects oversized problems") {
    Rng rng(229);
    const CostMatrix big = random_matrix(rng, 9, 9);
    CHECK_THROWS_AS(brute_force(big), OracleTooLargeError);

    // Rectangular instances only cap the smaller side.
    const CostMatrix wide = random_matrix(rng, 3, 40);
    CHECK(brute_force(wide).best.pairs.size() == 3);
}

TEST_CASE("bench matrices are deterministic and bench reports are ordered") {
    const CostMatrix a = bench_matrix(20, 10, 42, 3);
    const CostMatrix b = bench_matrix(20, 10, 42, 3);
    CHECK(a.entries.a == b.entries.a);
    const CostMatrix other = bench_matrix(20, 10, 42, 4);
    CHECK(a.entries.a != other.entries.a);

    const BenchReport r = bench_matching(40, 8, 50, 42);
    CHECK(r.rows == 40);
    CHECK(r.cols == 8);
    CHECK(r.batches == 50);
    CHECK(r.min_ms <= r.median_ms);
    CHECK(r.median_ms <= r.p99_ms);
    CHECK(r.solves_per_sec > 0.0);

    CHECK_THROWS_AS(bench_matching(0, 5, 10, 1), ConfigError);
}
