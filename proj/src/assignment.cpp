#include "hmatch/assignment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "hmatch/errors.hpp"
#include "hmatch/rng.hpp"

namespace hmatch {

namespace {

void validate(const CostMatrix& c) {
    if (c.rows() < 1 || c.cols() < 1)
        throw InvalidCostError("cost matrix must have at least one row and one column");
    for (double v : c.entries.a)
        if (!std::isfinite(v)) throw InvalidCostError("cost matrix has non-finite entry");
}

// Shortest-augmenting-path solver for rows <= cols. `at(i, j)` reads the
// possibly transposed matrix.
template <typename At>
std::vector<int> solve_rows_leq_cols(int n_rows, int n_cols, At at) {
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials; match[j] = row matched to column j (0 = free).
    std::vector<double> u(static_cast<std::size_t>(n_rows) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n_cols) + 1, 0.0);
    std::vector<int> match(static_cast<std::size_t>(n_cols) + 1, 0);
    std::vector<int> path(static_cast<std::size_t>(n_cols) + 1, 0);
    std::vector<double> min_slack(static_cast<std::size_t>(n_cols) + 1, 0.0);
    std::vector<char> visited(static_cast<std::size_t>(n_cols) + 1, 0);

    for (int i = 1; i <= n_rows; ++i) {
        match[0] = i;
        int j0 = 0;
        std::fill(min_slack.begin(), min_slack.end(), inf);
        std::fill(visited.begin(), visited.end(), 0);
        do {
            visited[j0] = 1;
            const int i0 = match[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n_cols; ++j) {
                if (visited[j]) continue;
                const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < min_slack[j]) {
                    min_slack[j] = cur;
                    path[j] = j0;
                }
                if (min_slack[j] < delta) {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n_cols; ++j) {
                if (visited[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = path[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> row_to_col(static_cast<std::size_t>(n_rows), -1);
    for (int j = 1; j <= n_cols; ++j)
        if (match[j] != 0) row_to_col[static_cast<std::size_t>(match[j]) - 1] = j - 1;
    return row_to_col;
}

Assignment finalize(const CostMatrix& c, std::vector<std::pair<int, int>> pairs) {
    std::sort(pairs.begin(), pairs.end());
    Assignment out;
    out.pairs = std::move(pairs);
    out.total_cost = 0.0;
    for (const auto& [r, col] : out.pairs) out.total_cost += c(r, col);
    return out;
}

}  // namespace

Assignment hungarian(const CostMatrix& c) {
    validate(c);
    const int rows = c.rows();
    const int cols = c.cols();
    std::vector<std::pair<int, int>> pairs;
    if (rows <= cols) {
        const auto row_to_col = solve_rows_leq_cols(
            rows, cols, [&](int i, int j) { return c(i, j); });
        for (int i = 0; i < rows; ++i) pairs.emplace_back(i, row_to_col[static_cast<std::size_t>(i)]);
    } else {
        const auto col_to_row = solve_rows_leq_cols(
            cols, rows, [&](int i, int j) { return c(j, i); });
        for (int j = 0; j < cols; ++j) pairs.emplace_back(col_to_row[static_cast<std::size_t>(j)], j);
    }
    return finalize(c, std::move(pairs));
}

namespace {

struct BruteState {
    const CostMatrix* c;
    bool transposed;  // iterate over the smaller dimension as "rows"
    int n_small;
    int n_large;
    std::vector<int> chosen;     // chosen[i] = large-side index for small-side i
    std::vector<char> used;      // large-side usage
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> best_choice;
    std::int64_t best_count = 0;

    double at(int i, int j) const { return transposed ? (*c)(j, i) : (*c)(i, j); }

    void recurse(int i, double acc) {
        if (i == n_small) {
            if (acc < best) {
                best = acc;
                best_choice = chosen;
                best_count = 1;
            } else if (acc == best) {
                ++best_count;
            }
            return;
        }
        for (int j = 0; j < n_large; ++j) {
            if (used[j]) continue;
            used[j] = 1;
            chosen[i] = j;
            recurse(i + 1, acc + at(i, j));
            used[j] = 0;
        }
    }
};

}  // namespace

BruteForceResult brute_force(const CostMatrix& c) {
    validate(c);
    const int rows = c.rows();
    const int cols = c.cols();
    if (std::min(rows, cols) > 8)
        throw OracleTooLargeError("brute_force limited to min dimension 8");

    BruteState s;
    s.c = &c;
    s.transposed = rows > cols;
    s.n_small = std::min(rows, cols);
    s.n_large = std::max(rows, cols);
    s.chosen.assign(static_cast<std::size_t>(s.n_small), -1);
    s.used.assign(static_cast<std::size_t>(s.n_large), 0);
    s.recurse(0, 0.0);

    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < s.n_small; ++i) {
        const int j = s.best_choice[static_cast<std::size_t>(i)];
        if (s.transposed)
            pairs.emplace_back(j, i);
        else
            pairs.emplace_back(i, j);
    }
    BruteForceResult out;
    out.best = finalize(c, std::move(pairs));
    out.optimal_count = s.best_count;
    return out;
}

CostMatrix bench_matrix(int rows, int cols, std::uint64_t seed, int index) {
    Rng rng = Rng(seed).split("bench", static_cast<std::uint64_t>(index));
    CostMatrix c(rows, cols);
    for (double& v : c.entries.a) v = rng.uniform();
    return c;
}

BenchReport bench_matching(int rows, int cols, int batches, std::uint64_t seed) {
    if (rows < 1 || cols < 1 || batches < 1)
        throw ConfigError("bench_matching requires positive dimensions and batch count");

    std::vector<double> latency_ms;
    latency_ms.reserve(static_cast<std::size_t>(batches));
    double checksum = 0.0;
    const auto overall_start = std::chrono::steady_clock::now();
    for (int b = 0; b < batches; ++b) {
        const CostMatrix c = bench_matrix(rows, cols, seed, b);
        const auto t0 = std::chrono::steady_clock::now();
        const Assignment a = hungarian(c);
        const auto t1 = std::chrono::steady_clock::now();
        checksum += a.total_cost;
        latency_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    const auto overall_end = std::chrono::steady_clock::now();
    (void)checksum;

    std::sort(latency_ms.begin(), latency_ms.end());
    BenchReport r;
    r.rows = rows;
    r.cols = cols;
    r.batches = batches;
    r.min_ms = latency_ms.front();
    r.median_ms = latency_ms[latency_ms.size() / 2];
    const auto p99_idx = static_cast<std::size_t>(std::ceil(0.99 * latency_ms.size()));
    r.p99_ms = latency_ms[std::min(latency_ms.size() - 1, p99_idx == 0 ? 0 : p99_idx - 1)];
    const double total_s = std::chrono::duration<double>(overall_end - overall_start).count();
    r.solves_per_sec = total_s > 0.0 ? batches / total_s : 0.0;
    return r;
}

}  // namespace hmatch
