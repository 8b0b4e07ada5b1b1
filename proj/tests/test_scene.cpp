#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "hmatch/errors.hpp"
#include "hmatch/scene.hpp"

using namespace hmatch;

TEST_CASE("scene generation is deterministic per seed") {
    const SceneSpec spec;
    const SyntheticScene a = generate_scene(97, spec);
    const SyntheticScene b = generate_scene(97, spec);
    CHECK(a.tokens.a == b.tokens.a);
    CHECK(a.truth.labels == b.truth.labels);
    REQUIRE(a.truth.boxes.size() == b.truth.boxes.size());
    for (std::size_t i = 0; i < a.truth.boxes.size(); ++i) {
        CHECK(a.truth.boxes[i].cx == b.truth.boxes[i].cx);
        CHECK(a.truth.boxes[i].w == b.truth.boxes[i].w);
    }

    const SyntheticScene c = generate_scene(98, spec);
    CHECK(a.tokens.a != c.tokens.a);
}

TEST_CASE("scenes respect the configured ranges") {
    SceneSpec spec;
    spec.m_min = 1;
    spec.m_max = 8;
    spec.num_classes = 5;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const SyntheticScene s = generate_scene(seed, spec);
        const int m = s.truth.size();
        CHECK(m >= 1);
        CHECK(m <= 8);
        CHECK(s.tokens.rows == m + spec.distractor_count);
        CHECK(s.tokens.cols == spec.dim);
        CHECK_NOTHROW(validate_ground_truth(s.truth, spec.num_classes));
        for (const Box& b : s.truth.boxes) {
            const CornerBox c = to_corners(b);
            CHECK(c.x0 >= 0.0);
            CHECK(c.y0 >= 0.0);
            CHECK(c.x1 <= 1.0);
            CHECK(c.y1 <= 1.0);
        }
    }
}

TEST_CASE("same-class objects stay nms-separable") {
    SceneSpec spec;
    spec.m_min = 8;
    spec.m_max = 16;
    spec.num_classes = 2;  // force crowded classes
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const SyntheticScene s = generate_scene(seed, spec);
        const int m = s.truth.size();
        for (int i = 0; i < m; ++i) {
            for (int j = i + 1; j < m; ++j) {
                if (s.truth.labels[static_cast<std::size_t>(i)] !=
                    s.truth.labels[static_cast<std::size_t>(j)])
                    continue;
                CHECK(iou(to_corners(s.truth.boxes[static_cast<std::size_t>(i)]),
                          to_corners(s.truth.boxes[static_cast<std::size_t>(j)])) <= 0.3);
            }
        }
    }
}

TEST_CASE("without distractors every token encodes one object") {
    SceneSpec spec;
    spec.distractor_count = 0;
    const SyntheticScene s = generate_scene(5, spec);
    CHECK(s.tokens.rows == s.truth.size());
}

TEST_CASE("truth tokens carry a recoverable box and class signal") {
    const SceneSpec spec;
    for (std::uint64_t seed = 10; seed < 60; ++seed) {
        const SyntheticScene s = generate_scene(seed, spec);
        const int m = s.truth.size();
        for (int t = 0; t < m; ++t) {
            const double* row = s.tokens.row(t);
            const Box& b = s.truth.boxes[t];
            // Signal dominates the additive noise by design.
            CHECK(std::abs(row[0] / 4.0 - b.cx) < 0.1);
            CHECK(std::abs(row[1] / 4.0 - b.cy) < 0.1);
            CHECK(std::abs(row[2] / 4.0 - b.w) < 0.1);
            CHECK(std::abs(row[3] / 4.0 - b.h) < 0.1);

            int argmax = 0;
            for (int c = 1; c < spec.num_classes; ++c) {
                if (row[4 + c] > row[4 + argmax]) argmax = c;
            }
            CHECK(argmax == s.truth.labels[t]);
        }
        // Distractor rows are pure noise.
        for (int t = m; t < s.tokens.rows; ++t) {
            const double* row = s.tokens.row(t);
            for (int k = 0; k < spec.dim; ++k) CHECK(std::abs(row[k]) < 1.0);
        }
    }
}

TEST_CASE("scene spec validation") {
    SceneSpec bad;
    bad.m_min = -1;
    CHECK_THROWS_AS(generate_scene(1, bad), ConfigError);

    bad = SceneSpec{};
    bad.m_min = 5;
    bad.m_max = 2;
    CHECK_THROWS_AS(generate_scene(1, bad), ConfigError);

    bad = SceneSpec{};
    bad.m_max = 17;
    CHECK_THROWS_AS(generate_scene(1, bad), ConfigError);

    bad = SceneSpec{};
    bad.num_classes = 1;
    CHECK_THROWS_AS(generate_scene(1, bad), ConfigError);

    bad = SceneSpec{};
    bad.dim = 8;  // needs 4 + num_classes = 9
    CHECK_THROWS_AS(generate_scene(1, bad), ConfigError);

    bad = SceneSpec{};
    bad.distractor_count = -2;
    CHECK_THROWS_AS(generate_scene(1, bad), ConfigError);
}

TEST_CASE("generate_scenes derives one child stream per scene") {
    const SceneSpec spec;
    const auto batch = generate_scenes(7, 5, spec);
    REQUIRE(batch.size() == 5);
    const auto again = generate_scenes(7, 5, spec);
    for (int i = 0; i < 5; ++i) {
        CHECK(batch[i].tokens.a == again[i].tokens.a);
        CHECK(batch[i].seed == again[i].seed);
    }
    CHECK(batch[0].seed != batch[1].seed);
    CHECK_THROWS_AS(generate_scenes(7, -1, spec), ConfigError);
}
