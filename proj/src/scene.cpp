#include "hmatch/scene.hpp"

#include "hmatch/errors.hpp"
#include "hmatch/geometry.hpp"
#include "hmatch/rng.hpp"

namespace hmatch {

namespace {

// Extents keep IoU >= 0.5 reachable by a small decoder: a box of width w
// tolerates center error of roughly w/3, so the lower bound matters.
constexpr double kMinExtent = 0.2;
constexpr double kMaxExtent = 0.6;
constexpr double kSignalGain = 4.0;
constexpr double kTokenNoise = 0.03;
// Same-class ground truth must stay nms-separable, or a perfect detector
// would score duplicates. Different classes may overlap freely.
constexpr double kMaxSameClassIoU = 0.3;

void validate_spec(const SceneSpec& spec) {
    if (spec.m_min < 0 || spec.m_max > 16 || spec.m_min > spec.m_max) {
        throw ConfigError("generate_scene: object count range must satisfy 0 <= min <= max <= 16");
    }
    if (spec.num_classes < 2) {
        throw ConfigError("generate_scene: need at least 2 classes");
    }
    if (spec.dim < 4 + spec.num_classes) {
        throw ConfigError("generate_scene: token dim must be >= 4 + num_classes");
    }
    if (spec.distractor_count < 0) {
        throw ConfigError("generate_scene: negative distractor count");
    }
}

}  // namespace

SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
    validate_spec(spec);
    const Rng root(seed);

    SyntheticScene scene;
    scene.seed = seed;
    Rng m_rng = root.split("m");
    const int m = m_rng.uniform_int(spec.m_min, spec.m_max);

    for (int i = 0; i < m; ++i) {
        Rng r = root.split("object", static_cast<std::uint64_t>(i));
        const int label = r.uniform_int(0, spec.num_classes - 1);
        double lo = kMinExtent;
        double hi = kMaxExtent;
        Box b;
        for (int attempt = 0;; ++attempt) {
            b.w = r.uniform(lo, hi);
            b.h = r.uniform(lo, hi);
            b.cx = r.uniform(b.w / 2.0, 1.0 - b.w / 2.0);
            b.cy = r.uniform(b.h / 2.0, 1.0 - b.h / 2.0);
            bool clear = true;
            for (std::size_t j = 0; j < scene.truth.boxes.size(); ++j) {
                if (scene.truth.labels[j] != label) continue;
                if (iou(to_corners(scene.truth.boxes[j]), to_corners(b)) > kMaxSameClassIoU) {
                    clear = false;
                    break;
                }
            }
            if (clear) break;
            // Dense same-class scenes: shrink until placement must succeed.
            if (attempt % 64 == 63) {
                lo *= 0.5;
                hi *= 0.5;
            }
        }
        scene.truth.boxes.push_back(b);
        scene.truth.labels.push_back(label);
    }

    scene.tokens = Mat(m + spec.distractor_count, spec.dim);
    for (int t = 0; t < scene.tokens.rows; ++t) {
        Rng r = root.split("token", static_cast<std::uint64_t>(t));
        double* row = scene.tokens.row(t);
        for (int k = 0; k < spec.dim; ++k) row[k] = kTokenNoise * r.normal();
        if (t < m) {
            const Box& b = scene.truth.boxes[static_cast<std::size_t>(t)];
            row[0] += kSignalGain * b.cx;
            row[1] += kSignalGain * b.cy;
            row[2] += kSignalGain * b.w;
            row[3] += kSignalGain * b.h;
            row[4 + scene.truth.labels[static_cast<std::size_t>(t)]] += kSignalGain;
        }
    }
    return scene;
}

std::vector<SyntheticScene> generate_scenes(std::uint64_t seed, int count, const SceneSpec& spec) {
    if (count < 0) throw ConfigError("generate_scenes: negative count");
    std::vector<SyntheticScene> out;
    out.reserve(static_cast<std::size_t>(count));
    const Rng root(seed);
    for (int i = 0; i < count; ++i) {
        Rng child = root.split("scene", static_cast<std::uint64_t>(i));
        out.push_back(generate_scene(child.next_u64(), spec));
    }
    return out;
}

}  // namespace hmatch
