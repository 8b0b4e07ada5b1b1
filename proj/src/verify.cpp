#include "hmatch/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "hmatch/assignment.hpp"
#include "hmatch/decoder.hpp"
#include "hmatch/errors.hpp"
#include "hmatch/losses.hpp"

namespace hmatch {
namespace {

struct Recorder {
    SuiteResult result;
    explicit Recorder(const char* name) { result.name = name; }
    void check(bool ok) { ok ? ++result.passed : ++result.failed; }
};

bool bitwise_equal(const Mat& a, const Mat& b) {
    return a.rows == b.rows && a.cols == b.cols &&
           std::memcmp(a.a.data(), b.a.data(), a.a.size() * sizeof(double)) == 0;
}

bool bitwise_equal(const std::vector<Box>& a, const std::vector<Box>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(Box)) == 0;
}

double max_abs_diff(const Mat& a, const Mat& b) {
    if (a.rows != b.rows || a.cols != b.cols) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t i = 0; i < a.a.size(); ++i) m = std::max(m, std::abs(a.a[i] - b.a[i]));
    return m;
}

CostMatrix random_costs(Rng& rng, int rows, int cols) {
    CostMatrix c;
    c.entries = Mat(rows, cols);
    for (double& v : c.entries.a) v = rng.uniform();
    return c;
}

SuiteResult verify_assignment() {
    Recorder rec("assignment");
    Rng root(0x5eedu);

    // exact agreement with exhaustive search
    for (int i = 0; i < 200; ++i) {
        Rng rng = root.split("bf", static_cast<std::uint64_t>(i));
        const int small = rng.uniform_int(1, 7);
        const int large = rng.uniform_int(small, 9);
        const bool wide = rng.uniform_int(0, 1) == 1;
        const CostMatrix c = random_costs(rng, wide ? small : large, wide ? large : small);
        const Assignment h = hungarian(c);
        const BruteForceResult b = brute_force(c);
        rec.check(h.total_cost == b.best.total_cost);
    }

    // pair-level invariances on unique-optimum instances
    for (int i = 0; i < 40; ++i) {
        Rng rng = root.split("inv", static_cast<std::uint64_t>(i));
        CostMatrix c = random_costs(rng, 6, 4);
        if (brute_force(c).optimal_count != 1) continue;
        const Assignment base = hungarian(c);

        CostMatrix scaled = c;
        for (double& v : scaled.entries.a) v *= 2.0;
        rec.check(hungarian(scaled).pairs == base.pairs);

        CostMatrix shifted = c;
        for (int r = 0; r < shifted.entries.rows; ++r) shifted.entries(r, 1) += 0.25;
        rec.check(hungarian(shifted).pairs == base.pairs);
    }

    // non-finite and empty inputs are rejected
    {
        CostMatrix c = random_costs(root, 3, 3);
        c.entries(1, 2) = std::numeric_limits<double>::quiet_NaN();
        bool threw = false;
        try {
            hungarian(c);
        } catch (const InvalidCostError&) {
            threw = true;
        }
        rec.check(threw);
    }
    {
        CostMatrix c = random_costs(root, 2, 2);
        c.entries(0, 0) = std::numeric_limits<double>::infinity();
        bool threw = false;
        try {
            hungarian(c);
        } catch (const InvalidCostError&) {
            threw = true;
        }
        rec.check(threw);
    }
    {
        bool threw = false;
        try {
            hungarian(CostMatrix{});
        } catch (const InvalidCostError&) {
            threw = true;
        }
        rec.check(threw);
    }

    // benchmark matrices are a pure function of (shape, seed, index)
    rec.check(bitwise_equal(bench_matrix(40, 10, 7, 3).entries, bench_matrix(40, 10, 7, 3).entries));
    rec.check(!bitwise_equal(bench_matrix(40, 10, 7, 3).entries, bench_matrix(40, 10, 7, 4).entries));
    return rec.result;
}

bool gradients_match_fd(const LayerPredictions& p, const FlatTargets& targets, const Assignment& a,
                        const MatchWeights& w) {
    const SetLossResult base = set_loss(p, targets, a, w);
    const double h = 1e-6;
    auto close = [](double analytic, double fd) {
        const double diff = std::abs(analytic - fd);
        return diff <= 1e-7 || diff <= 1e-4 * std::max(std::abs(analytic), std::abs(fd));
    };
    for (int i = 0; i < p.num_queries(); ++i) {
        for (int j = 0; j < p.num_classes(); ++j) {
            LayerPredictions q = p;
            q.class_scores(i, j) = p.class_scores(i, j) + h;
            const double up = set_loss(q, targets, a, w).terms.total;
            q.class_scores(i, j) = p.class_scores(i, j) - h;
            const double dn = set_loss(q, targets, a, w).terms.total;
            if (!close(base.grads.d_scores(i, j), (up - dn) / (2.0 * h))) return false;
        }
    }
    for (int i = 0; i < p.num_queries(); ++i) {
        double Box::* fields[4] = {&Box::cx, &Box::cy, &Box::w, &Box::h};
        for (int k = 0; k < 4; ++k) {
            LayerPredictions q = p;
            q.boxes[static_cast<std::size_t>(i)].*fields[k] += h;
            const double up = set_loss(q, targets, a, w).terms.total;
            q.boxes[static_cast<std::size_t>(i)].*fields[k] -= 2.0 * h;
            const double dn = set_loss(q, targets, a, w).terms.total;
            if (!close(base.grads.d_boxes(i, k), (up - dn) / (2.0 * h))) return false;
        }
    }
    return true;
}

SuiteResult verify_losses() {
    Recorder rec("losses");
    Rng root(0x105535u);
    const MatchWeights w;

    // analytic gradients against central finite differences
    for (int i = 0; i < 25; ++i) {
        Rng rng = root.split("fd", static_cast<std::uint64_t>(i));
        const int nq = rng.uniform_int(5, 10);
        const int classes = rng.uniform_int(2, 4);
        const int m = rng.uniform_int(0, 5);
        const LayerPredictions p = random_layer_predictions(rng, nq, classes);
        const GroundTruthSet g = random_ground_truth(rng, m, classes);
        const FlatTargets targets = flatten(g);
        const Assignment a = match_flat(p, targets, w);
        rec.check(gradients_match_fd(p, targets, a, w));
    }

    // perfect predictions cost (numerically) nothing
    {
        Rng rng = root.split("perfect");
        const GroundTruthSet g = random_ground_truth(rng, 4, 3);
        LayerPredictions p;
        p.layer_index = 0;
        p.class_scores = Mat(4, 3);
        p.boxes = g.boxes;
        for (int i = 0; i < 4; ++i) p.class_scores(i, g.labels[static_cast<std::size_t>(i)]) = 1.0;
        const Assignment a = match_flat(p, flatten(g), w);
        rec.check(set_loss(p, flatten(g), a, w).terms.total < 1e-10);
    }

    // empty targets: classification-only supervision
    {
        Rng rng = root.split("empty");
        const LayerPredictions p = random_layer_predictions(rng, 6, 3);
        const SetLossResult r = set_loss(p, FlatTargets{}, Assignment{}, w);
        rec.check(r.terms.l1 == 0.0 && r.terms.giou == 0.0 && r.terms.cls > 0.0);
        bool boxes_zero = true;
        for (double v : r.grads.d_boxes.a) boxes_zero = boxes_zero && v == 0.0;
        rec.check(boxes_zero);
    }

    // the one-to-many weight scales exactly that branch
    {
        Rng rng = root.split("lambda");
        const std::vector<LayerPredictions> one{random_layer_predictions(rng, 12, 3)};
        const std::vector<LayerPredictions> many{random_layer_predictions(rng, 30, 3)};
        const GroundTruthSet g = random_ground_truth(rng, 3, 3);
        HybridConfig cfg;
        cfg.scheme = Scheme::kHybridBranch;
        cfg.num_one2one = 12;
        cfg.num_one2many = 30;
        cfg.repeat_branch = 4;
        cfg.layers = 1;
        const MatchWeights mw;
        cfg.one2many_weight = 0.0;
        const HybridLossResult zero = hybrid_branch_loss(one, many, g, cfg, mw);
        rec.check(zero.combined.total == zero.one2one.total.total);
        cfg.one2many_weight = 1.0;
        const HybridLossResult unit = hybrid_branch_loss(one, many, g, cfg, mw);
        cfg.one2many_weight = 2.0;
        const HybridLossResult twice = hybrid_branch_loss(one, many, g, cfg, mw);
        const double once_contrib = unit.combined.total - unit.one2one.total.total;
        const double twice_contrib = twice.combined.total - twice.one2one.total.total;
        rec.check(std::abs(twice_contrib - 2.0 * once_contrib) < 1e-12);
    }

    // target order does not matter
    {
        Rng rng = root.split("perm");
        const std::vector<LayerPredictions> layers{random_layer_predictions(rng, 10, 4)};
        GroundTruthSet g = random_ground_truth(rng, 5, 4);
        const double before = one2one_loss(layers, g, w).total.total;
        std::reverse(g.boxes.begin(), g.boxes.end());
        std::reverse(g.labels.begin(), g.labels.end());
        const double after = one2one_loss(layers, g, w).total.total;
        rec.check(std::abs(before - after) <= 1e-12);
    }
    return rec.result;
}

SuiteResult verify_isolation() {
    Recorder rec("isolation");
    const DecoderConfig cfg;  // 32-dim, 30 + 150 queries, 2 layers
    const SceneSpec spec;
    const SyntheticScene scene = generate_scene(11, spec);
    const DecoderParams params = init_decoder(cfg, 5);
    const ForwardResult ref = forward(cfg, params, scene);

    Rng root(0x150u);
    auto q_outputs_equal = [&](const ForwardResult& other) {
        for (int l = 0; l < cfg.layers; ++l) {
            const auto& a = ref.one2one[static_cast<std::size_t>(l)];
            const auto& b = other.one2one[static_cast<std::size_t>(l)];
            if (!bitwise_equal(a.class_scores, b.class_scores)) return false;
            if (!bitwise_equal(a.boxes, b.boxes)) return false;
        }
        return true;
    };

    for (int i = 0; i < 10; ++i) {
        Rng rng = root.split("perturb", static_cast<std::uint64_t>(i));
        DecoderParams p2 = params;
        const double scl = std::pow(10.0, static_cast<double>(i % 4));
        for (double& v : p2.embed_many.a) v = scl * rng.normal();
        rec.check(q_outputs_equal(forward(cfg, p2, scene)));
    }

    const int counts[10] = {0, 1, 5, 10, 50, 100, 151, 149, 200, 300};
    for (int t : counts) {
        DecoderConfig c2 = cfg;
        c2.num_one2many = t;
        const DecoderParams p2 = init_decoder(c2, 5);
        rec.check(q_outputs_equal(forward(c2, p2, scene)));
    }

    // mask structure
    const GroupMask m = build_group_mask(3, 2);
    bool structure = m.size() == 5;
    for (int i = 0; i < 5 && structure; ++i) {
        for (int j = 0; j < 5; ++j) {
            const bool same_group = (i < 3) == (j < 3);
            if (m.permits(i, j) != same_group) {
                structure = false;
                break;
            }
        }
    }
    rec.check(structure);
    rec.check(m.permits(0, 1) == m.permits(1, 0) && m.permits(0, 4) == m.permits(4, 0));
    return rec.result;
}

SuiteResult verify_equivalence() {
    Recorder rec("equivalence");
    Rng root(0xeau);
    const MatchWeights w;
    HybridConfig cfg;
    cfg.scheme = Scheme::kHybridBranch;
    cfg.num_one2one = 30;
    cfg.num_one2many = 150;
    cfg.repeat_branch = 6;
    cfg.one2many_weight = 1.0;
    cfg.layers = 1;

    for (int i = 0; i < 100; ++i) {
        Rng rng = root.split("inst", static_cast<std::uint64_t>(i));
        const std::vector<LayerPredictions> one{random_layer_predictions(rng, cfg.num_one2one, 5)};
        const std::vector<LayerPredictions> many{random_layer_predictions(rng, cfg.num_one2many, 5)};
        const GroundTruthSet g = random_ground_truth(rng, rng.uniform_int(1, 8), 5);

        const HybridLossResult a = naive_hybrid_loss(one, many, g, cfg, w);
        const HybridLossResult b = optimized_hybrid_loss(one, many, g, cfg, w);

        bool ok = std::abs(a.combined.total - b.combined.total) <= 1e-12;
        ok = ok && a.one2one.layers[0].assignment.pairs == b.one2one.layers[0].assignment.pairs;
        ok = ok && a.one2many.layers[0].assignment.pairs == b.one2many.layers[0].assignment.pairs;
        ok = ok && max_abs_diff(a.one2one.layers[0].grads.d_scores,
                                b.one2one.layers[0].grads.d_scores) <= 1e-12;
        ok = ok && max_abs_diff(a.one2one.layers[0].grads.d_boxes,
                                b.one2one.layers[0].grads.d_boxes) <= 1e-12;
        ok = ok && max_abs_diff(a.one2many.layers[0].grads.d_scores,
                                b.one2many.layers[0].grads.d_scores) <= 1e-12;
        ok = ok && max_abs_diff(a.one2many.layers[0].grads.d_boxes,
                                b.one2many.layers[0].grads.d_boxes) <= 1e-12;
        rec.check(ok);
    }
    return rec.result;
}

}  // namespace

LayerPredictions random_layer_predictions(Rng& rng, int queries, int classes, int layer_index) {
    LayerPredictions p;
    p.layer_index = layer_index;
    p.class_scores = Mat(queries, classes);
    for (double& v : p.class_scores.a) v = rng.uniform(0.02, 0.98);
    p.boxes.reserve(static_cast<std::size_t>(queries));
    for (int i = 0; i < queries; ++i) {
        Box b;
        b.w = rng.uniform(0.05, 0.4);
        b.h = rng.uniform(0.05, 0.4);
        b.cx = rng.uniform(b.w / 2.0, 1.0 - b.w / 2.0);
        b.cy = rng.uniform(b.h / 2.0, 1.0 - b.h / 2.0);
        p.boxes.push_back(b);
    }
    return p;
}

GroundTruthSet random_ground_truth(Rng& rng, int count, int classes) {
    GroundTruthSet g;
    for (int i = 0; i < count; ++i) {
        Box b;
        b.w = rng.uniform(0.05, 0.4);
        b.h = rng.uniform(0.05, 0.4);
        b.cx = rng.uniform(b.w / 2.0, 1.0 - b.w / 2.0);
        b.cy = rng.uniform(b.h / 2.0, 1.0 - b.h / 2.0);
        g.boxes.push_back(b);
        g.labels.push_back(rng.uniform_int(0, classes - 1));
    }
    return g;
}

std::vector<SuiteResult> run_verify(const std::string& suite) {
    std::vector<SuiteResult> out;
    const bool all = suite == "all";
    if (all || suite == "assignment") out.push_back(verify_assignment());
    if (all || suite == "losses") out.push_back(verify_losses());
    if (all || suite == "isolation") out.push_back(verify_isolation());
    if (all || suite == "equivalence") out.push_back(verify_equivalence());
    if (out.empty()) {
        throw ConfigError("unknown verify suite: " + suite +
                          " (expected assignment, losses, isolation, equivalence, or all)");
    }
    return out;
}

}  // namespace hmatch
