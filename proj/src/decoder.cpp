#include "hmatch/decoder.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "hmatch/errors.hpp"
#include "hmatch/rng.hpp"

namespace hmatch {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kClassBiasInit = -2.0;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Mat slice_rows(const Mat& src, int begin, int count) {
    Mat out(count, src.cols);
    std::memcpy(out.a.data(), src.row(begin), out.a.size() * sizeof(double));
    return out;
}

void add_rows_into(Mat& dst, int begin, const Mat& src) {
    for (int i = 0; i < src.rows; ++i) {
        double* d = dst.row(begin + i);
        const double* s = src.row(i);
        for (int j = 0; j < src.cols; ++j) d[j] += s[j];
    }
}

void add_bias_rows(Mat& x, const Mat& bias) {
    for (int i = 0; i < x.rows; ++i) {
        double* xi = x.row(i);
        const double* b = bias.row(0);
        for (int j = 0; j < x.cols; ++j) xi[j] += b[j];
    }
}

void colsum_acc(const Mat& x, Mat& out) {
    for (int i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double* o = out.row(0);
        for (int j = 0; j < x.cols; ++j) o[j] += xi[j];
    }
}

// Row softmax. Masked logits are -inf and exponentiate to exactly +0, so a
// row's result never depends on values at forbidden positions.
void row_softmax(Mat& z) {
    for (int i = 0; i < z.rows; ++i) {
        double* zi = z.row(i);
        double mx = -kInf;
        for (int j = 0; j < z.cols; ++j) mx = std::max(mx, zi[j]);
        double sum = 0.0;
        for (int j = 0; j < z.cols; ++j) {
            zi[j] = std::exp(zi[j] - mx);
            sum += zi[j];
        }
        for (int j = 0; j < z.cols; ++j) zi[j] /= sum;
    }
}

// dZ_ij = A_ij * (dA_ij - sum_k A_ik dA_ik), then scaled.
Mat softmax_backward_scaled(const Mat& attn, const Mat& d_attn, double scale) {
    Mat dz(attn.rows, attn.cols);
    for (int i = 0; i < attn.rows; ++i) {
        const double* a = attn.row(i);
        const double* da = d_attn.row(i);
        double* o = dz.row(i);
        double dot = 0.0;
        for (int j = 0; j < attn.cols; ++j) dot += a[j] * da[j];
        for (int j = 0; j < attn.cols; ++j) o[j] = scale * (a[j] * (da[j] - dot));
    }
    return dz;
}

void fill_normal(Mat& m, Rng rng, double stddev) {
    for (double& v : m.a) v = stddev * rng.normal();
}

void fill_const(Mat& m, double v) { std::fill(m.a.begin(), m.a.end(), v); }

AttnParams make_attn(int dim) {
    AttnParams a;
    a.wq = Mat(dim, dim);
    a.wk = Mat(dim, dim);
    a.wv = Mat(dim, dim);
    return a;
}

BlockParams make_block(const DecoderConfig& cfg) {
    BlockParams b;
    b.self = make_attn(cfg.dim);
    b.cross = make_attn(cfg.dim);
    b.ffn_w1 = Mat(cfg.dim, cfg.ffn_dim);
    b.ffn_b1 = Mat(1, cfg.ffn_dim);
    b.ffn_w2 = Mat(cfg.ffn_dim, cfg.dim);
    b.ffn_b2 = Mat(1, cfg.dim);
    return b;
}

HeadParams make_head(const DecoderConfig& cfg) {
    HeadParams h;
    h.wc = Mat(cfg.dim, cfg.num_classes);
    h.bc = Mat(1, cfg.num_classes);
    h.wb = Mat(cfg.dim, 4);
    h.bb = Mat(1, 4);
    return h;
}

void init_attn(AttnParams& a, const Rng& root, const std::string& prefix, double stddev) {
    fill_normal(a.wq, root.split(prefix + ".wq"), stddev);
    fill_normal(a.wk, root.split(prefix + ".wk"), stddev);
    fill_normal(a.wv, root.split(prefix + ".wv"), stddev);
}

void init_block(BlockParams& b, const Rng& root, const std::string& prefix, const DecoderConfig& cfg) {
    const double in_std = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    init_attn(b.self, root, prefix + ".self", in_std);
    init_attn(b.cross, root, prefix + ".cross", in_std);
    fill_normal(b.ffn_w1, root.split(prefix + ".ffn_w1"), in_std);
    fill_normal(b.ffn_w2, root.split(prefix + ".ffn_w2"),
                1.0 / std::sqrt(static_cast<double>(cfg.ffn_dim)));
}

void init_head(HeadParams& h, const Rng& root, const std::string& prefix, const DecoderConfig& cfg) {
    const double in_std = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    fill_normal(h.wc, root.split(prefix + ".wc"), in_std);
    fill_normal(h.wb, root.split(prefix + ".wb"), in_std);
    fill_const(h.bc, kClassBiasInit);
}

void collect_attn(std::vector<std::pair<std::string, Mat*>>& out, AttnParams& a,
                  const std::string& prefix) {
    out.emplace_back(prefix + ".wq", &a.wq);
    out.emplace_back(prefix + ".wk", &a.wk);
    out.emplace_back(prefix + ".wv", &a.wv);
}

void collect_block(std::vector<std::pair<std::string, Mat*>>& out, BlockParams& b,
                   const std::string& prefix) {
    collect_attn(out, b.self, prefix + ".self");
    collect_attn(out, b.cross, prefix + ".cross");
    out.emplace_back(prefix + ".ffn_w1", &b.ffn_w1);
    out.emplace_back(prefix + ".ffn_b1", &b.ffn_b1);
    out.emplace_back(prefix + ".ffn_w2", &b.ffn_w2);
    out.emplace_back(prefix + ".ffn_b2", &b.ffn_b2);
}

void collect_head(std::vector<std::pair<std::string, Mat*>>& out, HeadParams& h,
                  const std::string& prefix) {
    out.emplace_back(prefix + ".wc", &h.wc);
    out.emplace_back(prefix + ".bc", &h.bc);
    out.emplace_back(prefix + ".wb", &h.wb);
    out.emplace_back(prefix + ".bb", &h.bb);
}

void check_params(const DecoderConfig& cfg, const DecoderParams& p) {
    auto bad = [](const char* what) { throw ConfigError(std::string("forward: ") + what); };
    if (p.embed_one.rows != cfg.num_one2one || p.embed_one.cols != cfg.dim)
        bad("query embedding shape mismatch");
    if (cfg.num_one2many > 0 &&
        (p.embed_many.rows != cfg.num_one2many || p.embed_many.cols != cfg.dim))
        bad("one-to-many embedding shape mismatch");
    if (static_cast<int>(p.blocks.size()) != cfg.layers) bad("block count mismatch");
    const bool want_many_stack = !cfg.share_decoder && cfg.num_one2many > 0;
    if (want_many_stack && static_cast<int>(p.blocks_many.size()) != cfg.layers)
        bad("one-to-many block count mismatch");
    if (!want_many_stack && !p.blocks_many.empty()) bad("unexpected one-to-many blocks");
    if (p.head.wc.rows != cfg.dim || p.head.wc.cols != cfg.num_classes) bad("head shape mismatch");
    const bool want_many_head = !cfg.share_heads && cfg.num_one2many > 0;
    if (want_many_head && (p.head_many.wc.rows != cfg.dim || p.head_many.wc.cols != cfg.num_classes))
        bad("one-to-many head shape mismatch");
}

StackTrace run_stack(const std::vector<BlockParams>& blocks, const Mat& h0,
                     const Mat* mask_additive, const Mat& tokens, int row_begin, double scale) {
    StackTrace st;
    st.row_begin = row_begin;
    st.blocks = &blocks;
    st.layers.reserve(blocks.size());

    Mat h = h0;
    Mat tmp;
    for (const BlockParams& b : blocks) {
        BlockTrace t;
        t.h_in = h;

        matmul(t.h_in, b.self.wq, t.q);
        matmul(t.h_in, b.self.wk, t.k);
        matmul(t.h_in, b.self.wv, t.v);
        matmul_nt(t.q, t.k, t.attn);
        for (std::size_t i = 0; i < t.attn.a.size(); ++i) {
            t.attn.a[i] = t.attn.a[i] * scale + (mask_additive ? mask_additive->a[i] : 0.0);
        }
        row_softmax(t.attn);
        t.h1 = t.h_in;
        matmul(t.attn, t.v, tmp);
        add_inplace(t.h1, tmp);

        matmul(t.h1, b.cross.wq, t.q2);
        matmul(tokens, b.cross.wk, t.k2);
        matmul(tokens, b.cross.wv, t.v2);
        matmul_nt(t.q2, t.k2, t.attn2);
        for (double& z : t.attn2.a) z *= scale;
        row_softmax(t.attn2);
        t.h2 = t.h1;
        matmul(t.attn2, t.v2, tmp);
        add_inplace(t.h2, tmp);

        matmul(t.h2, b.ffn_w1, t.gate);
        add_bias_rows(t.gate, b.ffn_b1);
        for (double& u : t.gate.a) u = std::tanh(u);
        t.h3 = t.h2;
        matmul(t.gate, b.ffn_w2, tmp);
        add_bias_rows(tmp, b.ffn_b2);
        add_inplace(t.h3, tmp);

        h = t.h3;
        st.layers.push_back(std::move(t));
    }
    return st;
}

LayerPredictions apply_head(const HeadParams& head, const Mat& x, int layer_index) {
    LayerPredictions p;
    p.layer_index = layer_index;
    matmul(x, head.wc, p.class_scores);
    add_bias_rows(p.class_scores, head.bc);
    for (double& v : p.class_scores.a) v = sigmoid(v);

    Mat blogits;
    matmul(x, head.wb, blogits);
    add_bias_rows(blogits, head.bb);
    p.boxes.reserve(static_cast<std::size_t>(x.rows));
    for (int i = 0; i < blogits.rows; ++i) {
        const double* r = blogits.row(i);
        p.boxes.push_back(Box{sigmoid(r[0]), sigmoid(r[1]), sigmoid(r[2]), sigmoid(r[3])});
    }
    return p;
}

// Gradients through one prediction head for a contiguous group of queries.
// Accumulates into the head's parameter gradients and returns the gradient
// with respect to the head input rows.
Mat head_backward(const HeadParams& head, HeadParams& grad, const Mat& h_rows,
                  const LayerPredictions& pred, const LossGradients& up) {
    const int rows = h_rows.rows;
    if (up.d_scores.rows != rows || up.d_boxes.rows != rows) {
        throw ConfigError("backward: upstream gradient shape mismatch");
    }
    Mat dlogit(rows, pred.class_scores.cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < dlogit.cols; ++j) {
            const double s = pred.class_scores(i, j);
            dlogit(i, j) = up.d_scores(i, j) * s * (1.0 - s);
        }
    }
    matmul_tn_acc(h_rows, dlogit, grad.wc);
    colsum_acc(dlogit, grad.bc);

    Mat dblogit(rows, 4);
    for (int i = 0; i < rows; ++i) {
        const Box& b = pred.boxes[static_cast<std::size_t>(i)];
        const double sig[4] = {b.cx, b.cy, b.w, b.h};
        for (int k = 0; k < 4; ++k) dblogit(i, k) = up.d_boxes(i, k) * sig[k] * (1.0 - sig[k]);
    }
    matmul_tn_acc(h_rows, dblogit, grad.wb);
    colsum_acc(dblogit, grad.bb);

    Mat dh(rows, h_rows.cols);
    matmul_nt_acc(dlogit, head.wc, dh);
    matmul_nt_acc(dblogit, head.wb, dh);
    return dh;
}

// Reverse pass through one block; returns d loss / d h_in.
Mat block_backward(const BlockParams& b, BlockParams& grad, const BlockTrace& t, const Mat& tokens,
                   const Mat& dh3, double scale) {
    // feed-forward
    Mat dgate;
    matmul_nt(dh3, b.ffn_w2, dgate);
    matmul_tn_acc(t.gate, dh3, grad.ffn_w2);
    colsum_acc(dh3, grad.ffn_b2);
    for (std::size_t i = 0; i < dgate.a.size(); ++i) {
        dgate.a[i] *= 1.0 - t.gate.a[i] * t.gate.a[i];
    }
    matmul_tn_acc(t.h2, dgate, grad.ffn_w1);
    colsum_acc(dgate, grad.ffn_b1);
    Mat dh2 = dh3;
    matmul_nt_acc(dgate, b.ffn_w1, dh2);

    // cross-attention
    Mat d_attn2;
    matmul_nt(dh2, t.v2, d_attn2);
    Mat dv2(t.v2.rows, t.v2.cols);
    matmul_tn_acc(t.attn2, dh2, dv2);
    matmul_tn_acc(tokens, dv2, grad.cross.wv);
    const Mat dz2 = softmax_backward_scaled(t.attn2, d_attn2, scale);
    Mat dq2;
    matmul(dz2, t.k2, dq2);
    Mat dk2(t.k2.rows, t.k2.cols);
    matmul_tn_acc(dz2, t.q2, dk2);
    matmul_tn_acc(tokens, dk2, grad.cross.wk);
    matmul_tn_acc(t.h1, dq2, grad.cross.wq);
    Mat dh1 = dh2;
    matmul_nt_acc(dq2, b.cross.wq, dh1);

    // masked self-attention
    Mat d_attn;
    matmul_nt(dh1, t.v, d_attn);
    Mat dv(t.v.rows, t.v.cols);
    matmul_tn_acc(t.attn, dh1, dv);
    const Mat dz = softmax_backward_scaled(t.attn, d_attn, scale);
    Mat dq;
    matmul(dz, t.k, dq);
    Mat dk(t.k.rows, t.k.cols);
    matmul_tn_acc(dz, t.q, dk);
    matmul_tn_acc(t.h_in, dq, grad.self.wq);
    matmul_tn_acc(t.h_in, dk, grad.self.wk);
    matmul_tn_acc(t.h_in, dv, grad.self.wv);
    Mat dh = dh1;
    matmul_nt_acc(dq, b.self.wq, dh);
    matmul_nt_acc(dk, b.self.wk, dh);
    matmul_nt_acc(dv, b.self.wv, dh);
    return dh;
}

}  // namespace

GroupMask build_group_mask(int num_one2one, int num_one2many) {
    if (num_one2one < 1 || num_one2many < 0) {
        throw ConfigError("build_group_mask: need num_one2one >= 1 and num_one2many >= 0");
    }
    GroupMask m;
    m.num_one2one = num_one2one;
    m.num_one2many = num_one2many;
    const int n = num_one2one + num_one2many;
    m.additive = Mat(n, n);
    for (int i = 0; i < n; ++i) {
        const bool i_many = i >= num_one2one;
        for (int j = 0; j < n; ++j) {
            const bool j_many = j >= num_one2one;
            m.additive(i, j) = (i_many == j_many) ? 0.0 : -kInf;
        }
    }
    return m;
}

void DecoderConfig::validate() const {
    if (dim < 1 || ffn_dim < 1) throw ConfigError("decoder: dimensions must be positive");
    if (layers < 1) throw ConfigError("decoder: need at least one layer");
    if (num_one2one < 1) throw ConfigError("decoder: need at least one one-to-one query");
    if (num_one2many < 0) throw ConfigError("decoder: negative one-to-many query count");
    if (num_classes < 1) throw ConfigError("decoder: need at least one class");
}

std::vector<std::pair<std::string, Mat*>> named_tensors(DecoderParams& p) {
    std::vector<std::pair<std::string, Mat*>> out;
    out.emplace_back("embed_one", &p.embed_one);
    if (!p.embed_many.empty()) out.emplace_back("embed_many", &p.embed_many);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        collect_block(out, p.blocks[i], "block" + std::to_string(i));
    }
    for (std::size_t i = 0; i < p.blocks_many.size(); ++i) {
        collect_block(out, p.blocks_many[i], "many_block" + std::to_string(i));
    }
    collect_head(out, p.head, "head");
    if (!p.head_many.wc.empty()) collect_head(out, p.head_many, "many_head");
    return out;
}

std::vector<std::pair<std::string, const Mat*>> named_tensors(const DecoderParams& p) {
    auto mut = named_tensors(const_cast<DecoderParams&>(p));
    std::vector<std::pair<std::string, const Mat*>> out;
    out.reserve(mut.size());
    for (auto& [name, m] : mut) out.emplace_back(std::move(name), m);
    return out;
}

DecoderParams make_decoder_params(const DecoderConfig& cfg) {
    cfg.validate();
    DecoderParams p;
    p.embed_one = Mat(cfg.num_one2one, cfg.dim);
    if (cfg.num_one2many > 0) p.embed_many = Mat(cfg.num_one2many, cfg.dim);
    p.blocks.assign(static_cast<std::size_t>(cfg.layers), BlockParams{});
    for (auto& b : p.blocks) b = make_block(cfg);
    if (!cfg.share_decoder && cfg.num_one2many > 0) {
        p.blocks_many.assign(static_cast<std::size_t>(cfg.layers), BlockParams{});
        for (auto& b : p.blocks_many) b = make_block(cfg);
    }
    p.head = make_head(cfg);
    if (!cfg.share_heads && cfg.num_one2many > 0) p.head_many = make_head(cfg);
    return p;
}

DecoderParams init_decoder(const DecoderConfig& cfg, std::uint64_t seed) {
    const Rng root(seed);
    DecoderParams p = make_decoder_params(cfg);
    fill_normal(p.embed_one, root.split("embed_one"), 1.0);
    if (cfg.num_one2many > 0) fill_normal(p.embed_many, root.split("embed_many"), 1.0);
    for (int i = 0; i < cfg.layers; ++i) {
        init_block(p.blocks[static_cast<std::size_t>(i)], root, "block" + std::to_string(i), cfg);
    }
    for (std::size_t i = 0; i < p.blocks_many.size(); ++i) {
        init_block(p.blocks_many[i], root, "many_block" + std::to_string(i), cfg);
    }
    init_head(p.head, root, "head", cfg);
    if (!p.head_many.wc.empty()) init_head(p.head_many, root, "many_head", cfg);
    return p;
}

DecoderParams zeros_like(const DecoderParams& p) {
    DecoderParams z = p;
    for (auto& [name, m] : named_tensors(z)) {
        (void)name;
        m->zero();
    }
    return z;
}

ForwardResult forward(const DecoderConfig& cfg, const DecoderParams& params,
                      const SyntheticScene& scene) {
    cfg.validate();
    check_params(cfg, params);
    if (scene.tokens.cols != cfg.dim) throw ConfigError("forward: token dim mismatch");
    if (scene.tokens.rows < 1) throw ConfigError("forward: scene has no tokens");

    const int n = cfg.num_one2one;
    const int t = cfg.num_one2many;
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.dim));

    ForwardResult fwd;
    if (cfg.share_decoder) {
        // Joint pass over both groups; the block-diagonal mask is what keeps
        // them from interacting. The one-to-one group occupies the leading
        // rows so its sums never include one-to-many positions.
        Mat h0(n + t, cfg.dim);
        std::memcpy(h0.row(0), params.embed_one.a.data(),
                    params.embed_one.a.size() * sizeof(double));
        if (t > 0) {
            std::memcpy(h0.row(n), params.embed_many.a.data(),
                        params.embed_many.a.size() * sizeof(double));
        }
        const GroupMask mask = build_group_mask(n, t);
        fwd.stacks.push_back(run_stack(params.blocks, h0, &mask.additive, scene.tokens, 0, scale));
    } else {
        fwd.stacks.push_back(run_stack(params.blocks, params.embed_one, nullptr, scene.tokens, 0, scale));
        if (t > 0) {
            fwd.stacks.push_back(
                run_stack(params.blocks_many, params.embed_many, nullptr, scene.tokens, n, scale));
        }
    }

    const HeadParams& head_many = cfg.share_heads ? params.head : params.head_many;
    for (int l = 0; l < cfg.layers; ++l) {
        const Mat& h3_q = fwd.stacks[0].layers[static_cast<std::size_t>(l)].h3;
        fwd.one2one.push_back(apply_head(params.head, slice_rows(h3_q, 0, n), l));
        if (t > 0) {
            const Mat h3_m = cfg.share_decoder
                                 ? slice_rows(h3_q, n, t)
                                 : fwd.stacks[1].layers[static_cast<std::size_t>(l)].h3;
            fwd.one2many.push_back(apply_head(head_many, h3_m, l));
        }
    }
    return fwd;
}

DecoderParams backward(const DecoderConfig& cfg, const DecoderParams& params,
                       const SyntheticScene& scene, const ForwardResult& fwd,
                       const std::vector<LossGradients>& upstream_one,
                       const std::vector<LossGradients>& upstream_many) {
    cfg.validate();
    check_params(cfg, params);
    const std::size_t layers = static_cast<std::size_t>(cfg.layers);
    if (!upstream_one.empty() && upstream_one.size() != layers)
        throw ConfigError("backward: one-to-one upstream layer count mismatch");
    if (!upstream_many.empty() && upstream_many.size() != layers)
        throw ConfigError("backward: one-to-many upstream layer count mismatch");

    const int n = cfg.num_one2one;
    const int t = cfg.num_one2many;
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    DecoderParams grads = zeros_like(params);

    for (const StackTrace& st : fwd.stacks) {
        const bool joint = cfg.share_decoder;
        const bool is_many_stack = !joint && st.row_begin == n && t > 0;
        const int rows = st.layers.front().h3.rows;
        std::vector<BlockParams>& gblocks = is_many_stack ? grads.blocks_many : grads.blocks;
        const std::vector<BlockParams>& pblocks = *st.blocks;

        Mat dh(rows, cfg.dim);
        for (int l = cfg.layers - 1; l >= 0; --l) {
            const BlockTrace& tr = st.layers[static_cast<std::size_t>(l)];

            // Head contributions for every group this stack carries. The
            // one-to-one rows come first so shared-parameter accumulation
            // touches them before any one-to-many rows.
            if ((joint || !is_many_stack) && !upstream_one.empty()) {
                const Mat dh_head =
                    head_backward(params.head, grads.head, slice_rows(tr.h3, 0, n),
                                  fwd.one2one[static_cast<std::size_t>(l)],
                                  upstream_one[static_cast<std::size_t>(l)]);
                add_rows_into(dh, 0, dh_head);
            }
            if (t > 0 && (joint || is_many_stack) && !upstream_many.empty()) {
                const int begin = joint ? n : 0;
                const HeadParams& hp = cfg.share_heads ? params.head : params.head_many;
                HeadParams& hg = cfg.share_heads ? grads.head : grads.head_many;
                const Mat dh_head =
                    head_backward(hp, hg, slice_rows(tr.h3, begin, t),
                                  fwd.one2many[static_cast<std::size_t>(l)],
                                  upstream_many[static_cast<std::size_t>(l)]);
                add_rows_into(dh, begin, dh_head);
            }

            dh = block_backward(pblocks[static_cast<std::size_t>(l)],
                                gblocks[static_cast<std::size_t>(l)], tr, scene.tokens, dh, scale);
        }

        if (is_many_stack) {
            add_rows_into(grads.embed_many, 0, dh);
        } else if (joint) {
            add_rows_into(grads.embed_one, 0, slice_rows(dh, 0, n));
            if (t > 0) add_rows_into(grads.embed_many, 0, slice_rows(dh, n, t));
        } else {
            add_rows_into(grads.embed_one, 0, dh);
        }
    }
    return grads;
}

}  // namespace hmatch
