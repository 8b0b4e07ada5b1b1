#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hmatch/losses.hpp"
#include "hmatch/mat.hpp"
#include "hmatch/matching.hpp"
#include "hmatch/scene.hpp"

namespace hmatch {

// Block-diagonal attention mask over the two query groups. Stored in the
// additive form used by the decoder: 0 where attention is permitted,
// -infinity where it is forbidden.
struct GroupMask {
    int num_one2one = 0;
    int num_one2many = 0;
    Mat additive;

    bool permits(int i, int j) const { return additive(i, j) == 0.0; }
    int size() const { return additive.rows; }
};

GroupMask build_group_mask(int num_one2one, int num_one2many);

struct DecoderConfig {
    int dim = 32;
    int ffn_dim = 32;
    int layers = 2;
    int num_one2one = 30;
    int num_one2many = 150;
    int num_classes = 5;
    bool share_decoder = true;
    bool share_heads = true;

    void validate() const;
    int total_queries() const { return num_one2one + num_one2many; }
};

struct AttnParams {
    Mat wq, wk, wv;  // dim x dim
};

struct BlockParams {
    AttnParams self;   // queries attending to queries, group-masked
    AttnParams cross;  // wq on queries; wk, wv on scene tokens
    Mat ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct HeadParams {
    Mat wc, bc;  // dim x classes, 1 x classes
    Mat wb, bb;  // dim x 4, 1 x 4
};

struct DecoderParams {
    Mat embed_one;   // num_one2one x dim
    Mat embed_many;  // num_one2many x dim
    std::vector<BlockParams> blocks;
    std::vector<BlockParams> blocks_many;  // empty when the decoder is shared
    HeadParams head;
    HeadParams head_many;  // empty when heads are shared
};

// Stable name -> tensor mapping used by the optimizer, serialization, and
// gradient checks. Empty tensors (disabled branch pieces) are skipped.
std::vector<std::pair<std::string, Mat*>> named_tensors(DecoderParams& p);
std::vector<std::pair<std::string, const Mat*>> named_tensors(const DecoderParams& p);

// Zero-filled parameter set with the shapes the config calls for.
DecoderParams make_decoder_params(const DecoderConfig& cfg);

// Each tensor is filled from its own seed stream derived from the tensor
// name, so configs that share a tensor initialize it identically even when
// the surrounding model differs.
DecoderParams init_decoder(const DecoderConfig& cfg, std::uint64_t seed);

DecoderParams zeros_like(const DecoderParams& p);

// Intermediate activations of one decoder block, kept for the backward pass.
struct BlockTrace {
    Mat h_in;
    Mat q, k, v;  // self-attention projections
    Mat attn;     // row-softmaxed self-attention weights
    Mat h1;
    Mat q2, k2, v2;  // cross-attention projections (k2, v2 from tokens)
    Mat attn2;
    Mat h2;
    Mat gate;  // tanh activation inside the feed-forward map
    Mat h3;    // block output
};

// One pass of a stack of blocks over a contiguous range of queries.
// row_begin is the global query offset (0 for the joint or Q run,
// num_one2one for a separate one-to-many run).
struct StackTrace {
    int row_begin = 0;
    const std::vector<BlockParams>* blocks = nullptr;
    std::vector<BlockTrace> layers;
};

struct ForwardResult {
    std::vector<LayerPredictions> one2one;   // per decoder layer
    std::vector<LayerPredictions> one2many;  // empty when num_one2many == 0
    std::vector<StackTrace> stacks;          // 1 (shared decoder) or 2
};

ForwardResult forward(const DecoderConfig& cfg, const DecoderParams& params,
                      const SyntheticScene& scene);

// Upstream gradients of the scalar loss with respect to each layer's
// predictions, one entry per decoder layer (LossGradients over that group's
// queries). Pass empty vectors for a branch that received no supervision.
DecoderParams backward(const DecoderConfig& cfg, const DecoderParams& params,
                       const SyntheticScene& scene, const ForwardResult& fwd,
                       const std::vector<LossGradients>& upstream_one,
                       const std::vector<LossGradients>& upstream_many);

}  // namespace hmatch
