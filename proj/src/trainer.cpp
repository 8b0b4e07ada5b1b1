#include "hmatch/trainer.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hmatch/errors.hpp"
#include "hmatch/eval.hpp"
#include "hmatch/rng.hpp"

namespace hmatch {
namespace {

void sgd_step(DecoderParams& params, const DecoderParams& grads, DecoderParams& velocity,
              double momentum, double learning_rate) {
    auto pt = named_tensors(params);
    auto gt = named_tensors(const_cast<DecoderParams&>(grads));
    auto vt = named_tensors(velocity);
    if (pt.size() != gt.size() || pt.size() != vt.size()) {
        throw ConfigError("optimizer: parameter/gradient structure mismatch");
    }
    for (std::size_t i = 0; i < pt.size(); ++i) {
        Mat& p = *pt[i].second;
        const Mat& g = *gt[i].second;
        Mat& v = *vt[i].second;
        for (std::size_t k = 0; k < p.a.size(); ++k) {
            v.a[k] = momentum * v.a[k] + g.a[k];
            p.a[k] -= learning_rate * v.a[k];
        }
    }
}

std::vector<LossGradients> collect_grads(const BranchLoss& b) {
    std::vector<LossGradients> out;
    out.reserve(b.layers.size());
    for (const LayerLoss& l : b.layers) out.push_back(l.grads);
    return out;
}

std::vector<LossGradients> collect_scaled_grads(const BranchLoss& b, double scale) {
    std::vector<LossGradients> out;
    out.reserve(b.layers.size());
    for (const LayerLoss& l : b.layers) {
        LossGradients g = l.grads;
        for (double& v : g.d_scores.a) v *= scale;
        for (double& v : g.d_boxes.a) v *= scale;
        out.push_back(std::move(g));
    }
    return out;
}

// Shortest round-trip decimal form; keeps rerun artifacts byte-identical.
std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

}  // namespace

std::int64_t epoch_positive_count(const HybridConfig& cfg, int epoch_index, int total_epochs) {
    cfg.validate();
    const auto layers = static_cast<std::int64_t>(cfg.layers);
    switch (cfg.scheme) {
        case Scheme::kBaseline:
            return layers;
        case Scheme::kHybridBranch:
            return (1 + static_cast<std::int64_t>(cfg.repeat_branch)) * layers;
        case Scheme::kHybridEpoch:
            return epoch_index < one2many_epoch_count(cfg.epoch_fraction, total_epochs)
                       ? static_cast<std::int64_t>(cfg.repeat_epoch) * layers
                       : layers;
        case Scheme::kHybridLayer:
            return static_cast<std::int64_t>(cfg.repeat_layer) * cfg.layers_one2many +
                   cfg.layers_one2one;
    }
    throw ConfigError("unknown scheme");
}

DecoderConfig scheme_decoder_config(const DecoderConfig& base, const HybridConfig& hybrid) {
    hybrid.validate();
    DecoderConfig d = base;
    d.layers = hybrid.layers;
    switch (hybrid.scheme) {
        case Scheme::kBaseline:
            d.num_one2one = hybrid.num_one2one;
            d.num_one2many = 0;
            break;
        case Scheme::kHybridBranch:
            d.num_one2one = hybrid.num_one2one;
            d.num_one2many = hybrid.num_one2many;
            break;
        case Scheme::kHybridEpoch:
        case Scheme::kHybridLayer:
            d.num_one2one = hybrid.single_group_queries();
            d.num_one2many = 0;
            break;
    }
    d.validate();
    return d;
}

TrainResult train(const HybridConfig& hybrid, const DecoderConfig& base_decoder,
                  const MatchWeights& weights, const OptimizerParams& opt,
                  const std::vector<SyntheticScene>& train_scenes,
                  const std::vector<SyntheticScene>& val_scenes, int epochs, std::uint64_t seed) {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (train_scenes.empty()) throw ConfigError("train: no training scenes");
    if (!(opt.learning_rate > 0.0) || opt.momentum < 0.0 || opt.momentum >= 1.0 ||
        !(opt.lr_decay > 0.0) || opt.lr_decay > 1.0) {
        throw ConfigError("train: invalid optimizer parameters");
    }

    TrainResult res;
    res.decoder_cfg = scheme_decoder_config(base_decoder, hybrid);
    res.params = init_decoder(res.decoder_cfg, seed);
    DecoderParams velocity = zeros_like(res.params);
    const Rng root(seed);

    std::vector<std::size_t> order(train_scenes.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng shuffle_rng = root.split("shuffle", static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(
                shuffle_rng.uniform_int(0, static_cast<int>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        const double epoch_lr = opt.learning_rate * std::pow(opt.lr_decay, epoch);
        double train_sum = 0.0;
        for (const std::size_t idx : order) {
            const SyntheticScene& scene = train_scenes[idx];
            const ForwardResult fwd = forward(res.decoder_cfg, res.params, scene);

            double step_loss = 0.0;
            std::vector<LossGradients> up_one;
            std::vector<LossGradients> up_many;
            // Ground truth is validated at generation time, so geometry or
            // cost failures inside the step can only come from the model's
            // own predictions going non-finite or degenerate: divergence.
            auto diverged = [&](const char* what) -> DivergenceError {
                return DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                       ", step " + std::to_string(res.step_losses.size()) + " (" +
                                       what + ")");
            };
            try {
                switch (hybrid.scheme) {
                    case Scheme::kBaseline: {
                        const BranchLoss bl = one2one_loss(fwd.one2one, scene.truth, weights);
                        step_loss = bl.total.total;
                        up_one = collect_grads(bl);
                        break;
                    }
                    case Scheme::kHybridBranch: {
                        const HybridLossResult hr = hybrid_branch_loss(fwd.one2one, fwd.one2many,
                                                                       scene.truth, hybrid, weights);
                        step_loss = hr.combined.total;
                        up_one = collect_grads(hr.one2one);
                        if (!hr.one2many.layers.empty()) {
                            up_many = collect_scaled_grads(hr.one2many, hr.one2many_weight);
                        }
                        break;
                    }
                    case Scheme::kHybridEpoch: {
                        const EpochSchemeLoss el = hybrid_epoch_loss(fwd.one2one, scene.truth,
                                                                     hybrid, epoch, epochs, weights);
                        step_loss = el.loss.total.total;
                        up_one = collect_grads(el.loss);
                        break;
                    }
                    case Scheme::kHybridLayer: {
                        const BranchLoss ll =
                            hybrid_layer_loss(fwd.one2one, scene.truth, hybrid, weights);
                        step_loss = ll.total.total;
                        up_one = collect_grads(ll);
                        break;
                    }
                }
            } catch (const InvalidGeometryError& e) {
                throw diverged(e.what());
            } catch (const DegenerateGeometryError& e) {
                throw diverged(e.what());
            } catch (const InvalidCostError& e) {
                throw diverged(e.what());
            }

            if (!std::isfinite(step_loss)) {
                throw diverged("non-finite step loss");
            }
            const DecoderParams grads =
                backward(res.decoder_cfg, res.params, scene, fwd, up_one, up_many);
            sgd_step(res.params, grads, velocity, opt.momentum, epoch_lr);
            res.step_losses.push_back(step_loss);
            train_sum += step_loss;
        }

        double val_sum = 0.0;
        std::vector<std::vector<Detection>> val_dets;
        std::vector<GroundTruthSet> val_truths;
        val_dets.reserve(val_scenes.size());
        val_truths.reserve(val_scenes.size());
        for (const SyntheticScene& scene : val_scenes) {
            const ForwardResult fwd = forward(res.decoder_cfg, res.params, scene);
            val_sum += one2one_loss(fwd.one2one, scene.truth, weights).total.total;
            val_dets.push_back(predictions_to_detections(fwd.one2one.back()));
            val_truths.push_back(scene.truth);
        }

        TrainLogRow row;
        row.epoch = epoch;
        row.scheme = hybrid.scheme;
        row.train_total = train_sum / static_cast<double>(train_scenes.size());
        row.val_one2one_total =
            val_scenes.empty() ? 0.0 : val_sum / static_cast<double>(val_scenes.size());
        row.val_ap50 =
            val_scenes.empty() ? kUndefinedMetric : average_precision(val_dets, val_truths, 0.5);
        row.positive_count = epoch_positive_count(hybrid, epoch, epochs);
        res.log.push_back(row);
    }
    return res;
}

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open training log for writing: " + path);
    out << "epoch,scheme,train_total,val_one2one_total,val_AP50,positive_count\n";
    for (const TrainLogRow& r : rows) {
        out << r.epoch << ',' << scheme_name(r.scheme) << ',' << format_double(r.train_total)
            << ',' << format_double(r.val_one2one_total) << ',' << format_double(r.val_ap50) << ','
            << r.positive_count << '\n';
    }
    if (!out) throw Error("failed writing training log: " + path);
}

void save_model(const std::string& path, const DecoderConfig& cfg, const DecoderParams& params) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open model file for writing: " + path);
    out << "hmatch-model 1\n";
    out << "dim " << cfg.dim << "\nffn_dim " << cfg.ffn_dim << "\nlayers " << cfg.layers
        << "\nnum_one2one " << cfg.num_one2one << "\nnum_one2many " << cfg.num_one2many
        << "\nnum_classes " << cfg.num_classes << "\nshare_decoder " << (cfg.share_decoder ? 1 : 0)
        << "\nshare_heads " << (cfg.share_heads ? 1 : 0) << "\n";
    for (const auto& [name, m] : named_tensors(params)) {
        out << "tensor " << name << ' ' << m->rows << ' ' << m->cols << '\n';
        char buf[48];
        for (int r = 0; r < m->rows; ++r) {
            for (int c = 0; c < m->cols; ++c) {
                std::snprintf(buf, sizeof(buf), "%a", (*m)(r, c));
                if (c) out << ' ';
                out << buf;
            }
            out << '\n';
        }
    }
    out << "end\n";
    if (!out) throw Error("failed writing model file: " + path);
}

LoadedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open model file: " + path);
    std::string word;
    int version = 0;
    if (!(in >> word >> version) || word != "hmatch-model" || version != 1) {
        throw ConfigError("model file: unsupported header");
    }

    LoadedModel m;
    auto read_int = [&](const char* key) {
        std::string k;
        int v = 0;
        if (!(in >> k >> v) || k != key) {
            throw ConfigError(std::string("model file: expected field ") + key);
        }
        return v;
    };
    m.cfg.dim = read_int("dim");
    m.cfg.ffn_dim = read_int("ffn_dim");
    m.cfg.layers = read_int("layers");
    m.cfg.num_one2one = read_int("num_one2one");
    m.cfg.num_one2many = read_int("num_one2many");
    m.cfg.num_classes = read_int("num_classes");
    m.cfg.share_decoder = read_int("share_decoder") != 0;
    m.cfg.share_heads = read_int("share_heads") != 0;

    m.params = make_decoder_params(m.cfg);
    for (auto& [name, mat] : named_tensors(m.params)) {
        std::string kind, got;
        int rows = 0, cols = 0;
        if (!(in >> kind >> got >> rows >> cols) || kind != "tensor" || got != name ||
            rows != mat->rows || cols != mat->cols) {
            throw ConfigError("model file: tensor header mismatch at " + name);
        }
        for (double& v : mat->a) {
            if (!(in >> word)) throw ConfigError("model file: truncated tensor " + name);
            char* end = nullptr;
            v = std::strtod(word.c_str(), &end);
            if (end == word.c_str() || *end != '\0') {
                throw ConfigError("model file: bad value in tensor " + name);
            }
        }
    }
    if (!(in >> word) || word != "end") throw ConfigError("model file: missing end marker");
    return m;
}

}  // namespace hmatch
