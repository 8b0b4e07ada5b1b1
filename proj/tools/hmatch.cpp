#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hmatch/assignment.hpp"
#include "hmatch/config.hpp"
#include "hmatch/errors.hpp"
#include "hmatch/eval.hpp"
#include "hmatch/rng.hpp"
#include "hmatch/trainer.hpp"
#include "hmatch/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

void write_text_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path);
    if (!out) throw hmatch::Error("cannot open for writing: " + path.string());
    out << body;
    if (!out) throw hmatch::Error("failed writing: " + path.string());
}

struct BranchDetections {
    std::string name;
    std::vector<std::vector<hmatch::Detection>> dets;
};

int run_experiment(const std::string& config_path, std::optional<std::uint64_t> seed_override,
                   std::optional<std::string> out_override) {
    using namespace hmatch;
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (out_override) cfg.out_dir = *out_override;
    cfg.validate();

    const std::filesystem::path out_dir(cfg.out_dir);
    std::filesystem::create_directories(out_dir);

    const Rng data_root(cfg.data_seed);
    Rng train_stream = data_root.split("train_scenes");
    Rng val_stream = data_root.split("val_scenes");
    const auto train_scenes = generate_scenes(train_stream.next_u64(), cfg.train_scenes, cfg.scene);
    const auto val_scenes = generate_scenes(val_stream.next_u64(), cfg.val_scenes, cfg.scene);

    std::cout << "run: scheme=" << scheme_name(cfg.scheme) << " epochs=" << cfg.epochs
              << " train=" << cfg.train_scenes << " val=" << cfg.val_scenes
              << " seed=" << cfg.seed << "\n";

    const TrainResult result = train(cfg.hybrid, cfg.decoder, cfg.weights, cfg.opt, train_scenes,
                                     val_scenes, cfg.epochs, cfg.seed);

    write_train_log((out_dir / "train_log.csv").string(), result.log);
    save_model((out_dir / "model.txt").string(), result.decoder_cfg, result.params);

    // Final-model detections per branch on the validation set.
    std::vector<GroundTruthSet> truths;
    truths.reserve(val_scenes.size());
    BranchDetections one2one{"one2one", {}};
    BranchDetections one2many{"one2many", {}};
    const bool has_many_branch = result.decoder_cfg.num_one2many > 0;
    for (const SyntheticScene& scene : val_scenes) {
        const ForwardResult fwd = forward(result.decoder_cfg, result.params, scene);
        one2one.dets.push_back(predictions_to_detections(fwd.one2one.back()));
        if (has_many_branch) one2many.dets.push_back(predictions_to_detections(fwd.one2many.back()));
        truths.push_back(scene.truth);
    }

    std::vector<std::pair<std::string, EvalReport>> reports;
    std::vector<const BranchDetections*> branches{&one2one};
    if (has_many_branch) branches.push_back(&one2many);
    for (const BranchDetections* b : branches) {
        for (const bool with_nms : {false, true}) {
            const EvalReport rep =
                evaluate(b->dets, truths, with_nms, cfg.nms_iou, cfg.score_cut);
            const std::string name = "eval_" + b->name + (with_nms ? "_nms" : "_raw");
            write_text_file(out_dir / (name + ".json"), report_to_json(rep));
            reports.emplace_back(name, rep);
        }
    }

    std::string summary;
    summary += "scheme=" + std::string(scheme_name(cfg.scheme)) + " seed=" + std::to_string(cfg.seed) +
               " data_seed=" + std::to_string(cfg.data_seed) + " epochs=" + std::to_string(cfg.epochs) + "\n";
    const TrainLogRow& last = result.log.back();
    summary += "final_train_total=" + format_double(last.train_total) + "\n";
    summary += "final_val_one2one_total=" + format_double(last.val_one2one_total) + "\n";
    summary += "positive_supervision_total=" +
               std::to_string(positive_supervision_count(cfg.hybrid, cfg.epochs)) + "\n";
    for (const auto& [name, rep] : reports) {
        summary += name + ": ap50=" + format_double(rep.ap50) + " ap75=" + format_double(rep.ap75) +
                   " olrp=" + format_double(rep.olrp) +
                   " duplicate_rate=" + format_double(rep.duplicate_rate) + "\n";
    }
    write_text_file(out_dir / "summary.txt", summary);
    std::cout << summary;
    return kExitOk;
}

int run_verify(const std::string& suite) {
    const auto results = hmatch::run_verify(suite);
    int failed = 0;
    for (const auto& r : results) {
        std::cout << r.name << ": " << r.passed << " passed, " << r.failed << " failed\n";
        failed += r.failed;
    }
    return failed == 0 ? kExitOk : kExitRuntime;
}

int run_bench(int rows, int cols, int batches, std::uint64_t seed, const std::string& out_dir) {
    const hmatch::BenchReport r = hmatch::bench_matching(rows, cols, batches, seed);
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    std::string csv = "rows,cols,batches,min_ms,median_ms,p99_ms,solves_per_sec\n";
    csv += std::to_string(r.rows) + "," + std::to_string(r.cols) + "," + std::to_string(r.batches) +
           "," + format_double(r.min_ms) + "," + format_double(r.median_ms) + "," +
           format_double(r.p99_ms) + "," + format_double(r.solves_per_sec) + "\n";
    write_text_file(dir / "bench.csv", csv);
    std::cout << csv;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid set-matching trainer and evaluation harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    auto* run = app.add_subcommand("run", "train and evaluate an experiment config");
    run->add_option("--config", config_path, "experiment config (.toml or .json)")->required();
    std::uint64_t seed_value = 0;
    auto* seed_opt = run->add_option("--seed", seed_value, "override the config seed");
    std::string out_value;
    auto* out_opt = run->add_option("--out", out_value, "override the output directory");

    std::string suite = "all";
    auto* verify = app.add_subcommand("verify", "run the oracle verification suites");
    verify->add_option("--suite", suite, "assignment|losses|isolation|equivalence|all");

    int rows = 300;
    int cols = 30;
    int batches = 1000;
    std::uint64_t bench_seed = 42;
    std::string bench_out = ".";
    auto* bench = app.add_subcommand("bench", "benchmark the assignment solver");
    bench->add_option("--rows", rows, "cost matrix rows");
    bench->add_option("--cols", cols, "cost matrix columns");
    bench->add_option("--batches", batches, "number of solves");
    bench->add_option("--seed", bench_seed, "matrix generator seed");
    bench->add_option("--out", bench_out, "directory for bench.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help lands here with a zero exit code; real parse errors map to
        // the config-error code.
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*seed_opt) seed_override = seed_value;
        if (*out_opt) out_override = out_value;
        if (run->parsed()) return run_experiment(config_path, seed_override, out_override);
        if (verify->parsed()) return run_verify(suite);
        if (bench->parsed()) return run_bench(rows, cols, batches, bench_seed, bench_out);
    } catch (const hmatch::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
