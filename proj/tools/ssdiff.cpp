#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "ssdiff/config.hpp"
#include "ssdiff/hdf5_io.hpp"
#include "ssdiff/image_io.hpp"
#include "ssdiff/metrics.hpp"
#include "ssdiff/sampler.hpp"
#include "ssdiff/training.hpp"

namespace fs = std::filesystem;
using namespace ssdiff;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out = "run";
    std::vector<std::string> overrides;
    int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON run configuration");
    cmd->add_option("--out", args.out, "Output file or directory");
    cmd->add_option("--override", args.overrides, "Dotted-key override, e.g. train.lr=0.01")
        ->take_all();
    cmd->add_option("--seed", args.seed, "Master seed (overrides config)");
}

RunConfig build_config(const CommonArgs& args) {
    RunConfig cfg = load_run_config(args.config_path);
    for (const auto& o : args.overrides) apply_override(cfg, o);
    if (args.seed >= 0) {
        cfg.seed = static_cast<uint64_t>(args.seed);
        cfg.train.seed = cfg.seed;
    }
    cfg.validate();
    return cfg;
}

std::string resolve_data_path(const std::string& path) {
    if (path.empty()) throw std::invalid_argument("data.path: no dataset configured");
    fs::path p(path);
    if (p.is_relative() && !fs::exists(p)) {
        if (const char* root = std::getenv("SSDIFF_DATA_ROOT")) {
            fs::path joined = fs::path(root) / p;
            if (fs::exists(joined)) return joined.string();
        }
    }
    return path;
}

void snapshot_config(const RunConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream out(dir / "config.json");
    out << run_config_json(cfg) << "\n";
}

int cmd_synth(const CommonArgs& args) {
    RunConfig cfg = build_config(args);
    std::vector<SceneSample> scenes;
    scenes.reserve(static_cast<size_t>(cfg.synth_scenes));
    for (int i = 0; i < cfg.synth_scenes; ++i)
        scenes.push_back(synth_scene(cfg.seed + static_cast<uint64_t>(i), cfg.synth_bands,
                                     cfg.synth_size));
    fs::path out(args.out);
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    save_dataset(out.string(), scenes);
    std::cout << "wrote " << scenes.size() << " scenes (" << cfg.synth_bands << " bands, "
              << cfg.synth_size << "x" << cfg.synth_size << ") to " << out << "\n";
    return 0;
}

int run_train(RunConfig cfg, const fs::path& dir, const std::string& resume) {
    std::vector<SceneSample> data = load_dataset(resolve_data_path(cfg.data_path),
                                                 cfg.data_max_value);
    if (data.empty() || data[0].gt.empty())
        throw std::invalid_argument("data.path: training requires ground-truth scenes");
    cfg.network.bands = static_cast<int>(data[0].lms.dim(0));
    snapshot_config(cfg, dir);

    Rng init_rng(cfg.seed);
    SsdiffNet net(cfg.network, init_rng);
    Trainer trainer(net, build_schedule(cfg.schedule_T, cfg.beta_start, cfg.beta_end), cfg.train);
    if (!resume.empty()) trainer.restore_checkpoint(resume);

    std::ofstream log(dir / "log.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
    fs::path ckpt = dir / "checkpoint.h5";
    int64_t log_every = cfg.log_every, ckpt_every = cfg.checkpoint_every;
    try {
        run_training(trainer, data, [&](const TrainLogEntry& e) {
            if (e.iteration % log_every == 0 || e.iteration == cfg.train.total_iters) {
                nlohmann::json j{{"iteration", e.iteration},
                                 {"loss", e.loss},
                                 {"lr", e.lr},
                                 {"phase", e.phase}};
                log << j.dump() << "\n";
                log.flush();
            }
            if (e.iteration % ckpt_every == 0) trainer.save_checkpoint(ckpt.string());
            if (e.iteration % 200 == 0)
                std::cout << "iter " << e.iteration << " loss " << e.loss << " phase " << e.phase
                          << "\n";
        });
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << " (last good checkpoint kept at " << ckpt << ")\n";
        return 1;
    }
    trainer.save_checkpoint(ckpt.string());
    std::cout << "finished " << trainer.iteration() << " iterations; checkpoint at " << ckpt
              << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& resume) {
    return run_train(build_config(args), fs::path(args.out), resume);
}

int cmd_sample(const CommonArgs& args, const std::string& checkpoint, bool raw_weights) {
    RunConfig cfg = build_config(args);
    CheckpointMeta meta = read_checkpoint_meta(checkpoint);
    NetworkConfig net_cfg = network_config_from_json(meta.network_json);
    std::vector<SceneSample> data = load_dataset(resolve_data_path(cfg.data_path),
                                                 cfg.data_max_value);
    if (data.empty()) throw std::invalid_argument("data.path: empty dataset");
    if (data[0].lms.dim(0) != net_cfg.bands)
        throw std::invalid_argument("checkpoint: band count does not match the dataset");

    Rng init_rng(cfg.seed);
    SsdiffNet net(net_cfg, init_rng);
    bool use_ema = cfg.sample_use_ema && !raw_weights;
    load_checkpoint_params(checkpoint, net, use_ema);
    NoiseSchedule sched = build_schedule(meta.schedule_T, meta.beta_start, meta.beta_end);

    fs::path dir(args.out);
    snapshot_config(cfg, dir);
    Rng rng(cfg.seed);
    std::vector<Array> fused;
    fused.reserve(data.size());
    for (size_t i = 0; i < data.size(); ++i) {
        fused.push_back(sample_scene(net, sched, data[i], cfg.sample_steps, rng,
                                     cfg.sample_method));
        std::cout << "sampled scene " << i + 1 << "/" << data.size() << "\n";
    }

    // fused alongside the inputs so evaluation needs only this container
    H5File out = H5File::create((dir / "fused.h5").string());
    int64_t n = static_cast<int64_t>(fused.size());
    Array stack({n, fused[0].dim(0), fused[0].dim(1), fused[0].dim(2)});
    for (int64_t i = 0; i < n; ++i)
        std::copy(fused[static_cast<size_t>(i)].data(),
                  fused[static_cast<size_t>(i)].data() + fused[static_cast<size_t>(i)].size(),
                  stack.data() + i * fused[0].size());
    out.write("fused", stack);
    auto write_stack = [&](const char* key, auto getter) {
        const Array& first = getter(data[0]);
        if (first.empty()) return;
        Array s({n, first.dim(0), first.dim(1), first.dim(2)});
        for (int64_t i = 0; i < n; ++i) {
            const Array& a = getter(data[static_cast<size_t>(i)]);
            std::copy(a.data(), a.data() + a.size(), s.data() + i * a.size());
        }
        out.write(key, s);
    };
    write_stack("gt", [](const SceneSample& s) -> const Array& { return s.gt; });
    write_stack("lms", [](const SceneSample& s) -> const Array& { return s.lms; });
    write_stack("ms", [](const SceneSample& s) -> const Array& { return s.ms; });
    write_stack("pan", [](const SceneSample& s) -> const Array& { return s.pan; });
    out.write_attr("max_value", 1.0);
    std::cout << "wrote " << dir / "fused.h5" << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& fused_path) {
    RunConfig cfg = build_config(args);
    H5File in = H5File::open_readonly(fused_path);
    if (!in.exists("fused")) throw std::invalid_argument("eval: container lacks a 'fused' dataset");
    Array fused_stack = in.read("fused");
    std::vector<SceneSample> refs = load_dataset(fused_path, 1.0);
    int64_t n = fused_stack.dim(0);
    std::vector<Array> fused;
    for (int64_t i = 0; i < n; ++i) {
        Array f({fused_stack.dim(1), fused_stack.dim(2), fused_stack.dim(3)});
        std::copy(fused_stack.data() + i * f.size(), fused_stack.data() + (i + 1) * f.size(),
                  f.data());
        fused.push_back(std::move(f));
    }

    fs::path dir(args.out);
    snapshot_config(cfg, dir);
    MetricsReport report;
    if (cfg.metrics_mode == "reduced") {
        std::vector<Array> gts;
        for (auto& r : refs) {
            if (r.gt.empty())
                throw std::invalid_argument("eval: reduced mode requires gt in the container");
            gts.push_back(r.gt);
        }
        report = evaluate_reduced(fused, gts, cfg.ratio, cfg.q2n_block);
    } else {
        cfg.network.bands = static_cast<int>(fused[0].dim(0));
        report = evaluate_full(fused, refs, cfg.mtf_profile(), cfg.ratio, cfg.q2n_block,
                               cfg.dlambda_variant == "khan");
    }
    std::ofstream rep(dir / "report.txt");
    rep << report.to_text();
    for (int64_t i = 0; i < n; ++i) {
        std::string idx = std::to_string(i);
        write_png_rgb((dir / ("fused_" + idx + ".png")).string(), rgb_preview(fused[static_cast<size_t>(i)]));
        if (!refs[static_cast<size_t>(i)].gt.empty()) {
            write_png_rgb((dir / ("error_" + idx + ".png")).string(),
                          error_heatmap(fused[static_cast<size_t>(i)], refs[static_cast<size_t>(i)].gt));
        }
    }
    std::cout << report.to_text();
    std::cout << "report and figures written to " << dir << "\n";
    return 0;
}

int cmd_ablate(const CommonArgs& args, std::vector<int> variants) {
    RunConfig cfg = build_config(args);
    if (variants.empty()) variants = {3, 4, 5};
    std::vector<SceneSample> data = load_dataset(resolve_data_path(cfg.data_path),
                                                 cfg.data_max_value);
    if (data.empty() || data[0].gt.empty())
        throw std::invalid_argument("data.path: ablation requires ground-truth scenes");
    cfg.network.bands = static_cast<int>(data[0].lms.dim(0));

    fs::path dir(args.out);
    fs::create_directories(dir);
    nlohmann::json summary;
    for (int v : variants) {
        RunConfig vc = cfg;
        vc.network.variant = v;
        fs::path vdir = dir / ("V" + std::to_string(v));
        snapshot_config(vc, vdir);
        Rng init_rng(vc.seed);
        SsdiffNet net(vc.network, init_rng);
        Trainer trainer(net, build_schedule(vc.schedule_T, vc.beta_start, vc.beta_end), vc.train);
        std::vector<double> losses = run_training(trainer, data);
        trainer.save_checkpoint((vdir / "checkpoint.h5").string());
        size_t tail = std::min<size_t>(50, losses.size());
        double final_loss = 0.0;
        for (size_t i = losses.size() - tail; i < losses.size(); ++i) final_loss += losses[i];
        final_loss /= static_cast<double>(tail);
        summary["V" + std::to_string(v)] = {{"first_loss", losses.front()},
                                            {"final_loss", final_loss},
                                            {"params", net.param_count()}};
        std::cout << "V" << v << ": first " << losses.front() << " final " << final_loss
                  << " params " << net.param_count() << "\n";
    }
    std::ofstream out(dir / "ablation.json");
    out << summary.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SSDiff pansharpening toolkit"};
    app.require_subcommand(1);

    CommonArgs synth_args, train_args, sample_args, eval_args, ablate_args;
    std::string resume, checkpoint, fused_path;
    bool raw_weights = false;
    std::vector<int> variants;

    auto* synth = app.add_subcommand("synth", "Write a synthetic gt/lms/ms/pan dataset");
    add_common(synth, synth_args);

    auto* train = app.add_subcommand("train", "Train (and L-BAF fine-tune) the denoiser");
    add_common(train, train_args);
    train->add_option("--resume", resume, "Checkpoint to resume from");

    auto* sample = app.add_subcommand("sample", "Sample fused images from a checkpoint");
    add_common(sample, sample_args);
    sample->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
    sample->add_flag("--raw-weights", raw_weights, "Use raw weights instead of EMA");

    auto* eval = app.add_subcommand("eval", "Evaluate fused images and emit figures");
    add_common(eval, eval_args);
    eval->add_option("--fused", fused_path, "Container produced by `sample`")->required();

    auto* ablate = app.add_subcommand("ablate", "Train ablation variants under one budget");
    add_common(ablate, ablate_args);
    ablate->add_option("--variants", variants, "Variant ids (default 3 4 5)")->take_all();

    CLI11_PARSE(app, argc, argv);
    try {
        if (synth->parsed()) return cmd_synth(synth_args);
        if (train->parsed()) return cmd_train(train_args, resume);
        if (sample->parsed()) return cmd_sample(sample_args, checkpoint, raw_weights);
        if (eval->parsed()) return cmd_eval(eval_args, fused_path);
        if (ablate->parsed()) return cmd_ablate(ablate_args, variants);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
