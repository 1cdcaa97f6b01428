#include "fetalpose/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fetalpose/errors.hpp"
#include "fetalpose/eval/evaluate.hpp"
#include "fetalpose/phantom.hpp"
#include "fetalpose/train/trainer.hpp"

namespace fs = std::filesystem;

namespace fetalpose {

namespace {

// Layering: defaults -> config file -> --set overrides. Dedicated flags are
// translated into --set pairs by each subcommand before this runs.
RunConfig build_config(const std::string& config_path,
                       const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config_file(config_path, cfg);
    for (const auto& kv : overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.apply_kv(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
}

int cmd_gen_data(const std::string& config_path, const std::vector<std::string>& overrides,
                 int count, const std::string& out, long long seed_flag) {
    RunConfig cfg = build_config(config_path, overrides);
    if (seed_flag >= 0) cfg.seed = static_cast<uint64_t>(seed_flag);
    fs::create_directories(out);

    std::ostringstream manifest;
    for (int i = 0; i < count; ++i) {
        const uint64_t vseed = derive_seed(cfg.seed, "data", static_cast<uint64_t>(i));
        LabeledVolume v = generate_phantom(cfg.phantom, vseed);
        char name[64];
        std::snprintf(name, sizeof(name), "vol_%05d.lsv", i);
        save_volume(v, (fs::path(out) / name).string());
        manifest << i << " " << name << " " << vseed << "\n";
    }
    write_text_file(fs::path(out) / "manifest.txt", manifest.str());
    std::cout << "wrote " << count << " volumes to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& data_path, const std::string& out, bool deterministic,
              const std::string& resume, long long steps_flag) {
    RunConfig cfg;
    if (!resume.empty()) {
        cfg = read_checkpoint_config(resume);
        if (!config_path.empty()) cfg = load_config_file(config_path, cfg);
    } else if (!config_path.empty()) {
        cfg = load_config_file(config_path, cfg);
    }
    for (const auto& kv : overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.apply_kv(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (deterministic) {
        cfg.synchronous = true;
        cfg.n_actors = 1;
        cfg.m_learners = 1;
    }
    if (steps_flag >= 0) cfg.total_learner_steps = static_cast<uint64_t>(steps_flag);
    if (!out.empty()) cfg.out_dir = out;
    cfg.validate();

    Dataset data = Dataset::from_manifest(data_path);
    Trainer trainer(cfg, std::move(data));
    if (resume.empty()) {
        trainer.init_fresh();
        trainer.set_output(cfg.out_dir, /*append_metrics=*/false);
    } else {
        trainer.set_output(cfg.out_dir, /*append_metrics=*/true);
        trainer.load_checkpoint(resume);
    }
    write_text_file(fs::path(cfg.out_dir) / "config.txt", cfg.to_text());

    trainer.run();
    trainer.save_checkpoint((fs::path(cfg.out_dir) / "checkpoint.lsc").string());
    std::cout << "trained to learner step " << trainer.global().applied_count()
              << ", checkpoint at " << (fs::path(cfg.out_dir) / "checkpoint.lsc").string() << "\n";
    return 0;
}

// Test hook: places every agent on the ground truth, bypassing the network.
struct OraclePolicy {};

int cmd_eval(const std::string& checkpoint, const std::string& data_path, int repeats,
             double threshold_mm, const std::string& out, bool oracle_stub) {
    Dataset data = Dataset::from_manifest(data_path);

    EvalResult result;
    RunConfig cfg;
    if (oracle_stub) {
        // Oracle placement: preds := gts (rounded); exercises the metric and
        // report paths without a trained model.
        std::vector<MetricAccumulator> accs(std::max(1, repeats));
        for (auto& acc : accs) {
            for (const auto& v : data.volumes) {
                std::array<IVec3, kNumLandmarks> pred{};
                for (int k = 0; k < kNumLandmarks; ++k) {
                    pred[k] = {static_cast<int>(std::lround(v->landmarks_gt[k].x)),
                               static_cast<int>(std::lround(v->landmarks_gt[k].y)),
                               static_cast<int>(std::lround(v->landmarks_gt[k].z))};
                }
                acc.add(pred, v->landmarks_gt, v->spacing_mm, threshold_mm);
            }
        }
        result.n_volumes = static_cast<int>(data.volumes.size());
        result.n_repeats = repeats;
        result.threshold_mm = threshold_mm;
        for (int k = 0; k < kNumLandmarks; ++k) {
            result.pck_per_landmark[k] = pck(accs[0])[k];
            result.mean_mm_per_landmark[k] = mean_error(accs[0])[k];
        }
        result.aggregate_pck = aggregate_pck(accs[0]);
        result.aggregate_mean_mm = aggregate_mean_error(accs[0]);
        for (int k = 0; k < kNumLandmarks; ++k) {
            result.macro_pck += result.pck_per_landmark[k] / kNumLandmarks;
            result.macro_mean_mm += result.mean_mm_per_landmark[k] / kNumLandmarks;
        }
    } else {
        auto [loaded_cfg, params] = load_checkpoint_params(checkpoint);
        cfg = std::move(loaded_cfg);
        result = evaluate_dataset(data.volumes, params, repeats, derive_seed(cfg.seed, "eval"),
                                  threshold_mm, cfg.eval_max_steps, cfg.inner_fraction,
                                  cfg.action_step);
    }

    const std::string report = format_report(result);
    std::cout << report;
    if (!out.empty()) {
        fs::create_directories(out);
        write_text_file(fs::path(out) / "eval_report.txt", report);
        write_text_file(fs::path(out) / "eval_metrics.csv", format_csv(result));
    }
    return 0;
}

int cmd_beta_sweep(const std::string& config_path, const std::vector<std::string>& overrides,
                   const std::string& data_path, const std::string& eval_data_path,
                   const std::string& out, std::vector<double> betas) {
    RunConfig cfg = build_config(config_path, overrides);
    if (!out.empty()) cfg.out_dir = out;
    if (betas.empty()) betas = {0.0, 1.0, 2.0, 5.0};

    Dataset train_data = Dataset::from_manifest(data_path);
    Dataset eval_data = Dataset::from_manifest(eval_data_path);

    fs::create_directories(cfg.out_dir);
    const auto rows = beta_sweep(train_data, eval_data.volumes, cfg, betas, cfg.out_dir);
    const std::string summary = format_beta_summary(rows);
    std::cout << summary;
    write_text_file(fs::path(cfg.out_dir) / "beta_summary.csv", summary);
    return 0;
}

int cmd_trace(const std::string& checkpoint, const std::string& volume_path,
              const std::string& out, long long seed_flag, int max_steps) {
    const LabeledVolume v = load_volume(volume_path);
    auto [cfg, params] = load_checkpoint_params(checkpoint);

    const uint64_t seed =
        seed_flag >= 0 ? static_cast<uint64_t>(seed_flag) : derive_seed(cfg.seed, "trace");
    Rng rng(seed);
    const int steps = max_steps > 0 ? max_steps : cfg.eval_max_steps;
    const auto res =
        run_inference(v, params, steps, rng, cfg.inner_fraction, cfg.action_step);
    write_trace(res.trace, out);
    std::cout << "wrote traces for " << kNumLandmarks << " agents to " << out << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"multi-agent deep-Q landmark detection on labeled volumes"};
    app.require_subcommand(1);

    std::string config_path, data_path, eval_data_path, out, checkpoint, volume_path, resume;
    std::vector<std::string> overrides;
    int count = 10;
    long long seed_flag = -1, steps_flag = -1;
    bool deterministic = false, oracle_stub = false;
    int repeats = 3, max_steps = 0;
    double threshold_mm = 10.0;
    std::vector<double> betas;

    auto* gen = app.add_subcommand("gen-data", "generate labeled phantom volumes + manifest");
    gen->add_option("--count", count, "number of volumes");
    gen->add_option("--spec,--config", config_path, "config file with phantom.* keys");
    gen->add_option("--seed", seed_flag, "root seed override");
    gen->add_option("--out", out, "output directory")->required();
    gen->add_option("--set", overrides, "key=value override (repeatable)");

    auto* train = app.add_subcommand("train", "run the actor/learner trainer");
    train->add_option("--config", config_path, "config file");
    train->add_option("--data", data_path, "training manifest")->required();
    train->add_option("--out", out, "output directory");
    train->add_flag("--deterministic", deterministic, "1 actor / 1 learner synchronous mode");
    train->add_option("--resume", resume, "checkpoint to resume from");
    train->add_option("--steps", steps_flag, "total learner steps override");
    train->add_option("--set", overrides, "key=value override (repeatable)");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    ev->add_option("--checkpoint", checkpoint, "checkpoint file");
    ev->add_option("--data", data_path, "evaluation manifest")->required();
    ev->add_option("--repeats", repeats, "evaluation repeats");
    ev->add_option("--threshold-mm", threshold_mm, "PCK threshold in mm");
    ev->add_option("--out", out, "directory for report + csv");
    ev->add_flag("--oracle-stub", oracle_stub, "test hook: place agents at ground truth");

    auto* sweep = app.add_subcommand("beta-sweep", "train and evaluate one model per beta");
    sweep->add_option("--config", config_path, "config file");
    sweep->add_option("--data", data_path, "training manifest")->required();
    sweep->add_option("--eval-data", eval_data_path, "held-out manifest")->required();
    sweep->add_option("--out", out, "output directory")->required();
    sweep->add_option("--betas", betas, "beta values (default 0 1 2 5)");
    sweep->add_option("--set", overrides, "key=value override (repeatable)");

    auto* trace = app.add_subcommand("trace", "export per-agent search paths");
    trace->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    trace->add_option("--volume", volume_path, "LSV1 volume")->required();
    trace->add_option("--out", out, "output directory")->required();
    trace->add_option("--seed", seed_flag, "initialization seed");
    trace->add_option("--max-steps", max_steps, "rollout cap");

    std::vector<const char*> argv;
    argv.push_back("fetalpose");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e);
            return code == 0 ? 0 : 2;
        }
        if (gen->parsed()) return cmd_gen_data(config_path, overrides, count, out, seed_flag);
        if (train->parsed()) {
            return cmd_train(config_path, overrides, data_path, out, deterministic, resume,
                             steps_flag);
        }
        if (ev->parsed()) {
            if (!oracle_stub && checkpoint.empty()) {
                throw ConfigError("eval needs --checkpoint (or --oracle-stub)");
            }
            return cmd_eval(checkpoint, data_path, repeats, threshold_mm, out, oracle_stub);
        }
        if (sweep->parsed()) {
            return cmd_beta_sweep(config_path, overrides, data_path, eval_data_path, out, betas);
        }
        if (trace->parsed()) return cmd_trace(checkpoint, volume_path, out, seed_flag, max_steps);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace fetalpose
