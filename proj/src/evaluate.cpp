#include "fetalpose/eval/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fetalpose/dqn/policy.hpp"
#include "fetalpose/errors.hpp"

namespace fs = std::filesystem;

namespace fetalpose {

InferenceResult run_inference(const LabeledVolume& v, nn::QFunction& qf, int max_steps, Rng& rng,
                              double inner_fraction, int action_step) {
    const int S = qf.patch_size();
    const size_t p3 = static_cast<size_t>(S) * S * S;

    InferenceResult res;
    auto positions = initial_positions(v.dims, rng, inner_fraction);
    std::array<bool, kNumLandmarks> stopped{};
    std::array<IVec3, kNumLandmarks> two_back{};  // position held two steps earlier
    for (int k = 0; k < kNumLandmarks; ++k) {
        res.trace.positions[k].push_back(positions[k]);
        res.final_positions[k] = positions[k];
    }

    std::vector<float> patches(kNumLandmarks * p3);
    std::array<float, kNumLandmarks * kNumActions> q{};
    int n_stopped = 0;
    for (int t = 1; t <= max_steps && n_stopped < kNumLandmarks; ++t) {
        for (int k = 0; k < kNumLandmarks; ++k) {
            const auto p = extract_patch(v, positions[k], S);
            std::copy(p.begin(), p.end(), patches.begin() + k * p3);
        }
        qf.q_values(patches, q);
        const auto actions = select_actions(q.data(), 0.0, rng);

        for (int k = 0; k < kNumLandmarks; ++k) {
            if (stopped[k]) continue;
            const IVec3 cmp = two_back[k];
            two_back[k] = positions[k];
            const IVec3 d = action_delta(static_cast<Action>(actions[k]), action_step);
            positions[k] = clamp_to_volume(
                {positions[k].x + d.x, positions[k].y + d.y, positions[k].z + d.z}, v.dims);
            res.trace.positions[k].push_back(positions[k]);
            res.final_positions[k] = positions[k];

            if (t >= 2 && positions[k] == cmp) {
                // 2-cycle: report the midpoint of the oscillation pair,
                // rounded half away from zero.
                const IVec3 a = two_back[k], b = positions[k];
                res.final_positions[k] = {static_cast<int>(std::lround((a.x + b.x) / 2.0)),
                                          static_cast<int>(std::lround((a.y + b.y) / 2.0)),
                                          static_cast<int>(std::lround((a.z + b.z) / 2.0))};
                stopped[k] = true;
                ++n_stopped;
            }
        }
    }
    return res;
}

InferenceResult run_inference(const LabeledVolume& v, nn::QNetwork<float>& params, int max_steps,
                              Rng& rng, double inner_fraction, int action_step) {
    nn::NetworkQFunction qf(params);
    return run_inference(v, qf, max_steps, rng, inner_fraction, action_step);
}

void MetricAccumulator::add(const std::array<IVec3, kNumLandmarks>& pred,
                            const std::array<Vec3, kNumLandmarks>& gt, const Vec3& spacing_mm,
                            double threshold_mm) {
    for (int k = 0; k < kNumLandmarks; ++k) {
        const Vec3 d{(pred[k].x - gt[k].x) * spacing_mm.x, (pred[k].y - gt[k].y) * spacing_mm.y,
                     (pred[k].z - gt[k].z) * spacing_mm.z};
        const double dist = norm(d);
        sum_err_mm[k] += dist;
        if (dist <= threshold_mm) ++hits[k];
    }
    ++n_volumes;
}

std::array<double, kNumLandmarks> pck(const MetricAccumulator& acc) {
    std::array<double, kNumLandmarks> out{};
    for (int k = 0; k < kNumLandmarks; ++k) {
        out[k] = acc.n_volumes ? 100.0 * acc.hits[k] / acc.n_volumes : 0.0;
    }
    return out;
}

std::array<double, kNumLandmarks> mean_error(const MetricAccumulator& acc) {
    std::array<double, kNumLandmarks> out{};
    for (int k = 0; k < kNumLandmarks; ++k) {
        out[k] = acc.n_volumes ? acc.sum_err_mm[k] / acc.n_volumes : 0.0;
    }
    return out;
}

double aggregate_pck(const MetricAccumulator& acc) {
    if (!acc.n_volumes) return 0.0;
    int hits = 0;
    for (int k = 0; k < kNumLandmarks; ++k) hits += acc.hits[k];
    return 100.0 * hits / (acc.n_volumes * kNumLandmarks);
}

double aggregate_mean_error(const MetricAccumulator& acc) {
    if (!acc.n_volumes) return 0.0;
    double s = 0.0;
    for (int k = 0; k < kNumLandmarks; ++k) s += acc.sum_err_mm[k];
    return s / (acc.n_volumes * kNumLandmarks);
}

namespace {

void mean_sd(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    sd = 0.0;
    if (xs.empty()) return;
    for (double x : xs) mean += x;
    mean /= xs.size();
    if (xs.size() < 2) return;
    double s = 0.0;
    for (double x : xs) s += (x - mean) * (x - mean);
    sd = std::sqrt(s / (xs.size() - 1));
}

}  // namespace

EvalResult evaluate_dataset(const std::vector<std::shared_ptr<const LabeledVolume>>& volumes,
                            nn::QFunction& qf, int repeats, uint64_t seed, double threshold_mm,
                            int max_steps, double inner_fraction, int action_step) {
    if (volumes.empty()) throw Error("evaluate_dataset: no volumes");
    if (repeats < 1) throw Error("evaluate_dataset: repeats must be >= 1");

    std::vector<MetricAccumulator> per_repeat(repeats);
    for (int r = 0; r < repeats; ++r) {
        for (size_t vi = 0; vi < volumes.size(); ++vi) {
            Rng rng(derive_seed(seed, "eval-" + std::to_string(r), vi));
            const auto inf =
                run_inference(*volumes[vi], qf, max_steps, rng, inner_fraction, action_step);
            per_repeat[r].add(inf.final_positions, volumes[vi]->landmarks_gt,
                              volumes[vi]->spacing_mm, threshold_mm);
        }
    }

    EvalResult out;
    out.n_volumes = static_cast<int>(volumes.size());
    out.n_repeats = repeats;
    out.threshold_mm = threshold_mm;

    for (int k = 0; k < kNumLandmarks; ++k) {
        std::vector<double> ps, ms;
        for (int r = 0; r < repeats; ++r) {
            ps.push_back(pck(per_repeat[r])[k]);
            ms.push_back(mean_error(per_repeat[r])[k]);
        }
        mean_sd(ps, out.pck_per_landmark[k], out.pck_sd[k]);
        mean_sd(ms, out.mean_mm_per_landmark[k], out.mean_mm_sd[k]);
    }
    {
        std::vector<double> ps, ms;
        for (int r = 0; r < repeats; ++r) {
            ps.push_back(aggregate_pck(per_repeat[r]));
            ms.push_back(aggregate_mean_error(per_repeat[r]));
        }
        mean_sd(ps, out.aggregate_pck, out.aggregate_pck_sd);
        mean_sd(ms, out.aggregate_mean_mm, out.aggregate_mean_mm_sd);
    }
    for (int k = 0; k < kNumLandmarks; ++k) {
        out.macro_pck += out.pck_per_landmark[k] / kNumLandmarks;
        out.macro_mean_mm += out.mean_mm_per_landmark[k] / kNumLandmarks;
    }
    return out;
}

EvalResult evaluate_dataset(const std::vector<std::shared_ptr<const LabeledVolume>>& volumes,
                            nn::QNetwork<float>& params, int repeats, uint64_t seed,
                            double threshold_mm, int max_steps, double inner_fraction,
                            int action_step) {
    nn::NetworkQFunction qf(params);
    return evaluate_dataset(volumes, qf, repeats, seed, threshold_mm, max_steps, inner_fraction,
                            action_step);
}

std::string format_report(const EvalResult& r) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "PCK(%.1f mm) and mean error over %d volumes x %d repeats\n",
                  r.threshold_mm, r.n_volumes, r.n_repeats);
    os << buf;
    os << "landmark      pck_%    mean_mm   pck_sd  mean_sd\n";
    const auto& names = landmark_names();
    for (int k = 0; k < kNumLandmarks; ++k) {
        std::snprintf(buf, sizeof(buf), "%-12s %7.2f %9.3f %8.2f %8.3f\n", names[k].c_str(),
                      r.pck_per_landmark[k], r.mean_mm_per_landmark[k], r.pck_sd[k],
                      r.mean_mm_sd[k]);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-12s %7.2f %9.3f %8.2f %8.3f\n", "all", r.aggregate_pck,
                  r.aggregate_mean_mm, r.aggregate_pck_sd, r.aggregate_mean_mm_sd);
    os << buf;
    std::snprintf(buf, sizeof(buf), "%-12s %7.2f %9.3f\n", "all_macro", r.macro_pck,
                  r.macro_mean_mm);
    os << buf;
    return os.str();
}

std::string format_csv(const EvalResult& r) {
    std::ostringstream os;
    os << "landmark,pck,mean_mm,pck_sd,mean_mm_sd\n";
    char buf[160];
    const auto& names = landmark_names();
    for (int k = 0; k < kNumLandmarks; ++k) {
        std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%.4f,%.4f\n", names[k].c_str(),
                      r.pck_per_landmark[k], r.mean_mm_per_landmark[k], r.pck_sd[k],
                      r.mean_mm_sd[k]);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "all,%.4f,%.4f,%.4f,%.4f\n", r.aggregate_pck,
                  r.aggregate_mean_mm, r.aggregate_pck_sd, r.aggregate_mean_mm_sd);
    os << buf;
    std::snprintf(buf, sizeof(buf), "all_macro,%.4f,%.4f,,\n", r.macro_pck, r.macro_mean_mm);
    os << buf;
    return os.str();
}

std::vector<BetaSweepRow> beta_sweep(const Dataset& train_data,
                                     const std::vector<std::shared_ptr<const LabeledVolume>>& eval_volumes,
                                     const RunConfig& base_cfg, const std::vector<double>& betas,
                                     const std::string& out_dir) {
    std::vector<BetaSweepRow> rows;
    for (double beta : betas) {
        RunConfig cfg = base_cfg;
        cfg.reward.beta = beta;
        cfg.reward.use_structure_reward = true;

        Trainer trainer(cfg, train_data);
        trainer.init_fresh();
        if (!out_dir.empty()) {
            std::ostringstream sub;
            sub << out_dir << "/beta_" << beta;
            trainer.set_output(sub.str());
        }
        trainer.run();
        if (!out_dir.empty()) {
            std::ostringstream ck;
            ck << out_dir << "/beta_" << beta << "/checkpoint.lsc";
            trainer.save_checkpoint(ck.str());
        }

        auto params = trainer.current_params();
        BetaSweepRow row;
        row.beta = beta;
        row.seed = cfg.seed;
        row.result = evaluate_dataset(eval_volumes, params, cfg.eval_repeats,
                                      derive_seed(cfg.seed, "eval"), cfg.eval_threshold_mm,
                                      cfg.eval_max_steps, cfg.inner_fraction, cfg.action_step);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_beta_summary(const std::vector<BetaSweepRow>& rows) {
    std::ostringstream os;
    os << "beta,seed,pck,mean_mm,pck_sd,mean_mm_sd\n";
    char buf[160];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%g,%llu,%.4f,%.4f,%.4f,%.4f\n", row.beta,
                      static_cast<unsigned long long>(row.seed), row.result.aggregate_pck,
                      row.result.aggregate_mean_mm, row.result.aggregate_pck_sd,
                      row.result.aggregate_mean_mm_sd);
        os << buf;
    }
    return os.str();
}

void write_trace(const PathTrace& trace, const std::string& dir) {
    fs::create_directories(dir);
    const auto& names = landmark_names();
    for (int k = 0; k < kNumLandmarks; ++k) {
        std::ofstream os(fs::path(dir) / ("trace_" + names[k] + ".txt"));
        if (!os) throw IoError("cannot write trace file in " + dir);
        os << "# t x y z\n";
        for (size_t t = 0; t < trace.positions[k].size(); ++t) {
            const auto& p = trace.positions[k][t];
            os << t << " " << p.x << " " << p.y << " " << p.z << "\n";
        }
    }
    std::ofstream os(fs::path(dir) / "trace_2d.csv");
    if (!os) throw IoError("cannot write trace file in " + dir);
    os << "agent,t,x,y\n";
    for (int k = 0; k < kNumLandmarks; ++k) {
        for (size_t t = 0; t < trace.positions[k].size(); ++t) {
            const auto& p = trace.positions[k][t];
            os << names[k] << "," << t << "," << p.x << "," << p.y << "\n";
        }
    }
}

}  // namespace fetalpose
