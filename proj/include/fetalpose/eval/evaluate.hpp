#pragma once

#include <array>
#include <string>
#include <vector>

#include "fetalpose/nn/qnet.hpp"
#include "fetalpose/train/trainer.hpp"
#include "fetalpose/volume.hpp"

namespace fetalpose {

// Visited positions per agent, initialization through stop. Consecutive
// entries differ by at most action_step per axis.
struct PathTrace {
    std::array<std::vector<IVec3>, kNumLandmarks> positions;
};

struct InferenceResult {
    std::array<IVec3, kNumLandmarks> final_positions{};
    PathTrace trace;
};

// Greedy rollout (eps = 0) from random initial positions in the central box.
// An agent stops early when its position repeats the position it held two
// steps earlier; its reported position is then the midpoint of the 2-cycle,
// rounded to the nearest voxel. Everything else stops at max_steps.
InferenceResult run_inference(const LabeledVolume& v, nn::QFunction& qf, int max_steps, Rng& rng,
                              double inner_fraction = 0.15, int action_step = 1);
InferenceResult run_inference(const LabeledVolume& v, nn::QNetwork<float>& params, int max_steps,
                              Rng& rng, double inner_fraction = 0.15, int action_step = 1);

// PCK (percentage within threshold_mm, closed boundary) and mean error (mm),
// per landmark and micro-aggregated over all (landmark, volume) pairs.
// Distances use per-axis voxel spacing.
struct MetricAccumulator {
    std::array<double, kNumLandmarks> sum_err_mm{};
    std::array<int, kNumLandmarks> hits{};
    int n_volumes = 0;

    void add(const std::array<IVec3, kNumLandmarks>& pred,
             const std::array<Vec3, kNumLandmarks>& gt, const Vec3& spacing_mm,
             double threshold_mm);
};

std::array<double, kNumLandmarks> pck(const MetricAccumulator& acc);        // percent
std::array<double, kNumLandmarks> mean_error(const MetricAccumulator& acc);  // mm
double aggregate_pck(const MetricAccumulator& acc);
double aggregate_mean_error(const MetricAccumulator& acc);

struct EvalResult {
    std::array<double, kNumLandmarks> pck_per_landmark{};      // mean over repeats
    std::array<double, kNumLandmarks> pck_sd{};                // sd over repeats
    std::array<double, kNumLandmarks> mean_mm_per_landmark{};  // mean over repeats
    std::array<double, kNumLandmarks> mean_mm_sd{};
    double aggregate_pck = 0.0, aggregate_pck_sd = 0.0;
    double aggregate_mean_mm = 0.0, aggregate_mean_mm_sd = 0.0;
    double macro_pck = 0.0, macro_mean_mm = 0.0;  // landmark-averaged variant
    int n_volumes = 0;
    int n_repeats = 0;
    double threshold_mm = 10.0;
};

// Repeats the whole rollout pass with distinct initialization seeds derived
// from (seed, "eval", repeat) and aggregates mean +- sd across repeats.
EvalResult evaluate_dataset(const std::vector<std::shared_ptr<const LabeledVolume>>& volumes,
                            nn::QNetwork<float>& params, int repeats, uint64_t seed,
                            double threshold_mm = 10.0, int max_steps = 100,
                            double inner_fraction = 0.15, int action_step = 1);
EvalResult evaluate_dataset(const std::vector<std::shared_ptr<const LabeledVolume>>& volumes,
                            nn::QFunction& qf, int repeats, uint64_t seed,
                            double threshold_mm = 10.0, int max_steps = 100,
                            double inner_fraction = 0.15, int action_step = 1);

std::string format_report(const EvalResult& r);  // human-readable table
std::string format_csv(const EvalResult& r);     // landmark,pck,mean_mm,pck_sd,mean_mm_sd

// Trains one model per beta under identical seeds and budget, evaluates each
// on the held-out volumes, and returns (beta, result) rows.
struct BetaSweepRow {
    double beta = 0.0;
    EvalResult result;
    uint64_t seed = 0;
};
std::vector<BetaSweepRow> beta_sweep(const Dataset& train_data,
                                     const std::vector<std::shared_ptr<const LabeledVolume>>& eval_volumes,
                                     const RunConfig& base_cfg, const std::vector<double>& betas,
                                     const std::string& out_dir);
std::string format_beta_summary(const std::vector<BetaSweepRow>& rows);

// Trace export: one coordinate-list file per agent plus a flattened 2-D
// projection table for plotting.
void write_trace(const PathTrace& trace, const std::string& dir);

}  // namespace fetalpose
