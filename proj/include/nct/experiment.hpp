#pragma once

#include "nct/stream.hpp"
#include "nct/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

namespace nct {

struct PlanParams {
    int base_classes = 10;
    int steps = 5;
    int per_step = 2;
    int shots = 5;
    double rho = 0.05;
    int n_max = 100;
    LongTailOrder order = LongTailOrder::Ordered;

    friend bool operator==(const PlanParams&, const PlanParams&) = default;
};

/// Everything one `run` needs. The root seed is split per module: stream data,
/// session sampler, and trainer (terminus, init, shuffling) each get their own.
struct ExperimentConfig {
    TrainerConfig trainer;
    SyntheticTaskSpec task;
    PlanParams plan;
    std::uint64_t seed = 0;
    bool deterministic = true;
    /// Default output directory for `run`; the command line can override it.
    std::string output_dir;

    /// Copies with the per-module seeds derived from `seed`.
    TrainerConfig resolved_trainer() const;
    SyntheticTaskSpec resolved_task() const;
    std::uint64_t plan_seed() const;
    SessionPlan make_plan() const;
};

bool operator==(const TrainerConfig& a, const TrainerConfig& b);
bool operator==(const SyntheticTaskSpec& a, const SyntheticTaskSpec& b);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

/// Flat `key = value` text with `[section]` headers (run, stream, plan,
/// trainer). `#` starts a comment. Unknown sections or keys are ConfigErrors.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string emit_config(const ExperimentConfig& config);

/// Per-session metrics row:
/// t,A_t,avg_cross_cos_each,avg_cross_cos_acc,avg_self_cos_each,avg_self_cos_acc,trace_ratio_each,trace_ratio_acc
void write_metrics_csv(std::ostream& out, const RunReport& report, Split split);
/// {A, PD, per_session:[...], warnings:[...]}
std::string summary_json(const RunReport& report, const ExperimentConfig& config);

/// Runs the configured stream and writes train_metrics.csv, test_metrics.csv
/// and summary.json under `out_dir`.
RunReport run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

}  // namespace nct
