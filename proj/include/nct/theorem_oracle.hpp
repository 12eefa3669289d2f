#pragma once

#include "nct/etf_terminus.hpp"
#include "nct/types.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace nct {

// Free-feature model: the backbone is replaced by one free variable per sample,
// constrained to the unit ball, and trained against the fixed terminus.

enum class OracleLoss { CrossEntropy, Misalignment };

std::string_view oracle_loss_name(OracleLoss loss) noexcept;
OracleLoss parse_oracle_loss(std::string_view text);

struct ClassCount {
    ClassId class_id = 0;
    int count = 0;
};

struct OracleProblem {
    EtfTerminus terminus;
    std::vector<std::vector<ClassCount>> sessions;
    OracleLoss loss = OracleLoss::Misalignment;
    std::uint64_t seed = 0;
};

struct OracleOptions {
    /// Step applied to each sample's own loss gradient, so the effective step
    /// on the session mean objective is step * N.
    double step = 0.5;
    int max_iterations = 20000;
    /// Stop once the largest per-feature move is below this.
    double tol = 1e-6;
    /// Double the step after each accepted iteration. A step that would raise
    /// the objective is always halved and retried.
    bool adaptive_step = true;
};

struct BlockConvergence {
    int iterations = 0;
    int halvings = 0;
    bool converged = false;
    double final_update = 0.0;
    std::vector<double> objective_history;  // accepted objectives, first entry is the start
};

struct OracleSolution {
    Matrix features;               // d x N_total, sessions in order
    std::vector<ClassId> labels;
    std::vector<int> session_of;
    std::vector<BlockConvergence> blocks;  // one per session, or one for a joint solve
    bool converged = false;
};

/// Objective of one session block: mean over its samples.
double oracle_objective(const Matrix& features, std::span<const ClassId> labels,
                        const EtfTerminus& terminus, OracleLoss loss);

/// Projected gradient descent, one session at a time (the objective separates
/// across sessions). Initial features are uniform in the ball of radius 0.1.
OracleSolution solve(const OracleProblem& problem, const OracleOptions& options);

/// Same problem treated as a single block summing the per-session objectives.
OracleSolution solve_joint(const OracleProblem& problem, const OracleOptions& options);

/// Throws NotConverged naming the first unconverged block.
void require_converged(const OracleSolution& solution);

/// Long-tail count profile from n_max down to round(n_max * rho), one entry per class.
std::vector<int> long_tail_counts(int classes, int n_max, double rho);

/// Split K classes (ids 0..K-1 with the given counts) into `sessions`
/// consecutive blocks as evenly as possible.
std::vector<std::vector<ClassCount>> split_sessions(std::span<const int> counts, int sessions);

struct TerminusResiduals {
    double residual_norm = 0.0;
    double residual_align = 0.0;
    double residual_cross = 0.0;
    bool pass = false;
};

/// max | ||m|| - 1 |, max | m^T w_y - 1 |, max | m^T w_k' - target | over k' != y.
TerminusResiduals check_nc_terminus(const Matrix& features, std::span<const ClassId> labels,
                                    const EtfTerminus& terminus, double tol);

}  // namespace nct
