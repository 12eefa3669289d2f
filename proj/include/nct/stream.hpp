#pragma once

#include "nct/types.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nct {

/// Gaussian-mixture stand-in for an image dataset: class means are seeded
/// random directions scaled to `radius`, samples add isotropic noise.
struct SyntheticTaskSpec {
    Eigen::Index input_dim = 16;
    int num_classes = 20;
    double radius = 4.0;
    double sigma = 1.0;
    int train_per_class = 100;
    int test_per_class = 50;
    std::uint64_t seed = 0;

    /// input_dim x num_classes, deterministic in `seed`.
    Matrix class_means() const;
};

enum class SessionMode { Normal, LongTail, FewShot };
enum class LongTailOrder { Ordered, Shuffled };
enum class Split { Train, Test };

std::string_view session_mode_name(SessionMode mode) noexcept;
SessionMode parse_session_mode(std::string_view text);
std::string_view long_tail_order_name(LongTailOrder order) noexcept;
LongTailOrder parse_long_tail_order(std::string_view text);

struct SessionDescriptor {
    int t = 0;
    std::vector<ClassId> classes;
    SessionMode mode = SessionMode::Normal;
    std::vector<int> counts;  // train samples per class, aligned with `classes`

    int min_count() const;
    int total_count() const;
};

struct SessionPlan {
    std::vector<SessionDescriptor> sessions;
    std::uint64_t seed = 0;

    std::size_t total_classes() const;
    /// Classes seen in sessions 0..t.
    std::vector<ClassId> classes_through(int t) const;

    std::string to_json() const;
    static SessionPlan from_json(std::string_view text);

    friend bool operator==(const SessionPlan&, const SessionPlan&) = default;
};

bool operator==(const SessionDescriptor& a, const SessionDescriptor& b);

/// Base session of k0 classes then `steps` sessions of `per_step` classes, all
/// at full per-class counts. Throws NotEnoughClasses.
SessionPlan plan_cil(int k0, int steps, int per_step, const SyntheticTaskSpec& task);

/// Same layout with counts n_k = round(n_max * rho^(rank_k / (K-1))) over the
/// global class ranking (identity order, or a seeded permutation), clamped to >= 1.
SessionPlan plan_ltcil(int k0, int steps, int per_step, double rho, int n_max,
                       LongTailOrder order, std::uint64_t seed, const SyntheticTaskSpec& task);

/// Full base session then `steps` sessions of p classes x q samples.
SessionPlan plan_fscil(int k0, int steps, int ways, int shots, const SyntheticTaskSpec& task);

/// Uniform mode draw per incremental session; exposed for frequency checks.
std::vector<SessionMode> sample_session_modes(int steps, std::uint64_t seed);

/// Generalized stream: normal base session, then per session a uniformly drawn
/// mode and `per_step` classes drawn from the unseen pool. Long-tail sessions
/// decay over their own classes from the full count down to round(full * rho);
/// few-shot sessions use `shots` samples per class.
SessionPlan plan_gcil(int k0, int steps, int per_step, int shots, double rho,
                      std::uint64_t seed, const SyntheticTaskSpec& task);

struct SessionBatch {
    int t = 0;
    Matrix inputs;  // input_dim x n
    std::vector<ClassId> labels;
};

/// Training batches follow the plan counts; test batches always hold
/// `test_per_class` samples of every class in the session. Each (class, split)
/// pair draws from its own seeded stream, so train and test never share draws.
std::vector<SessionBatch> materialize(const SessionPlan& plan, const SyntheticTaskSpec& task,
                                      Split split);

}  // namespace nct
