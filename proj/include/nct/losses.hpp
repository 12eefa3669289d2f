#pragma once

#include "nct/etf_terminus.hpp"
#include "nct/types.hpp"

#include <span>

namespace nct {

/// Loss value plus its gradient with respect to the raw (unnormalized) feature;
/// the l2-normalization Jacobian is already applied.
struct LossValueAndGrad {
    double value = 0.0;
    Vector grad;
};

/// Features at or below this norm cannot be normalized.
inline constexpr double kZeroFeatureNorm = 1e-12;

/// 0.5 * (w^T mu_hat - 1)^2 for a unit prototype w. Throws ZeroFeature.
LossValueAndGrad misalignment_loss(const Vector& feature, const Vector& prototype);

/// 0.5 * (prev_hat^T now_hat - 1)^2; `feature_prev` is a constant (teacher output).
LossValueAndGrad distillation_loss(const Vector& feature_now, const Vector& feature_prev);

/// align + lambda * distill for both value and gradient.
LossValueAndGrad combined_loss(const LossValueAndGrad& align, const LossValueAndGrad& distill,
                               double lambda_eff);

/// Softmax cross entropy over logits scale * w_k^T mu_hat restricted to
/// `active_classes`. Throws LabelInactive if `label` is not active.
LossValueAndGrad cross_entropy_fixed(const Vector& feature, const EtfTerminus& terminus,
                                     std::span<const ClassId> active_classes, ClassId label,
                                     double scale);

/// -log softmax(logits)[label] and its gradient with respect to the logits.
LossValueAndGrad softmax_cross_entropy(const Vector& logits, Eigen::Index label);

}  // namespace nct
