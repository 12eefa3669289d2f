#include "nct/losses.hpp"

#include "nct/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace nct {

namespace {

double checked_norm(const Vector& v) {
    const double n = v.norm();
    if (!(n > kZeroFeatureNorm)) {
        throw Error(ErrorCode::ZeroFeature, "feature norm " + std::to_string(n) + " too small");
    }
    return n;
}

// d/dmu of 0.5 (t^T mu_hat - 1)^2 for a fixed unit target t.
LossValueAndGrad cosine_alignment(const Vector& feature, const Vector& target_unit) {
    const double norm = checked_norm(feature);
    const Vector unit = feature / norm;
    const double c = target_unit.dot(unit);
    LossValueAndGrad out;
    out.value = 0.5 * (c - 1.0) * (c - 1.0);
    out.grad = ((c - 1.0) / norm) * (target_unit - c * unit);
    return out;
}

}  // namespace

LossValueAndGrad misalignment_loss(const Vector& feature, const Vector& prototype) {
    if (feature.size() != prototype.size()) {
        throw Error(ErrorCode::ShapeMismatch, "feature and prototype dimensions differ");
    }
    return cosine_alignment(feature, prototype);
}

LossValueAndGrad distillation_loss(const Vector& feature_now, const Vector& feature_prev) {
    if (feature_now.size() != feature_prev.size()) {
        throw Error(ErrorCode::ShapeMismatch, "student and teacher feature dimensions differ");
    }
    const double prev_norm = checked_norm(feature_prev);
    return cosine_alignment(feature_now, feature_prev / prev_norm);
}

LossValueAndGrad combined_loss(const LossValueAndGrad& align, const LossValueAndGrad& distill,
                               double lambda_eff) {
    if (lambda_eff < 0.0) throw Error(ErrorCode::InvalidArgument, "lambda must be nonnegative");
    LossValueAndGrad out;
    out.value = align.value + lambda_eff * distill.value;
    if (lambda_eff == 0.0 || distill.grad.size() == 0) {
        out.grad = align.grad;
    } else {
        out.grad = align.grad + lambda_eff * distill.grad;
    }
    return out;
}

LossValueAndGrad softmax_cross_entropy(const Vector& logits, Eigen::Index label) {
    const double top = logits.maxCoeff();
    const Vector shifted = (logits.array() - top).exp().matrix();
    const double total = shifted.sum();
    LossValueAndGrad out;
    out.value = std::log(total) + top - logits(label);
    out.grad = shifted / total;
    out.grad(label) -= 1.0;
    return out;
}

LossValueAndGrad cross_entropy_fixed(const Vector& feature, const EtfTerminus& terminus,
                                     std::span<const ClassId> active_classes, ClassId label,
                                     double scale) {
    if (!(scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "scale must be positive");
    const auto pos = std::find(active_classes.begin(), active_classes.end(), label);
    if (pos == active_classes.end()) {
        throw Error(ErrorCode::LabelInactive, "label " + std::to_string(label) + " is not active");
    }
    if (feature.size() != terminus.dim()) {
        throw Error(ErrorCode::ShapeMismatch, "feature dimension differs from terminus");
    }
    const double norm = checked_norm(feature);
    const Vector unit = feature / norm;

    const auto k = static_cast<Eigen::Index>(active_classes.size());
    Matrix protos(terminus.dim(), k);
    for (Eigen::Index j = 0; j < k; ++j) protos.col(j) = terminus.prototype(active_classes[j]);

    const Vector logits = scale * (protos.transpose() * unit);
    LossValueAndGrad ce = softmax_cross_entropy(logits, pos - active_classes.begin());
    const Vector grad_unit = scale * (protos * ce.grad);
    ce.grad = (grad_unit - grad_unit.dot(unit) * unit) / norm;
    return ce;
}

}  // namespace nct
