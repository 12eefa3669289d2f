#pragma once

#include "nct/types.hpp"

#include <iosfwd>
#include <span>
#include <vector>

namespace nct {

/// Mean of the per-session accuracies A_t. Throws EmptyList.
double average_incremental_accuracy(std::span<const double> accuracies);
/// A_0 - A_T. Throws EmptyList.
double performance_drop(std::span<const double> accuracies);

/// Fraction of equal entries.
double top1_accuracy(std::span<const ClassId> predicted, std::span<const ClassId> truth);

// Neural-collapse diagnostics. `features` holds one sample per column,
// `prototypes` one column per class id, and `scope` selects the classes (and
// thereby the samples) that enter the statistic. The global mean is taken over
// the in-scope samples. Every scoped class needs at least one sample.

/// Avg over ordered pairs k != k' of cos(m_k - m_G, w_k'). Throws TooFewClasses.
double nc_cross_cos(const Matrix& features, std::span<const ClassId> labels,
                    const Matrix& prototypes, std::span<const ClassId> scope);

/// Avg over k of cos(m_k - m_G, w_k).
double nc_self_cos(const Matrix& features, std::span<const ClassId> labels,
                   const Matrix& prototypes, std::span<const ClassId> scope);

/// tr(Sigma_W) / tr(Sigma_B). Throws TooFewClasses or DegenerateBetweenClass.
double trace_ratio(const Matrix& features, std::span<const ClassId> labels,
                   std::span<const ClassId> scope);

struct NcDiagnostics {
    double avg_cross_cos = 0.0;
    double avg_self_cos = 0.0;
    double trace_ratio = 0.0;
};

/// All three statistics; any that is undefined for the scope comes back NaN.
NcDiagnostics nc_diagnostics(const Matrix& features, std::span<const ClassId> labels,
                             const Matrix& prototypes, std::span<const ClassId> scope);

/// Dump layout: header `n d`, then one row per sample: label and d values.
void write_feature_dump(std::ostream& out, const Matrix& features, std::span<const ClassId> labels);
void read_feature_dump(std::istream& in, Matrix& features, std::vector<ClassId>& labels);

}  // namespace nct
