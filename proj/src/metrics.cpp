#include "nct/metrics.hpp"

#include "nct/error.hpp"
#include "nct/text_format.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <string>

namespace nct {

double average_incremental_accuracy(std::span<const double> accuracies) {
    if (accuracies.empty()) throw Error(ErrorCode::EmptyList, "no session accuracies");
    return std::accumulate(accuracies.begin(), accuracies.end(), 0.0) /
           static_cast<double>(accuracies.size());
}

double performance_drop(std::span<const double> accuracies) {
    if (accuracies.empty()) throw Error(ErrorCode::EmptyList, "no session accuracies");
    return accuracies.front() - accuracies.back();
}

double top1_accuracy(std::span<const ClassId> predicted, std::span<const ClassId> truth) {
    if (predicted.size() != truth.size()) {
        throw Error(ErrorCode::ShapeMismatch, "prediction and label counts differ");
    }
    if (truth.empty()) throw Error(ErrorCode::EmptyList, "no samples to score");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

namespace {

struct ScopeStats {
    std::vector<ClassId> classes;
    Matrix class_means;  // d x K
    Vector global_mean;
    std::vector<double> within_sq;  // Avg_i ||x - m_k||^2 per class
};

ScopeStats scope_stats(const Matrix& features, std::span<const ClassId> labels,
                       std::span<const ClassId> scope, bool need_spread) {
    if (static_cast<std::size_t>(features.cols()) != labels.size()) {
        throw Error(ErrorCode::ShapeMismatch, "label count differs from feature count");
    }
    ScopeStats s;
    s.classes.assign(scope.begin(), scope.end());
    std::sort(s.classes.begin(), s.classes.end());
    s.classes.erase(std::unique(s.classes.begin(), s.classes.end()), s.classes.end());
    if (s.classes.size() < 2) throw Error(ErrorCode::TooFewClasses, "need at least two classes");

    std::map<ClassId, std::size_t> slot;
    for (std::size_t k = 0; k < s.classes.size(); ++k) slot[s.classes[k]] = k;
    const auto kcount = static_cast<Eigen::Index>(s.classes.size());
    s.class_means = Matrix::Zero(features.rows(), kcount);
    s.global_mean = Vector::Zero(features.rows());
    std::vector<int> counts(s.classes.size(), 0);
    int total = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto it = slot.find(labels[i]);
        if (it == slot.end()) continue;
        const auto col = static_cast<Eigen::Index>(i);
        s.class_means.col(static_cast<Eigen::Index>(it->second)) += features.col(col);
        s.global_mean += features.col(col);
        ++counts[it->second];
        ++total;
    }
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] == 0) {
            throw Error(ErrorCode::EmptyClass,
                        "class " + std::to_string(s.classes[k]) + " has no samples in scope");
        }
        s.class_means.col(static_cast<Eigen::Index>(k)) /= counts[k];
    }
    s.global_mean /= total;

    if (need_spread) {
        s.within_sq.assign(s.classes.size(), 0.0);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const auto it = slot.find(labels[i]);
            if (it == slot.end()) continue;
            const auto k = static_cast<Eigen::Index>(it->second);
            s.within_sq[it->second] +=
                (features.col(static_cast<Eigen::Index>(i)) - s.class_means.col(k)).squaredNorm();
        }
        for (std::size_t k = 0; k < counts.size(); ++k) s.within_sq[k] /= counts[k];
    }
    return s;
}

double cosine(const Vector& a, const Vector& b) {
    const double denom = a.norm() * b.norm();
    if (!(denom > 0.0)) return 0.0;
    return std::clamp(a.dot(b) / denom, -1.0, 1.0);
}

void check_prototypes(const Matrix& features, const Matrix& prototypes,
                      const std::vector<ClassId>& classes) {
    if (prototypes.rows() != features.rows()) {
        throw Error(ErrorCode::ShapeMismatch, "prototype dimension differs from features");
    }
    for (ClassId c : classes) {
        if (c < 0 || c >= prototypes.cols()) {
            throw Error(ErrorCode::IndexOutOfRange, "no prototype for class " + std::to_string(c));
        }
    }
}

}  // namespace

double nc_cross_cos(const Matrix& features, std::span<const ClassId> labels,
                    const Matrix& prototypes, std::span<const ClassId> scope) {
    const ScopeStats s = scope_stats(features, labels, scope, false);
    check_prototypes(features, prototypes, s.classes);
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t k = 0; k < s.classes.size(); ++k) {
        const Vector centered = s.class_means.col(static_cast<Eigen::Index>(k)) - s.global_mean;
        for (std::size_t j = 0; j < s.classes.size(); ++j) {
            if (j == k) continue;
            sum += cosine(centered, prototypes.col(s.classes[j]));
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

double nc_self_cos(const Matrix& features, std::span<const ClassId> labels,
                   const Matrix& prototypes, std::span<const ClassId> scope) {
    const ScopeStats s = scope_stats(features, labels, scope, false);
    check_prototypes(features, prototypes, s.classes);
    double sum = 0.0;
    for (std::size_t k = 0; k < s.classes.size(); ++k) {
        const Vector centered = s.class_means.col(static_cast<Eigen::Index>(k)) - s.global_mean;
        sum += cosine(centered, prototypes.col(s.classes[k]));
    }
    return sum / static_cast<double>(s.classes.size());
}

double trace_ratio(const Matrix& features, std::span<const ClassId> labels,
                   std::span<const ClassId> scope) {
    const ScopeStats s = scope_stats(features, labels, scope, true);
    double within = 0.0;
    double between = 0.0;
    for (std::size_t k = 0; k < s.classes.size(); ++k) {
        within += s.within_sq[k];
        between += (s.class_means.col(static_cast<Eigen::Index>(k)) - s.global_mean).squaredNorm();
    }
    const auto kcount = static_cast<double>(s.classes.size());
    within /= kcount;
    between /= kcount;
    if (!(between > 1e-12)) {
        throw Error(ErrorCode::DegenerateBetweenClass, "between-class trace is zero");
    }
    return within / between;
}

NcDiagnostics nc_diagnostics(const Matrix& features, std::span<const ClassId> labels,
                             const Matrix& prototypes, std::span<const ClassId> scope) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    NcDiagnostics d{nan, nan, nan};
    try {
        d.avg_cross_cos = nc_cross_cos(features, labels, prototypes, scope);
        d.avg_self_cos = nc_self_cos(features, labels, prototypes, scope);
        d.trace_ratio = trace_ratio(features, labels, scope);
    } catch (const Error&) {
    }
    return d;
}

void write_feature_dump(std::ostream& out, const Matrix& features, std::span<const ClassId> labels) {
    if (static_cast<std::size_t>(features.cols()) != labels.size()) {
        throw Error(ErrorCode::ShapeMismatch, "label count differs from feature count");
    }
    out << features.cols() << ' ' << features.rows() << '\n';
    for (Eigen::Index i = 0; i < features.cols(); ++i) {
        out << labels[static_cast<std::size_t>(i)];
        for (Eigen::Index r = 0; r < features.rows(); ++r) out << ' ' << format_double(features(r, i));
        out << '\n';
    }
}

void read_feature_dump(std::istream& in, Matrix& features, std::vector<ClassId>& labels) {
    Eigen::Index n = 0, d = 0;
    if (!(in >> n >> d) || n < 0 || d <= 0) throw Error(ErrorCode::ParseError, "bad dump header");
    features.resize(d, n);
    labels.assign(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(in >> labels[static_cast<std::size_t>(i)])) {
            throw Error(ErrorCode::ParseError, "truncated dump");
        }
        for (Eigen::Index r = 0; r < d; ++r) {
            std::string token;
            if (!(in >> token)) throw Error(ErrorCode::ParseError, "truncated dump");
            features(r, i) = parse_double(token);
        }
    }
}

}  // namespace nct
