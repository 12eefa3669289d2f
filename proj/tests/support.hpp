#pragma once

// Independent reference implementations used by the unit and acceptance tests.
// Nothing here calls into the library's loss or metric code.

#include "nct/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

namespace nct::testing {

/// Central differences of a scalar function of a vector.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                               double step = 1e-5) {
    Vector g(x.size());
    Vector probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = probe(i);
        probe(i) = keep + step;
        const double up = f(probe);
        probe(i) = keep - step;
        const double down = f(probe);
        probe(i) = keep;
        g(i) = (up - down) / (2.0 * step);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||), with an absolute floor for vanishing gradients.
inline double relative_error(const Vector& a, const Vector& b, double floor = 1e-8) {
    const double scale = std::max({a.norm(), b.norm(), floor});
    return (a - b).norm() / scale;
}

inline double relative_error(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline Vector random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
    return v;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
    return m;
}

inline double plain_cosine(const Vector& a, const Vector& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

struct ClassStats {
    std::map<ClassId, Vector> means;
    std::map<ClassId, int> counts;
    Vector global;
};

inline ClassStats brute_class_stats(const Matrix& x, const std::vector<ClassId>& y,
                                    const std::vector<ClassId>& scope) {
    ClassStats s;
    s.global = Vector::Zero(x.rows());
    int total = 0;
    for (ClassId c : scope) {
        s.means[c] = Vector::Zero(x.rows());
        s.counts[c] = 0;
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!s.means.count(y[i])) continue;
        s.means[y[i]] += x.col(static_cast<Eigen::Index>(i));
        s.counts[y[i]] += 1;
        s.global += x.col(static_cast<Eigen::Index>(i));
        ++total;
    }
    for (auto& [c, m] : s.means) m /= s.counts[c];
    s.global /= total;
    return s;
}

/// Mean over ordered pairs k != k' of cos(m_k - m_G, w_k').
inline double brute_cross_cos(const Matrix& x, const std::vector<ClassId>& y, const Matrix& w,
                              const std::vector<ClassId>& scope) {
    const auto s = brute_class_stats(x, y, scope);
    double sum = 0.0;
    int pairs = 0;
    for (ClassId a : scope)
        for (ClassId b : scope) {
            if (a == b) continue;
            sum += plain_cosine(s.means.at(a) - s.global, w.col(b));
            ++pairs;
        }
    return sum / pairs;
}

inline double brute_self_cos(const Matrix& x, const std::vector<ClassId>& y, const Matrix& w,
                             const std::vector<ClassId>& scope) {
    const auto s = brute_class_stats(x, y, scope);
    double sum = 0.0;
    for (ClassId a : scope) sum += plain_cosine(s.means.at(a) - s.global, w.col(a));
    return sum / static_cast<double>(scope.size());
}

/// tr(Sigma_W) / tr(Sigma_B); Sigma_W = Avg_k Avg_i (x - m_k)(x - m_k)^T,
/// Sigma_B = Avg_k (m_k - m_G)(m_k - m_G)^T.
inline double brute_trace_ratio(const Matrix& x, const std::vector<ClassId>& y,
                                const std::vector<ClassId>& scope) {
    const auto s = brute_class_stats(x, y, scope);
    double within = 0.0;
    for (ClassId c : scope) {
        double per_class = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] != c) continue;
            const Vector d = x.col(static_cast<Eigen::Index>(i)) - s.means.at(c);
            for (Eigen::Index r = 0; r < d.size(); ++r) per_class += d(r) * d(r);
        }
        within += per_class / s.counts.at(c);
    }
    within /= static_cast<double>(scope.size());
    double between = 0.0;
    for (ClassId c : scope) {
        const Vector d = s.means.at(c) - s.global;
        for (Eigen::Index r = 0; r < d.size(); ++r) between += d(r) * d(r);
    }
    between /= static_cast<double>(scope.size());
    return within / between;
}

}  // namespace nct::testing
