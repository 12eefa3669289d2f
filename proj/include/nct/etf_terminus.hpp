#pragma once

#include "nct/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string_view>

namespace nct {

enum class FrameKind { SimplexEtf, OrthogonalFrame };

std::string_view frame_kind_name(FrameKind kind) noexcept;
/// Accepts "etf"/"simplex" and "orthogonal"/"of".
FrameKind parse_frame_kind(std::string_view text);

/// Fixed d x K prototype matrix covering the whole label space. Column k is the
/// unit prototype of class k. Immutable after construction.
class EtfTerminus {
public:
    /// Wraps an existing matrix without checking geometry. Used for loading
    /// files and for building deliberately corrupted fixtures.
    EtfTerminus(Matrix prototypes, FrameKind kind, std::uint64_t seed);

    Eigen::Index dim() const noexcept { return w_.rows(); }
    Eigen::Index size() const noexcept { return w_.cols(); }
    FrameKind kind() const noexcept { return kind_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const Matrix& matrix() const noexcept { return w_; }

    /// Column `class_id`; throws IndexOutOfRange.
    Vector prototype(ClassId class_id) const;

    /// Expected inner product between two distinct prototypes.
    double target_cross_cosine() const noexcept;

private:
    Matrix w_;
    FrameKind kind_;
    std::uint64_t seed_;
};

/// Orthonormalizes a seeded Gaussian d x K draw into U, then for the simplex
/// frame applies sqrt(K/(K-1)) * U * (I - 11^T/K) and renormalizes columns.
/// Throws DimensionTooSmall (d < K), InvalidArgument (K < 2) or DegenerateBasis.
EtfTerminus build_terminus(Eigen::Index d, Eigen::Index k_total, FrameKind kind,
                           std::uint64_t seed);

struct GeometryReport {
    double max_norm_dev = 0.0;
    double max_offdiag_dev = 0.0;
    double colsum_norm = 0.0;
    bool pass = false;
};

/// Orthogonal frames are checked against a zero off-diagonal target and the
/// column sum is reported but not part of the pass flag.
GeometryReport verify_geometry(const EtfTerminus& terminus, double tol);

/// Text layout: `d K kind seed` then d rows of K values with 17 significant digits.
void write_terminus(std::ostream& out, const EtfTerminus& terminus);
EtfTerminus read_terminus(std::istream& in);

}  // namespace nct
