#include "nct/etf_terminus.hpp"

#include "nct/error.hpp"
#include "nct/text_format.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

namespace nct {

std::string_view frame_kind_name(FrameKind kind) noexcept {
    return kind == FrameKind::SimplexEtf ? "etf" : "orthogonal";
}

FrameKind parse_frame_kind(std::string_view text) {
    if (text == "etf" || text == "simplex") return FrameKind::SimplexEtf;
    if (text == "orthogonal" || text == "of") return FrameKind::OrthogonalFrame;
    throw Error(ErrorCode::ParseError, "unknown frame kind '" + std::string(text) + "'");
}

EtfTerminus::EtfTerminus(Matrix prototypes, FrameKind kind, std::uint64_t seed)
    : w_(std::move(prototypes)), kind_(kind), seed_(seed) {}

Vector EtfTerminus::prototype(ClassId class_id) const {
    if (class_id < 0 || class_id >= w_.cols()) {
        throw Error(ErrorCode::IndexOutOfRange,
                    "prototype index " + std::to_string(class_id) + " outside [0, " +
                        std::to_string(w_.cols()) + ")");
    }
    return w_.col(class_id);
}

double EtfTerminus::target_cross_cosine() const noexcept {
    if (kind_ == FrameKind::OrthogonalFrame) return 0.0;
    return -1.0 / static_cast<double>(w_.cols() - 1);
}

namespace {

// Returns false when the draw is numerically rank deficient.
bool orthonormal_basis(Eigen::Index d, Eigen::Index k, std::uint64_t seed, Matrix& basis) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix draw(d, k);
    for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index i = 0; i < d; ++i) draw(i, j) = normal(rng);

    Eigen::HouseholderQR<Matrix> qr(draw);
    const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    const double scale = draw.norm();
    for (Eigen::Index j = 0; j < k; ++j) {
        if (!(std::abs(r(j, j)) > 1e-10 * scale)) return false;
    }
    basis = qr.householderQ() * Matrix::Identity(d, k);
    return true;
}

}  // namespace

EtfTerminus build_terminus(Eigen::Index d, Eigen::Index k_total, FrameKind kind,
                           std::uint64_t seed) {
    if (k_total < 2) {
        throw Error(ErrorCode::InvalidArgument, "terminus needs at least 2 prototypes");
    }
    if (d < k_total) {
        throw Error(ErrorCode::DimensionTooSmall,
                    "feature dimension " + std::to_string(d) + " is smaller than K=" +
                        std::to_string(k_total));
    }

    Matrix basis;
    bool ok = false;
    for (std::uint64_t attempt = 0; attempt < 3 && !ok; ++attempt) {
        ok = orthonormal_basis(d, k_total, attempt == 0 ? seed : derive_seed(seed, attempt),
                               basis);
    }
    if (!ok) throw Error(ErrorCode::DegenerateBasis, "orthonormalization failed 3 times");

    if (kind == FrameKind::OrthogonalFrame) return EtfTerminus(std::move(basis), kind, seed);

    const double k = static_cast<double>(k_total);
    const Matrix centering =
        Matrix::Identity(k_total, k_total) - Matrix::Constant(k_total, k_total, 1.0 / k);
    Matrix w = std::sqrt(k / (k - 1.0)) * basis * centering;
    for (Eigen::Index j = 0; j < k_total; ++j) w.col(j).normalize();
    return EtfTerminus(std::move(w), kind, seed);
}

GeometryReport verify_geometry(const EtfTerminus& terminus, double tol) {
    GeometryReport report;
    const Matrix& w = terminus.matrix();
    const Matrix gram = w.transpose() * w;
    const double target = terminus.target_cross_cosine();
    for (Eigen::Index i = 0; i < gram.rows(); ++i) {
        report.max_norm_dev = std::max(report.max_norm_dev, std::abs(w.col(i).norm() - 1.0));
        for (Eigen::Index j = 0; j < gram.cols(); ++j) {
            if (i == j) continue;
            report.max_offdiag_dev = std::max(report.max_offdiag_dev, std::abs(gram(i, j) - target));
        }
    }
    report.colsum_norm = w.rowwise().sum().norm();
    report.pass = report.max_norm_dev <= tol && report.max_offdiag_dev <= tol;
    if (terminus.kind() == FrameKind::SimplexEtf) report.pass = report.pass && report.colsum_norm <= tol;
    return report;
}

void write_terminus(std::ostream& out, const EtfTerminus& terminus) {
    const Matrix& w = terminus.matrix();
    out << w.rows() << ' ' << w.cols() << ' ' << frame_kind_name(terminus.kind()) << ' '
        << terminus.seed() << '\n';
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            if (j) out << ' ';
            out << format_double(w(i, j));
        }
        out << '\n';
    }
}

EtfTerminus read_terminus(std::istream& in) {
    Eigen::Index d = 0, k = 0;
    std::string kind;
    std::uint64_t seed = 0;
    if (!(in >> d >> k >> kind >> seed) || d <= 0 || k <= 0) {
        throw Error(ErrorCode::ParseError, "malformed terminus header");
    }
    Matrix w(d, k);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            std::string token;
            if (!(in >> token)) throw Error(ErrorCode::ParseError, "truncated terminus body");
            w(i, j) = parse_double(token);
        }
    }
    return EtfTerminus(std::move(w), parse_frame_kind(kind), seed);
}

}  // namespace nct
