#include "nct/prototype_flight.hpp"

#include "nct/error.hpp"
#include "nct/losses.hpp"

#include <string>

namespace nct {

Vector compute_ncm(const Matrix& features) {
    if (features.cols() == 0) throw Error(ErrorCode::EmptyClass, "no features for NCM");
    Vector sum = Vector::Zero(features.rows());
    for (Eigen::Index i = 0; i < features.cols(); ++i) {
        const double n = features.col(i).norm();
        if (!(n > kZeroFeatureNorm)) throw Error(ErrorCode::ZeroFeature, "zero feature in NCM");
        sum += features.col(i) / n;
    }
    const Vector mean = sum / static_cast<double>(features.cols());
    const double norm = mean.norm();
    if (!(norm > 1e-9)) throw Error(ErrorCode::DegenerateMean, "normalized features cancel out");
    return mean / norm;
}

PrototypeState::PrototypeState(int total_epochs) : total_epochs_(total_epochs) {
    if (total_epochs < 1) throw Error(ErrorCode::InvalidArgument, "epoch count must be >= 1");
}

void PrototypeState::add_fixed_class(ClassId class_id, const Vector& terminus_column) {
    records_[class_id] = Record{terminus_column, terminus_column, false};
}

void PrototypeState::add_novel_class(ClassId class_id, const Vector& ncm,
                                     const Vector& terminus_column) {
    if (ncm.size() != terminus_column.size()) {
        throw Error(ErrorCode::ShapeMismatch, "NCM and terminus dimensions differ");
    }
    records_[class_id] = Record{ncm, terminus_column, true};
}

bool PrototypeState::is_novel(ClassId class_id) const {
    const auto it = records_.find(class_id);
    if (it == records_.end()) {
        throw Error(ErrorCode::UnknownClass, "class " + std::to_string(class_id) + " not scheduled");
    }
    return it->second.novel;
}

double PrototypeState::eta(int epoch, int total_epochs) {
    return static_cast<double>(epoch) / static_cast<double>(total_epochs);
}

Vector PrototypeState::effective_prototype(ClassId class_id, int epoch) const {
    const auto it = records_.find(class_id);
    if (it == records_.end()) {
        throw Error(ErrorCode::UnknownClass, "class " + std::to_string(class_id) + " not scheduled");
    }
    if (epoch < 0 || epoch > total_epochs_) {
        throw Error(ErrorCode::InvalidArgument, "epoch " + std::to_string(epoch) + " outside [0, E]");
    }
    const Record& rec = it->second;
    if (!rec.novel || epoch == total_epochs_) return rec.nct;
    if (epoch == 0) return rec.ncm;
    const double e = eta(epoch, total_epochs_);
    const Vector mixed = e * rec.nct + (1.0 - e) * rec.ncm;
    const double norm = mixed.norm();
    if (!(norm > 1e-9)) {
        throw Error(ErrorCode::DegenerateInterpolation, "NCM and NCT prototypes are antipodal");
    }
    return mixed / norm;
}

}  // namespace nct
