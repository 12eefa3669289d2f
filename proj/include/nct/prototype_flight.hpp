#pragma once

#include "nct/types.hpp"

#include <map>

namespace nct {

/// Unit-length mean of the per-sample l2-normalized features (one column per
/// sample). Throws EmptyClass, ZeroFeature, or DegenerateMean.
Vector compute_ncm(const Matrix& features);

/// Per-session prototype schedule. Novel classes fly from their NCM start to the
/// terminus column as eta = e / E advances; every other class sits at its
/// terminus column for the whole session.
class PrototypeState {
public:
    explicit PrototypeState(int total_epochs);

    void add_fixed_class(ClassId class_id, const Vector& terminus_column);
    void add_novel_class(ClassId class_id, const Vector& ncm, const Vector& terminus_column);

    int total_epochs() const noexcept { return total_epochs_; }
    bool contains(ClassId class_id) const { return records_.count(class_id) != 0; }
    bool is_novel(ClassId class_id) const;

    static double eta(int epoch, int total_epochs);

    /// normalize(eta * nct + (1 - eta) * ncm) for novel classes, nct otherwise.
    /// Throws UnknownClass, InvalidArgument (epoch outside [0, E]) or
    /// DegenerateInterpolation.
    Vector effective_prototype(ClassId class_id, int epoch) const;

private:
    struct Record {
        Vector ncm;
        Vector nct;
        bool novel = false;
    };

    int total_epochs_;
    std::map<ClassId, Record> records_;
};

}  // namespace nct
