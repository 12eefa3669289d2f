#pragma once

#include "nct/mlp.hpp"
#include "nct/types.hpp"

#include <iosfwd>
#include <map>
#include <span>
#include <vector>

namespace nct {

/// Greedy herding over l2-normalized features (one column per sample): step j
/// picks the unselected sample whose inclusion brings the running exemplar mean
/// closest to the class mean. Returns min(budget, n) indices in selection order;
/// ties go to the lowest index.
std::vector<Eigen::Index> herding_select(const Matrix& features, std::size_t budget);

struct Exemplar {
    Vector input;
    int session = 0;
};

/// Fixed per-class budget of stored raw inputs. A class is written once, when
/// its session closes, and never revisited.
class ExemplarStore {
public:
    explicit ExemplarStore(std::size_t per_class_budget);

    std::size_t budget() const noexcept { return budget_; }
    bool contains(ClassId class_id) const { return store_.count(class_id) != 0; }
    std::size_t size() const;
    bool empty() const noexcept { return store_.empty(); }
    std::vector<ClassId> classes() const;
    const std::vector<Exemplar>& exemplars(ClassId class_id) const;

    /// Throws InvalidArgument if the class is already stored or over budget.
    void add_class(ClassId class_id, std::vector<Exemplar> exemplars);

    /// All exemplars as a batch (inputs column-wise) in class order.
    void gather(Matrix& inputs, std::vector<ClassId>& labels) const;

    friend bool operator==(const ExemplarStore& a, const ExemplarStore& b);

private:
    std::size_t budget_;
    std::map<ClassId, std::vector<Exemplar>> store_;
};

/// Per-class intermediate feature means h_c; entries are immutable once added.
class FeatureMeanMemory {
public:
    std::size_t size() const noexcept { return means_.size(); }
    bool contains(ClassId class_id) const { return means_.count(class_id) != 0; }
    const Vector& mean(ClassId class_id) const;
    const std::map<ClassId, Vector>& entries() const noexcept { return means_; }

    /// Throws InvalidArgument if the class is already present.
    void insert(ClassId class_id, Vector mean);

    void gather(Matrix& means, std::vector<ClassId>& labels) const;

    friend bool operator==(const FeatureMeanMemory& a, const FeatureMeanMemory& b) {
        return a.means_ == b.means_;
    }

private:
    std::map<ClassId, Vector> means_;
};

/// Adds the unnormalized mean of backbone outputs for every class in `labels`.
/// The backbone must be frozen (FrozenViolation otherwise); classes with no
/// samples cannot occur, an empty batch throws EmptyClass.
void record_feature_means(const Mlp& backbone, const Matrix& inputs,
                          std::span<const ClassId> labels, FeatureMeanMemory& memory);

void write_exemplars(std::ostream& out, const ExemplarStore& store);
ExemplarStore read_exemplars(std::istream& in);
void write_feature_means(std::ostream& out, const FeatureMeanMemory& memory);
FeatureMeanMemory read_feature_means(std::istream& in);

}  // namespace nct
