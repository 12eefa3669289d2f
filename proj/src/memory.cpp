#include "nct/memory.hpp"

#include "nct/error.hpp"
#include "nct/losses.hpp"
#include "nct/text_format.hpp"

#include <istream>
#include <limits>
#include <ostream>
#include <string>

namespace nct {

std::vector<Eigen::Index> herding_select(const Matrix& features, std::size_t budget) {
    if (features.cols() == 0) throw Error(ErrorCode::EmptyClass, "herding on an empty class");
    if (budget == 0) throw Error(ErrorCode::InvalidArgument, "herding budget must be >= 1");

    Matrix unit = features;
    for (Eigen::Index i = 0; i < unit.cols(); ++i) {
        const double n = unit.col(i).norm();
        if (!(n > kZeroFeatureNorm)) throw Error(ErrorCode::ZeroFeature, "zero feature in herding");
        unit.col(i) /= n;
    }
    const Vector class_mean = unit.rowwise().mean();
    const auto n = static_cast<std::size_t>(unit.cols());
    const std::size_t count = std::min(budget, n);

    std::vector<Eigen::Index> picked;
    std::vector<bool> used(n, false);
    Vector running = Vector::Zero(unit.rows());
    for (std::size_t j = 1; j <= count; ++j) {
        Eigen::Index best = -1;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            const auto col = static_cast<Eigen::Index>(i);
            const double dist =
                (class_mean - (running + unit.col(col)) / static_cast<double>(j)).norm();
            if (dist < best_dist) {
                best_dist = dist;
                best = col;
            }
        }
        used[static_cast<std::size_t>(best)] = true;
        running += unit.col(best);
        picked.push_back(best);
    }
    return picked;
}

ExemplarStore::ExemplarStore(std::size_t per_class_budget) : budget_(per_class_budget) {}

std::size_t ExemplarStore::size() const {
    std::size_t n = 0;
    for (const auto& [c, list] : store_) n += list.size();
    return n;
}

std::vector<ClassId> ExemplarStore::classes() const {
    std::vector<ClassId> out;
    for (const auto& [c, list] : store_) out.push_back(c);
    return out;
}

const std::vector<Exemplar>& ExemplarStore::exemplars(ClassId class_id) const {
    const auto it = store_.find(class_id);
    if (it == store_.end()) {
        throw Error(ErrorCode::UnknownClass, "no exemplars for class " + std::to_string(class_id));
    }
    return it->second;
}

void ExemplarStore::add_class(ClassId class_id, std::vector<Exemplar> exemplars) {
    if (store_.count(class_id)) {
        throw Error(ErrorCode::InvalidArgument,
                    "exemplars for class " + std::to_string(class_id) + " already stored");
    }
    if (exemplars.size() > budget_) {
        throw Error(ErrorCode::InvalidArgument, "exemplar count exceeds per-class budget");
    }
    store_.emplace(class_id, std::move(exemplars));
}

void ExemplarStore::gather(Matrix& inputs, std::vector<ClassId>& labels) const {
    labels.clear();
    const std::size_t n = size();
    if (n == 0) {
        inputs.resize(0, 0);
        return;
    }
    inputs.resize(store_.begin()->second.front().input.size(), static_cast<Eigen::Index>(n));
    Eigen::Index col = 0;
    for (const auto& [c, list] : store_) {
        for (const auto& ex : list) {
            inputs.col(col++) = ex.input;
            labels.push_back(c);
        }
    }
}

bool operator==(const ExemplarStore& a, const ExemplarStore& b) {
    if (a.budget_ != b.budget_ || a.store_.size() != b.store_.size()) return false;
    for (auto ia = a.store_.begin(), ib = b.store_.begin(); ia != a.store_.end(); ++ia, ++ib) {
        if (ia->first != ib->first || ia->second.size() != ib->second.size()) return false;
        for (std::size_t i = 0; i < ia->second.size(); ++i) {
            const auto& ea = ia->second[i];
            const auto& eb = ib->second[i];
            if (ea.session != eb.session || ea.input.size() != eb.input.size() ||
                ea.input != eb.input)
                return false;
        }
    }
    return true;
}

const Vector& FeatureMeanMemory::mean(ClassId class_id) const {
    const auto it = means_.find(class_id);
    if (it == means_.end()) {
        throw Error(ErrorCode::UnknownClass, "no feature mean for class " + std::to_string(class_id));
    }
    return it->second;
}

void FeatureMeanMemory::insert(ClassId class_id, Vector mean) {
    if (means_.count(class_id)) {
        throw Error(ErrorCode::InvalidArgument,
                    "feature mean for class " + std::to_string(class_id) + " already stored");
    }
    means_.emplace(class_id, std::move(mean));
}

void FeatureMeanMemory::gather(Matrix& means, std::vector<ClassId>& labels) const {
    labels.clear();
    if (means_.empty()) {
        means.resize(0, 0);
        return;
    }
    means.resize(means_.begin()->second.size(), static_cast<Eigen::Index>(means_.size()));
    Eigen::Index col = 0;
    for (const auto& [c, m] : means_) {
        means.col(col++) = m;
        labels.push_back(c);
    }
}

void record_feature_means(const Mlp& backbone, const Matrix& inputs,
                          std::span<const ClassId> labels, FeatureMeanMemory& memory) {
    if (!backbone.frozen()) {
        throw Error(ErrorCode::FrozenViolation, "feature means require a frozen backbone");
    }
    if (inputs.cols() == 0) throw Error(ErrorCode::EmptyClass, "no samples to average");
    if (static_cast<std::size_t>(inputs.cols()) != labels.size()) {
        throw Error(ErrorCode::ShapeMismatch, "label count differs from sample count");
    }
    const Matrix h = backbone.forward(inputs);
    std::map<ClassId, std::pair<Vector, int>> sums;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto [it, fresh] = sums.try_emplace(labels[i], Vector::Zero(h.rows()), 0);
        it->second.first += h.col(static_cast<Eigen::Index>(i));
        it->second.second += 1;
    }
    for (auto& [c, acc] : sums) memory.insert(c, acc.first / static_cast<double>(acc.second));
}

namespace {

void write_vector(std::ostream& out, const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) out << ' ';
        out << format_double(v(i));
    }
    out << '\n';
}

Vector read_vector(std::istream& in, Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::string token;
        if (!(in >> token)) throw Error(ErrorCode::ParseError, "truncated vector");
        v(i) = parse_double(token);
    }
    return v;
}

}  // namespace

void write_exemplars(std::ostream& out, const ExemplarStore& store) {
    const auto classes = store.classes();
    out << "nct-exemplars 1\n" << store.budget() << ' ' << classes.size() << '\n';
    for (ClassId c : classes) {
        const auto& list = store.exemplars(c);
        out << c << ' ' << list.size() << ' ' << (list.empty() ? 0 : list.front().input.size())
            << '\n';
        for (const auto& ex : list) {
            out << ex.session << ' ';
            write_vector(out, ex.input);
        }
    }
}

ExemplarStore read_exemplars(std::istream& in) {
    std::string magic;
    int version = 0;
    std::size_t budget = 0, classes = 0;
    if (!(in >> magic >> version >> budget >> classes) || magic != "nct-exemplars" || version != 1) {
        throw Error(ErrorCode::ParseError, "not an nct-exemplars v1 block");
    }
    ExemplarStore store(budget);
    for (std::size_t k = 0; k < classes; ++k) {
        ClassId c = 0;
        std::size_t count = 0;
        Eigen::Index dim = 0;
        if (!(in >> c >> count >> dim)) throw Error(ErrorCode::ParseError, "bad exemplar header");
        std::vector<Exemplar> list;
        for (std::size_t i = 0; i < count; ++i) {
            Exemplar ex;
            if (!(in >> ex.session)) throw Error(ErrorCode::ParseError, "bad exemplar row");
            ex.input = read_vector(in, dim);
            list.push_back(std::move(ex));
        }
        store.add_class(c, std::move(list));
    }
    return store;
}

void write_feature_means(std::ostream& out, const FeatureMeanMemory& memory) {
    out << "nct-feature-means 1\n" << memory.size() << '\n';
    for (const auto& [c, m] : memory.entries()) {
        out << c << ' ' << m.size() << ' ';
        write_vector(out, m);
    }
}

FeatureMeanMemory read_feature_means(std::istream& in) {
    std::string magic;
    int version = 0;
    std::size_t count = 0;
    if (!(in >> magic >> version >> count) || magic != "nct-feature-means" || version != 1) {
        throw Error(ErrorCode::ParseError, "not an nct-feature-means v1 block");
    }
    FeatureMeanMemory memory;
    for (std::size_t k = 0; k < count; ++k) {
        ClassId c = 0;
        Eigen::Index dim = 0;
        if (!(in >> c >> dim)) throw Error(ErrorCode::ParseError, "bad feature mean header");
        memory.insert(c, read_vector(in, dim));
    }
    return memory;
}

}  // namespace nct
