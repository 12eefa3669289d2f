#include "doctest.h"
#include "support.hpp"

#include "nct/error.hpp"
#include "nct/memory.hpp"

#include <limits>
#include <sstream>

using namespace nct;

namespace {

// Greedy herding written from its definition with plain loops.
std::vector<Eigen::Index> herding_reference(const Matrix& f, std::size_t budget) {
    const Eigen::Index n = f.cols(), d = f.rows();
    std::vector<Vector> unit;
    Vector mean = Vector::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i) {
        unit.push_back(f.col(i) / f.col(i).norm());
        mean += unit.back();
    }
    mean /= static_cast<double>(n);
    std::vector<Eigen::Index> picked;
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    Vector sum = Vector::Zero(d);
    while (picked.size() < std::min<std::size_t>(budget, static_cast<std::size_t>(n))) {
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index arg = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (used[static_cast<std::size_t>(i)]) continue;
            double dist = 0.0;
            for (Eigen::Index r = 0; r < d; ++r) {
                const double v = mean(r) - (sum(r) + unit[static_cast<std::size_t>(i)](r)) /
                                               static_cast<double>(picked.size() + 1);
                dist += v * v;
            }
            if (dist < best) {
                best = dist;
                arg = i;
            }
        }
        used[static_cast<std::size_t>(arg)] = true;
        sum += unit[static_cast<std::size_t>(arg)];
        picked.push_back(arg);
    }
    return picked;
}

Mlp frozen_identity(Eigen::Index d) {
    DenseLayer l;
    l.weight = Matrix::Identity(d, d);
    l.bias = Vector::Zero(d);
    Mlp net({l});
    net.set_frozen(true);
    return net;
}

}  // namespace

TEST_CASE("herding picks the sample nearest the mean first") {
    // Mirrored partners put the class mean on the (1, 0) axis.
    Matrix f(2, 5);
    f << 1, 0, 0.8, 0, 0.8,
         0, 1, 0.6, -1, -0.6;
    CHECK(herding_select(f, 1).front() == 0);
}

TEST_CASE("herding returns every sample when the budget allows") {
    Rng rng(1);
    const Matrix f = testing::random_matrix(4, 6, rng);
    auto picked = herding_select(f, 10);
    CHECK(picked.size() == 6);
    std::sort(picked.begin(), picked.end());
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(picked[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("herding ties go to the lowest index") {
    Matrix f(2, 4);
    f << 1, 0, 1, 0, 0, 1, 0, 1;
    const auto picked = herding_select(f, 2);
    CHECK(picked[0] == 0);
    CHECK(picked[1] == 1);
}

TEST_CASE("herding matches the brute-force reference") {
    Rng rng(2);
    for (int trial = 0; trial < 30; ++trial) {
        const Matrix f = testing::random_matrix(5, 12, rng);
        CHECK(herding_select(f, 7) == herding_reference(f, 7));
    }
}

TEST_CASE("herding errors") {
    CHECK_THROWS_AS(herding_select(Matrix(3, 0), 2), Error);
    CHECK_THROWS_AS(herding_select(Matrix::Ones(3, 2), 0), Error);
    CHECK_THROWS_AS(herding_select(Matrix::Zero(3, 2), 1), Error);
}

TEST_CASE("exemplar store contracts") {
    ExemplarStore store(2);
    CHECK(store.empty());
    store.add_class(4, {{Vector::Constant(3, 1.0), 0}, {Vector::Constant(3, 2.0), 0}});
    store.add_class(1, {{Vector::Constant(3, 3.0), 1}});
    CHECK(store.size() == 3);
    CHECK(store.classes() == std::vector<ClassId>{1, 4});
    CHECK_THROWS_AS(store.add_class(4, {}), Error);
    CHECK_THROWS_AS(store.add_class(5, {{Vector::Zero(3), 1}, {Vector::Zero(3), 1}, {Vector::Zero(3), 1}}),
                    Error);
    CHECK_THROWS_AS(store.exemplars(9), Error);
    Matrix x;
    std::vector<ClassId> y;
    store.gather(x, y);
    CHECK(y == std::vector<ClassId>{1, 4, 4});
    CHECK(x(0, 0) == 3.0);
    CHECK(x(0, 2) == 2.0);
}

TEST_CASE("exemplar store round trip is bitwise") {
    Rng rng(3);
    ExemplarStore store(3);
    store.add_class(0, {{testing::random_vector(4, rng), 0}, {testing::random_vector(4, rng), 0}});
    store.add_class(7, {{testing::random_vector(4, rng), 2}});
    std::stringstream buffer;
    write_exemplars(buffer, store);
    CHECK(read_exemplars(buffer) == store);
}

TEST_CASE("feature means") {
    const Mlp net = frozen_identity(2);
    Matrix x(2, 5);
    x << 1, 3, 5, 2, -2, 2, 4, 6, 1, -1;
    const std::vector<ClassId> y{0, 0, 1, 2, 2};
    FeatureMeanMemory memory;
    record_feature_means(net, x, y, memory);
    CHECK(memory.size() == 3);
    CHECK(memory.mean(0) == Vector::LinSpaced(2, 2.0, 3.0));
    CHECK(memory.mean(1) == x.col(2));
    CHECK(memory.mean(2).norm() == 0.0);
    CHECK_THROWS_AS(record_feature_means(net, x, y, memory), Error);
    CHECK_THROWS_AS(memory.mean(8), Error);
}

TEST_CASE("duplicated samples do not move the mean") {
    const Mlp net = frozen_identity(3);
    Rng rng(4);
    const Vector v = testing::random_vector(3, rng);
    Matrix once(3, 1), twice(3, 2);
    once << v;
    twice << v, v;
    FeatureMeanMemory a, b;
    record_feature_means(net, once, std::vector<ClassId>{0}, a);
    record_feature_means(net, twice, std::vector<ClassId>{0, 0}, b);
    CHECK(a == b);
}

TEST_CASE("feature means need a frozen backbone") {
    auto net = frozen_identity(2);
    net.set_frozen(false);
    FeatureMeanMemory memory;
    CHECK_THROWS_AS(record_feature_means(net, Matrix::Ones(2, 1), std::vector<ClassId>{0}, memory), Error);
    net.set_frozen(true);
    CHECK_THROWS_AS(record_feature_means(net, Matrix(2, 0), std::vector<ClassId>{}, memory), Error);
}

TEST_CASE("feature mean round trip is bitwise") {
    Rng rng(5);
    FeatureMeanMemory memory;
    memory.insert(2, testing::random_vector(6, rng));
    memory.insert(0, testing::random_vector(6, rng));
    std::stringstream buffer;
    write_feature_means(buffer, memory);
    CHECK(read_feature_means(buffer) == memory);
    CHECK_THROWS_AS(memory.insert(2, Vector::Zero(6)), Error);
}
