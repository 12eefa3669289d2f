#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace nct {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Class identifier within the whole label space.
using ClassId = int;

/// splitmix64 finalizer; used to derive independent child seeds from one root.
inline std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag) noexcept {
    return mix_seed(mix_seed(root) ^ (tag * 0xd6e8feb86659fd93ULL));
}

using Rng = std::mt19937_64;

}  // namespace nct
