#include "tsflow/rng.hpp"

#include <cmath>

namespace tsflow::rng {

namespace {
constexpr double kInv53 = 0x1p-53;
constexpr std::uint64_t kStreamU1 = 0xa0761d6478bd642full;
constexpr std::uint64_t kStreamU2 = 0xe7037ed1a0b428dbull;
}  // namespace

double uniform01(std::uint64_t key) {
    return static_cast<double>(mix(key) >> 11) * kInv53;
}

double gaussian(std::uint64_t key) {
    // u1 in (0,1] so the log is finite
    double u1 = static_cast<double>((mix(key ^ kStreamU1) >> 11) + 1) * kInv53;
    double u2 = static_cast<double>(mix(key ^ kStreamU2) >> 11) * kInv53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Vector gaussian_vector(Index n, std::uint64_t key) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = gaussian(derive(key, static_cast<std::uint64_t>(i)));
    return v;
}

Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t key) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            m(i, j) = gaussian(derive(key, static_cast<std::uint64_t>(i),
                                      static_cast<std::uint64_t>(j)));
    return m;
}

}  // namespace tsflow::rng
