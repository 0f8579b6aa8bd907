#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace tsflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Error taxonomy. The CLI maps these onto its exit-code contract:
// invalid_config -> 1, usage errors -> 2, failed checks -> 3, divergence -> 4.
struct invalid_input : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct invalid_config : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct rank_deficient : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct degenerate_bandwidth : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct divergence_error : std::runtime_error {
    int step;
    divergence_error(const std::string& msg, int step_)
        : std::runtime_error(msg + " (step " + std::to_string(step_) + ")"), step(step_) {}
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require_finite(const Matrix& m, const char* what) {
    if (m.size() == 0) throw invalid_input(std::string(what) + ": empty matrix");
    if (!m.allFinite()) throw invalid_input(std::string(what) + ": non-finite entries");
}

inline void require_finite(const Vector& v, const char* what) {
    if (!v.allFinite()) throw invalid_input(std::string(what) + ": non-finite entries");
}

}  // namespace tsflow
