#pragma once

#include <vector>

#include "tsflow/datamodel.hpp"
#include "tsflow/parallel.hpp"
#include "tsflow/polybasis.hpp"
#include "tsflow/types.hpp"

namespace tsflow::pred {

// Gaussian-kernel smoother over a stored dataset, projected through the basis:
//   F*(f_x) = G . (P_pinv . Phi(f_x)),  Phi = kernel-weighted average of stored series.
// Immutable after construction; G and P_pinv are cached from the basis.
class KernelPredictor {
 public:
  // bandwidth <= 0 selects it automatically: the 10th percentile of pairwise
  // squared distances between stored f_x windows (falls back to 1.0 when the
  // dataset has fewer than two series).
  KernelPredictor(const data::Dataset& dataset, const poly::PolynomialBasis& basis,
                  double bandwidth);

  // Kernel-weighted average of the stored full series; weights are
  // exp(-|f_x - f'_x|^2 / (2h)) normalized to sum 1, computed with
  // max-subtraction in the log domain so small h cannot underflow the lot.
  Vector phi(const Vector& f_x) const;

  // G . (P_pinv . phi(f_x)).
  Vector predict(const Vector& f_x) const;

  double bandwidth() const { return h_; }
  const Matrix& G() const { return G_; }

 private:
  const data::Dataset& dataset_;
  Matrix G_;        // N_y x n
  Matrix P_pinv_;   // n x N
  double h_;
};

// Closed-form regularized predictor: F_hat(f_x) = G . (MxP)^+ . f_x.
// Construction fails if MxP loses column rank; the closed form is meaningless
// on the truncated pseudoinverse.
class RegularizedPredictor {
 public:
  RegularizedPredictor(const poly::PolynomialBasis& basis, const data::IndexSets& sets);

  Vector predict(const Vector& f_x) const;

  const Matrix& G() const { return G_; }
  const Matrix& MxP_pinv() const { return MxP_pinv_; }
  double min_singular_value_MxP() const { return smin_MxP_; }

 private:
  Matrix G_;         // N_y x n
  Matrix MxP_pinv_;  // n x N_x
  double smin_MxP_;
};

// Mean squared prediction error over an evaluation set. Entries evaluate
// independently; parallel and serial modes produce bitwise-equal sums.
template <typename Predictor>
double predictor_risk(const Predictor& pred, const std::vector<data::SeriesSample>& eval_set,
                      exec_mode mode = exec_mode::serial) {
  if (eval_set.empty()) throw invalid_input("predictor_risk: empty eval set");
  return ordered_mean(static_cast<std::ptrdiff_t>(eval_set.size()), mode, [&](std::ptrdiff_t i) {
    const auto& s = eval_set[static_cast<std::size_t>(i)];
    return (pred.predict(s.f_x) - s.f_y).squaredNorm();
  });
}

}  // namespace tsflow::pred
