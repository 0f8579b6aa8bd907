#include "tsflow/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tsflow/linalg.hpp"

namespace tsflow::pred {
namespace {

Matrix output_rows(const poly::PolynomialBasis& basis, const data::IndexSets& sets) {
  return data::observation_matrix(sets.I_y, sets.N) * basis.P;
}

double auto_bandwidth(const data::Dataset& dataset) {
  const std::size_t S = dataset.size();
  if (S < 2) return 1.0;
  std::vector<double> d2;
  d2.reserve(S * (S - 1) / 2);
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = i + 1; j < S; ++j)
      d2.push_back((dataset.samples[i].f_x - dataset.samples[j].f_x).squaredNorm());
  std::sort(d2.begin(), d2.end());
  const double q = d2[d2.size() / 10];
  return q > 0.0 ? q : 1.0;
}

}  // namespace

KernelPredictor::KernelPredictor(const data::Dataset& dataset,
                                 const poly::PolynomialBasis& basis, double bandwidth)
    : dataset_(dataset),
      G_(output_rows(basis, dataset.index_sets)),
      P_pinv_(basis.P_pinv),
      h_(bandwidth > 0.0 ? bandwidth : auto_bandwidth(dataset)) {
  if (dataset.size() == 0) throw invalid_input("KernelPredictor: empty dataset");
  if (basis.N != dataset.N()) throw invalid_input("KernelPredictor: basis/dataset length mismatch");
}

Vector KernelPredictor::phi(const Vector& f_x) const {
  if (f_x.size() != dataset_.N_x()) throw invalid_input("phi: query length mismatch");
  require_finite(f_x, "phi");
  const std::size_t S = dataset_.size();
  // log-weights: -|f_x - f'_x|^2 / (2h); shift by the max so the dominant
  // weight is exp(0) = 1 and the sum can never underflow to zero.
  std::vector<double> logw(S);
  double maxlog = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < S; ++i) {
    logw[i] = -(f_x - dataset_.samples[i].f_x).squaredNorm() / (2.0 * h_);
    maxlog = std::max(maxlog, logw[i]);
  }
  if (!std::isfinite(maxlog)) throw degenerate_bandwidth("phi: all kernel weights vanished");
  Vector acc = Vector::Zero(dataset_.N());
  double wsum = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    const double w = std::exp(logw[i] - maxlog);
    acc += w * dataset_.samples[i].f;
    wsum += w;
  }
  return acc / wsum;
}

Vector KernelPredictor::predict(const Vector& f_x) const {
  return G_ * (P_pinv_ * phi(f_x));
}

RegularizedPredictor::RegularizedPredictor(const poly::PolynomialBasis& basis,
                                           const data::IndexSets& sets)
    : G_(output_rows(basis, sets)) {
  const Matrix MxP = data::observation_matrix(sets.I_x, sets.N) * basis.P;
  smin_MxP_ = MxP.rows() < MxP.cols() ? 0.0 : linalg::min_singular_value(MxP);
  if (smin_MxP_ <= 1e-10 * linalg::spectral_norm(MxP))
    throw rank_deficient("RegularizedPredictor: MxP lacks full column rank");
  MxP_pinv_ = linalg::pinv(MxP);
}

Vector RegularizedPredictor::predict(const Vector& f_x) const {
  if (f_x.size() != MxP_pinv_.cols()) throw invalid_input("predict: query length mismatch");
  return G_ * (MxP_pinv_ * f_x);
}

}  // namespace tsflow::pred
