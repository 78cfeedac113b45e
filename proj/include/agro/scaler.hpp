#pragma once

#include <Eigen/Core>

#include "agro/error.hpp"

namespace agro {

/// Per-column min/max for scaling into [0, 1].
///
/// Values outside the fitted range map linearly outside [0, 1]; nothing is
/// clipped. A constant column (max == min) transforms to 0 everywhere and
/// inverse-transforms back to its fitted value.
template <typename Scalar = double>
struct ScalerParams {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector min;
  Vector max;

  Eigen::Index columns() const { return min.size(); }
};

template <typename Derived>
ScalerParams<typename Derived::Scalar> fit_minmax(const Eigen::MatrixBase<Derived>& data) {
  require(data.rows() > 0, "fit_minmax: empty matrix");
  ScalerParams<typename Derived::Scalar> params;
  params.min = data.colwise().minCoeff().transpose();
  params.max = data.colwise().maxCoeff().transpose();
  return params;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> transform_minmax(
    const Eigen::MatrixBase<Derived>& data, const ScalerParams<typename Derived::Scalar>& params) {
  using Scalar = typename Derived::Scalar;
  if (data.cols() != params.columns()) {
    fail(Errc::ColumnCountMismatch, "transform_minmax: matrix has " + std::to_string(data.cols()) +
                                        " columns, scaler has " + std::to_string(params.columns()));
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(data.rows(), data.cols());
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    const Scalar range = params.max(c) - params.min(c);
    if (range > Scalar(0)) {
      out.col(c) = (data.col(c).array() - params.min(c)) / range;
    } else {
      out.col(c).setZero();
    }
  }
  return out;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> inverse_minmax(
    const Eigen::MatrixBase<Derived>& scaled, const ScalerParams<typename Derived::Scalar>& params) {
  using Scalar = typename Derived::Scalar;
  if (scaled.cols() != params.columns()) {
    fail(Errc::ColumnCountMismatch, "inverse_minmax: matrix has " + std::to_string(scaled.cols()) +
                                        " columns, scaler has " + std::to_string(params.columns()));
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(scaled.rows(), scaled.cols());
  for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
    const Scalar range = params.max(c) - params.min(c);
    out.col(c) = scaled.col(c).array() * range + params.min(c);
  }
  return out;
}

// Single-column conveniences used by the price forecaster.
template <typename Scalar>
Scalar scale_value(Scalar value, const ScalerParams<Scalar>& params, Eigen::Index column = 0) {
  const Scalar range = params.max(column) - params.min(column);
  return range > Scalar(0) ? (value - params.min(column)) / range : Scalar(0);
}

template <typename Scalar>
Scalar unscale_value(Scalar value, const ScalerParams<Scalar>& params, Eigen::Index column = 0) {
  return value * (params.max(column) - params.min(column)) + params.min(column);
}

}  // namespace agro
