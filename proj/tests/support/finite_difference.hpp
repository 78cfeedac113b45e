#pragma once

// Central-difference gradient oracle for the LSTM network. Test-only: it
// evaluates the loss through forward_full alone and never touches backward.

#include <algorithm>
#include <cmath>

#include "agro/lstm_network.hpp"

namespace agro::testing {

struct GradCheckReport {
  double max_relative_error = 0.0;
  long parameters = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
  return std::abs(analytic - numeric) / scale;
}

inline GradCheckReport check_gradients(const lstm::NetworkParams<double>& params, const lstm::Matrix<double>& windows,
                                       const lstm::Matrix<double>& targets, const lstm::DropoutMasks<double>& masks,
                                       double step = 1e-5) {
  lstm::ForwardCache<double> cache;
  lstm::forward_full(params, windows, masks, &cache);
  auto analytic = lstm::backward(params, cache, targets);

  auto probe = params;
  const auto loss = [&] { return lstm::mse_loss<double>(lstm::forward_full(probe, windows, masks), targets); };
  GradCheckReport report;
  lstm::for_each_tensor(
      [&](auto& p, const auto& g) {
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          const double saved = p.data()[i];
          p.data()[i] = saved + step;
          const double up = loss();
          p.data()[i] = saved - step;
          const double down = loss();
          p.data()[i] = saved;
          const double numeric = (up - down) / (2.0 * step);
          report.max_relative_error = std::max(report.max_relative_error, relative_error(g.data()[i], numeric));
          ++report.parameters;
        }
      },
      probe, analytic);
  return report;
}

}  // namespace agro::testing
