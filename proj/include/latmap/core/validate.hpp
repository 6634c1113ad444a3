#pragma once

#include <cmath>
#include <string>

#include "latmap/core/types.hpp"

namespace latmap {

struct MapDiagnostics {
  Eigen::Index count = 0;
  int64_t non_finite = 0;        // NaN/Inf values across all fields
  int64_t opacity_violations = 0;  // decoded opacity outside [0,1]
  int64_t degenerate_scales = 0;   // decoded scale zero, infinite or NaN
  bool pass = true;

  std::string summary() const {
    return "n=" + std::to_string(count) + " non_finite=" + std::to_string(non_finite) +
           " opacity_violations=" + std::to_string(opacity_violations) +
           " degenerate_scales=" + std::to_string(degenerate_scales) +
           (pass ? " PASS" : " FAIL");
  }
};

// Report-only consistency scan; never throws.
template <typename T>
MapDiagnostics validate_map(const GaussianMapT<T>& map) {
  MapDiagnostics d;
  d.count = map.size();
  auto scan = [&d](const auto& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        if (!std::isfinite(double(m(i, j)))) ++d.non_finite;
  };
  scan(map.positions);
  scan(map.rotations);
  scan(map.colors);
  scan(map.log_scales);
  scan(map.features);
  for (Eigen::Index i = 0; i < map.size(); ++i) {
    T lg = map.opacity_logits(i);
    if (!std::isfinite(double(lg))) {
      ++d.non_finite;
    } else {
      T a = sigmoid(lg);
      if (!(a >= T(0) && a <= T(1))) ++d.opacity_violations;
    }
    for (int k = 0; k < 3; ++k) {
      double s = std::exp(double(map.log_scales(i, k)));
      if (!(s > 0) || !std::isfinite(s)) ++d.degenerate_scales;
    }
  }
  d.pass = d.non_finite == 0 && d.opacity_violations == 0 && d.degenerate_scales == 0;
  return d;
}

}  // namespace latmap
