#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

#include <Eigen/Core>

namespace latmap {

struct GradCheckReport {
  double max_rel_error = 0;
  Eigen::Index worst_coord = -1;
  double worst_analytic = 0;
  double worst_numeric = 0;
  Eigen::Index coords_checked = 0;
};

// Central-difference verification of an analytic gradient over a flat
// parameter block. `loss` is re-evaluated at perturbed points; the block is
// restored afterwards. Large blocks are subsampled with an even stride when
// max_coords > 0. Relative error: |ga - gfd| / (|gfd| + 1e-8).
inline GradCheckReport grad_check(const std::function<double()>& loss, double* block,
                                  Eigen::Index count, const double* analytic,
                                  double step = 1e-4, Eigen::Index max_coords = 0) {
  GradCheckReport rep;
  Eigen::Index stride = 1;
  if (max_coords > 0 && count > max_coords) stride = (count + max_coords - 1) / max_coords;
  for (Eigen::Index i = 0; i < count; i += stride) {
    const double saved = block[i];
    block[i] = saved + step;
    const double up = loss();
    block[i] = saved - step;
    const double down = loss();
    block[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double rel = std::abs(analytic[i] - fd) / (std::abs(fd) + 1e-8);
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_coord = i;
      rep.worst_analytic = analytic[i];
      rep.worst_numeric = fd;
    }
    ++rep.coords_checked;
  }
  return rep;
}

}  // namespace latmap
