#pragma once

#include <vector>

#include "latmap/core/types.hpp"

namespace latmap {

// Mean over rows of (1 - cosine similarity). Zero-norm rows use a 1e-8 guard
// and set the flag.
double metric_cos(const MatX<float>& reconstructed, const MatX<float>& target,
                  bool* flagged = nullptr);

struct MiouResult {
  double miou = 0;
  std::vector<double> per_class_iou;   // only meaningful where included
  std::vector<uint8_t> class_included; // class appears in prediction or truth
  std::vector<int64_t> intersection, union_;
};

// Per-pixel class scores are softmax(embedding . prototype); prediction is
// the argmax. Pixels with label < 0 are excluded. Classes absent from both
// prediction and ground truth are excluded from the mean.
MiouResult metric_miou(const MatX<float>& embeddings, const std::vector<int32_t>& labels,
                       const MatX<float>& prototypes);

struct PsnrResult {
  double db = 0;
  bool exact = false;  // MSE was zero; value capped at 100 dB
};

PsnrResult metric_psnr(const ImageT<float>& rendered, const ImageT<float>& observed);

}  // namespace latmap
