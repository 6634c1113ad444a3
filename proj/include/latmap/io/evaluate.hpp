#pragma once

#include <string>
#include <vector>

#include "latmap/core/config.hpp"
#include "latmap/dict/dictionary.hpp"
#include "latmap/io/dataset.hpp"
#include "latmap/io/metrics.hpp"

namespace latmap {

struct EvalFrameRow {
  int frame_index = 0;
  double cos_loss = 0;
  double miou = 0;
  double psnr = 0;
  int64_t labeled_pixels = 0;
};

struct EvalResult {
  double cos_loss = 0;  // mean over evaluated frames
  double miou = 0;      // pooled over all evaluated pixels
  double psnr = 0;      // mean over evaluated frames
  std::vector<EvalFrameRow> frames;
};

// Renders the map at every `stride`-th frame, reconstructs embeddings for
// the labeled pixels through the dictionary and scores them against the
// stored supervision. mIoU needs prototypes and labels; frames without them
// contribute photometric metrics only.
EvalResult evaluate_map(const GaussianMap& map, const DictionaryState& dict,
                        const DatasetManifest& data, const MatX<float>& prototypes, int stride,
                        int threads = 0);

// Per-Gaussian similarity of reconstructed embeddings against one query
// embedding (cosine).
VecX<float> query_map(const GaussianMap& map, const DictionaryState& dict,
                      const VecX<float>& embedding);

}  // namespace latmap
