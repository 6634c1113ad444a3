#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "latmap/core/config.hpp"
#include "latmap/dict/dictionary.hpp"
#include "latmap/io/dataset.hpp"
#include "latmap/obj/adam.hpp"
#include "latmap/obj/objective.hpp"
#include "latmap/store/active_set.hpp"

namespace latmap {

// Ring buffer of immutable keyframes for history replay.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(int capacity) : capacity_(capacity) {}

  void push(KeyframePtr kf) {
    if (int(buf_.size()) < capacity_) {
      buf_.push_back(std::move(kf));
    } else {
      buf_[head_] = std::move(kf);
      head_ = (head_ + 1) % size_t(capacity_);
    }
  }
  size_t size() const { return buf_.size(); }
  int capacity() const { return capacity_; }
  const KeyframePtr& at(size_t i) const { return buf_[i]; }

 private:
  int capacity_;
  std::vector<KeyframePtr> buf_;
  size_t head_ = 0;
};

bool select_keyframe(int frame_index, int stride);

// Uniform sample without replacement; everything when fewer than `count`.
std::vector<KeyframePtr> sample_history(const HistoryBuffer& history, int count,
                                        std::mt19937_64& rng);

// New primitives for pixels the current map does not explain: valid depth
// with alpha < 0.5 or depth error > 0.1 m, on a stride-2 pixel grid.
GaussianMap seed_gaussians(const Keyframe& kf, const RenderOutput& rendered,
                           const Intrinsics& intr, const Config& cfg, std::mt19937_64& rng);

// Adam state for every learnable block.
struct MapOptimizer {
  AdamState<MatX3<float>> positions, colors, log_scales;
  AdamState<MatX4<float>> rotations;
  AdamState<VecX<float>> opacity_logits;
  AdamState<MatX<float>> features, proj, atoms;

  void step_map(GaussianMap& map, const MapGradientsT<float>& g, const Config& cfg);
  void step_dict(DictionaryState& dict, const MatX<float>& d_proj, const MatX<float>& d_atoms,
                 const Config& cfg, bool learn_atoms);
  void keep_map_rows(const std::vector<uint8_t>& mask);
  void reset_atom_moments() {
    atoms.reset();
  }
  int64_t skipped_steps() const {
    return positions.skipped + rotations.skipped + colors.skipped + log_scales.skipped +
           opacity_logits.skipped + features.skipped + proj.skipped + atoms.skipped;
  }
};

struct KeyframeLog {
  int frame_index = 0;
  LossBreakdown<float> loss;
  int64_t seeded = 0;
  int64_t active_count = 0;
  int64_t global_count = 0;
  double dict_weight_mass = 0;
  bool synced = false;
  SyncStats sync;
  double wall_ms = 0;
};

struct PipelineState {
  Config cfg;
  Intrinsics intr;
  VoxelHashStore store;
  ActiveSet active;
  DictionaryState dict;
  MapOptimizer opt;
  HistoryBuffer history;
  std::mt19937_64 rng;

  float traveled = 0;
  bool have_last_pos = false;
  Vec3f last_pos = Vec3f::Zero();
  int keyframes_processed = 0;
  int64_t peak_active = 0;

  // random dictionary initialization bookkeeping
  int64_t reservoir_seen = 0;
  bool anchor_initialized = false;
  MatX<float> persistent_anchor;  // only used when trust_anchor_persistent

  PipelineState(const Config& cfg, const Intrinsics& intr);
};

// One full keyframe step: dictionary maintenance, history-augmented batch,
// seeding, two-stage optimization, history push, travel accumulation and
// synchronization. Atomic: on error the state is restored and the exception
// rethrown.
KeyframeLog process_keyframe(PipelineState& state, Keyframe kf);

struct RunResult {
  int frames = 0;
  int keyframes = 0;
  double wall_seconds = 0;
  double keyframes_per_second = 0;
  std::vector<KeyframeLog> log;
};

// Full dataset pass: keyframe selection, processing, final flush of the
// active set into the global store.
RunResult run_pipeline(PipelineState& state, const DatasetManifest& data,
                       const std::function<void(const KeyframeLog&)>& on_keyframe = nullptr);

std::string log_csv_header();
std::string log_csv_row(const KeyframeLog& row);

}  // namespace latmap
