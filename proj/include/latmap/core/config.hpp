#pragma once

#include <cstdint>
#include <string>

namespace latmap {

// Runtime configuration. Serialized as flat "key = value" lines; see
// parse_config for the format rules.
struct Config {
  // Representation dimensions.
  int query_dim = 32;   // per-Gaussian query feature size
  int embed_dim = 64;   // target embedding size
  int dict_size = 2000; // number of dictionary atoms

  // Feature loss.
  float trust_delta = 0.1f;
  float lambda_cos = 0.5f;
  float lambda_l2 = 0.5f;
  float lambda_trust = 0.2f;

  // Photometric / depth / total objective weights.
  float lambda_i1 = 0.2f;
  float lambda_i2 = 0.8f;
  float lambda_rgb = 1.0f;
  float lambda_depth = 0.1f;
  float lambda_feat = 5.0f;

  // Optimization.
  float lr_proj = 0.01f;
  float lr_dict = 0.01f;
  float lr_position = 1e-4f;  // scaled by scene_extent
  float lr_rotation = 1e-3f;
  float lr_color = 2.5e-3f;
  float lr_log_scale = 5e-3f;
  float lr_opacity = 5e-2f;
  float lr_feature = 2.5e-3f;
  float scene_extent = 1.0f;
  int stage1_iters = 1;  // joint map+dictionary iterations per keyframe
  int stage2_iters = 5;  // dictionary-only refinement iterations per keyframe

  // History replay.
  int history_sample = 5;
  int history_capacity = 200;

  // Map store / synchronization.
  float voxel_size = 0.01f;
  float local_radius = 5.0f;
  float sync_distance = 1.0f;
  int64_t hash_capacity = int64_t(1) << 20;
  bool local_mapping = true;

  // Pipeline.
  int keyframe_stride = 4;
  uint64_t seed = 0;
  int num_threads = 0;  // 0 = hardware concurrency

  // Dictionary maintenance variants.
  std::string dict_init = "kmeans";  // "kmeans" or "random"
  bool dict_learn = true;            // optimize atoms (the projection is always learned)
  float dict_decay = 1.0f;           // weight decay applied to old atoms before merging
  float softmax_temp = 1.0f;
  bool trust_anchor_persistent = false;

  // "pixel": supervise every assigned pixel; "segment": pool queries per
  // assignment row before reconstruction.
  std::string feature_supervision = "pixel";

  // Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

// Parses "key = value" lines; '#' starts a comment, blank lines are ignored.
// Unknown keys are a hard error.
Config parse_config(const std::string& text);
Config load_config(const std::string& path);
std::string serialize_config(const Config& cfg);
void save_config(const Config& cfg, const std::string& path);

}  // namespace latmap
