#include "latmap/core/config.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace latmap {
namespace {

struct Field {
  const char* name;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

float parse_float(const std::string& v) {
  size_t pos = 0;
  float f = std::stof(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad float value '" + v + "'");
  return f;
}

int parse_int(const std::string& v) {
  size_t pos = 0;
  int i = std::stoi(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad int value '" + v + "'");
  return i;
}

int64_t parse_i64(const std::string& v) {
  size_t pos = 0;
  int64_t i = std::stoll(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad int value '" + v + "'");
  return i;
}

uint64_t parse_u64(const std::string& v) {
  size_t pos = 0;
  uint64_t i = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad int value '" + v + "'");
  return i;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("bad bool value '" + v + "'");
}

// %.9g round-trips any finite float32 exactly.
std::string fmt_float(float f) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", double(f));
  return buf;
}

#define F_FLOAT(field)                                                        \
  Field{#field, [](Config& c, const std::string& v) { c.field = parse_float(v); }, \
        [](const Config& c) { return fmt_float(c.field); }}
#define F_INT(field)                                                        \
  Field{#field, [](Config& c, const std::string& v) { c.field = parse_int(v); }, \
        [](const Config& c) { return std::to_string(c.field); }}
#define F_I64(field)                                                        \
  Field{#field, [](Config& c, const std::string& v) { c.field = parse_i64(v); }, \
        [](const Config& c) { return std::to_string(c.field); }}
#define F_U64(field)                                                        \
  Field{#field, [](Config& c, const std::string& v) { c.field = parse_u64(v); }, \
        [](const Config& c) { return std::to_string(c.field); }}
#define F_BOOL(field)                                                        \
  Field{#field, [](Config& c, const std::string& v) { c.field = parse_bool(v); }, \
        [](const Config& c) { return std::string(c.field ? "true" : "false"); }}
#define F_STR(field)                                            \
  Field{#field, [](Config& c, const std::string& v) { c.field = v; }, \
        [](const Config& c) { return c.field; }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      F_INT(query_dim),      F_INT(embed_dim),      F_INT(dict_size),
      F_FLOAT(trust_delta),  F_FLOAT(lambda_cos),   F_FLOAT(lambda_l2),
      F_FLOAT(lambda_trust), F_FLOAT(lambda_i1),    F_FLOAT(lambda_i2),
      F_FLOAT(lambda_rgb),   F_FLOAT(lambda_depth), F_FLOAT(lambda_feat),
      F_FLOAT(lr_proj),      F_FLOAT(lr_dict),      F_FLOAT(lr_position),
      F_FLOAT(lr_rotation),  F_FLOAT(lr_color),     F_FLOAT(lr_log_scale),
      F_FLOAT(lr_opacity),   F_FLOAT(lr_feature),   F_FLOAT(scene_extent),
      F_INT(stage1_iters),   F_INT(stage2_iters),   F_INT(history_sample),
      F_INT(history_capacity), F_FLOAT(voxel_size), F_FLOAT(local_radius),
      F_FLOAT(sync_distance), F_I64(hash_capacity), F_BOOL(local_mapping),
      F_INT(keyframe_stride), F_U64(seed),          F_INT(num_threads),
      F_STR(dict_init),      F_BOOL(dict_learn),    F_FLOAT(dict_decay),
      F_FLOAT(softmax_temp), F_BOOL(trust_anchor_persistent),
      F_STR(feature_supervision),
  };
  return table;
}

}  // namespace

void Config::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + msg);
  };
  require(query_dim >= 1 && embed_dim >= 1, "dimensions must be >= 1");
  require(query_dim <= embed_dim, "query_dim must be <= embed_dim");
  require(dict_size >= 1, "dict_size must be >= 1");
  require(lambda_cos >= 0 && lambda_l2 >= 0 && lambda_trust >= 0 && lambda_i1 >= 0 &&
              lambda_i2 >= 0 && lambda_rgb >= 0 && lambda_depth >= 0 && lambda_feat >= 0,
          "loss weights must be >= 0");
  require(trust_delta >= 0, "trust_delta must be >= 0");
  require(stage1_iters >= 0 && stage2_iters >= 0, "iteration counts must be >= 0");
  require(keyframe_stride >= 1, "keyframe_stride must be >= 1");
  require(history_sample >= 0 && history_capacity >= 1, "history sizes invalid");
  require(voxel_size > 0, "voxel_size must be > 0");
  require(local_radius > 0 && sync_distance >= 0, "sync geometry invalid");
  require(hash_capacity >= 1, "hash_capacity must be >= 1");
  require(softmax_temp > 0, "softmax_temp must be > 0");
  require(dict_decay > 0 && dict_decay <= 1, "dict_decay must be in (0,1]");
  require(dict_init == "kmeans" || dict_init == "random", "dict_init must be kmeans|random");
  require(feature_supervision == "pixel" || feature_supervision == "segment",
          "feature_supervision must be pixel|segment");
  require(num_threads >= 0, "num_threads must be >= 0");
}

Config parse_config(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": missing '='");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const Field& f : fields()) {
      if (key == f.name) {
        f.set(cfg, value);
        found = true;
        break;
      }
    }
    if (!found)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" +
                                  key + "'");
  }
  cfg.validate();
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const Config& cfg) {
  std::ostringstream out;
  for (const Field& f : fields()) out << f.name << " = " << f.get(cfg) << "\n";
  return out.str();
}

void save_config(const Config& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write config file: " + path);
  out << serialize_config(cfg);
}

}  // namespace latmap
