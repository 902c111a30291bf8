#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "poseflow/sdf.hpp"
#include "poseflow/skeleton.hpp"

namespace poseflow {

/// Sentinel pose id for the canonical A-pose.
constexpr uint32_t kAposePoseId = 0xffffffffu;

// Record flag bits.
constexpr uint32_t kFlagSharpFallback = 1u;
constexpr uint32_t kFlagAposeTarget = 2u;

struct DataConfig {
  int n_chars = 50;
  int poses_per_char = 7;
  bool include_identity_pairs = false;
  double apose_fraction = 0.1;
  double apose_angle_deg = 45.0;  // one of 35, 45, 50, 55
  int n_surface = 1024;
  int n_sharp = 256;
  int n_queries = 2048;
  int raster_w = 32;
  int raster_h = 32;
  int eval_pairs = 0;  // held out after the deterministic shuffle
  double limit_scale = 0.8;
  double margin = 0.9;

  int pairs_per_char() const {
    const int p = poses_per_char;
    return include_identity_pairs ? p * p : p * (p - 1);
  }
  int total_pairs() const { return n_chars * pairs_per_char(); }
};

/// One dataset record: identity raster in pose A, target skeleton and
/// shape sample in pose B.
struct TrainingPair {
  uint32_t char_id = 0;
  uint32_t pose_a_id = 0;
  uint32_t pose_b_id = 0;
  uint32_t flags = 0;
  uint32_t raster_w = 0;
  uint32_t raster_h = 0;
  Skeleton skel_b;                   // canonical coords (f32 on disk)
  ShapeSample shape_b;
  std::vector<uint8_t> raster_bits;  // pose A occupancy, bit-packed
};

struct Dataset {
  DataConfig config;
  uint64_t seed = 0;
  int dim = 2;
  std::vector<TrainingPair> train;
  std::vector<TrainingPair> eval;
};

// Deterministic derivations used by both generation and evaluation.
CharacterIdentity identity_for(uint64_t seed, uint32_t char_id, const SkeletonTopology& topo);
Pose pose_for(uint64_t seed, uint32_t char_id, uint32_t pose_id, const SkeletonTopology& topo,
              const DataConfig& cfg);

TrainingPair build_pair(uint64_t seed, uint32_t char_id, uint32_t pose_a_id, uint32_t pose_b_id,
                        uint64_t pair_key, const SkeletonTopology& topo, const DataConfig& cfg);

/// Generates every pair, shuffles deterministically, splits off the eval
/// tail, and writes manifest.json + train.bin + eval.bin under out_dir.
void build_dataset(const DataConfig& cfg, uint64_t seed, const std::string& out_dir);

Dataset load_dataset(const std::string& dir);

std::string serialize_records(const std::vector<TrainingPair>& pairs, int dim);
std::vector<TrainingPair> parse_records(const std::string& blob, int dim);

uint64_t fnv1a64_bytes(const std::string& bytes);

nlohmann::json data_config_to_json(const DataConfig& cfg);
DataConfig data_config_from_json(const nlohmann::json& j, const std::string& pointer);

}  // namespace poseflow
