#include "poseflow/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include <nlohmann/json.hpp>

#include "poseflow/checkpoint.hpp"
#include "poseflow/jsonutil.hpp"

namespace poseflow {

namespace fs = std::filesystem;

uint64_t fnv1a64_bytes(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

CharacterIdentity identity_for(uint64_t seed, uint32_t char_id, const SkeletonTopology& topo) {
  const uint64_t s = RngState(seed).substream("data").substream("char").substream(char_id).seed();
  return sample_identity(topo, s);
}

Pose pose_for(uint64_t seed, uint32_t char_id, uint32_t pose_id, const SkeletonTopology& topo,
              const DataConfig& cfg) {
  if (pose_id == kAposePoseId) return make_apose(topo, cfg.apose_angle_deg * std::numbers::pi / 180.0);
  RngState rng = RngState(seed)
                     .substream("data")
                     .substream("pose")
                     .substream(char_id)
                     .substream(pose_id);
  return sample_pose(topo, rng, cfg.limit_scale);
}

TrainingPair build_pair(uint64_t seed, uint32_t char_id, uint32_t pose_a_id, uint32_t pose_b_id,
                        uint64_t pair_key, const SkeletonTopology& topo, const DataConfig& cfg) {
  const CharacterIdentity identity = identity_for(seed, char_id, topo);
  const Pose pose_a = pose_for(seed, char_id, pose_a_id, topo, cfg);
  const Pose pose_b = pose_for(seed, char_id, pose_b_id, topo, cfg);

  const PosedCharacter char_a = pose_character(topo, identity, pose_a, cfg.margin);
  const PosedCharacter char_b = pose_character(topo, identity, pose_b, cfg.margin);

  TrainingPair pair;
  pair.char_id = char_id;
  pair.pose_a_id = pose_a_id;
  pair.pose_b_id = pose_b_id;
  pair.skel_b = char_b.skel;
  RngState srng = RngState(seed).substream("data").substream("sample").substream(pair_key);
  pair.shape_b = sample_shape(char_b, cfg.n_surface, cfg.n_sharp, cfg.n_queries, srng);
  pair.raster_bits = rasterize(char_a, cfg.raster_w, cfg.raster_h);
  pair.raster_w = static_cast<uint32_t>(cfg.raster_w);
  pair.raster_h = static_cast<uint32_t>(cfg.raster_h);
  if (pair.shape_b.sharp_fallback) pair.flags |= kFlagSharpFallback;
  if (pose_b_id == kAposePoseId) pair.flags |= kFlagAposeTarget;
  return pair;
}

namespace {

void append_doubles_as_f32(std::string& out, const std::vector<double>& v) {
  for (double x : v) {
    const float f = static_cast<float>(x);
    append_f32_le(out, &f, 1);
  }
}

struct PairSpec {
  uint32_t char_id, pose_a, pose_b;
};

std::vector<PairSpec> enumerate_pairs(const DataConfig& cfg, uint64_t seed) {
  std::vector<PairSpec> specs;
  specs.reserve(static_cast<size_t>(cfg.total_pairs()));
  RngState coin_root = RngState(seed).substream("data").substream("apose");
  uint64_t idx = 0;
  for (int c = 0; c < cfg.n_chars; ++c) {
    for (int a = 0; a < cfg.poses_per_char; ++a) {
      for (int b = 0; b < cfg.poses_per_char; ++b) {
        if (a == b && !cfg.include_identity_pairs) continue;
        uint32_t pose_b = static_cast<uint32_t>(b);
        RngState coin = coin_root.substream(idx);
        if (coin.coin(cfg.apose_fraction)) pose_b = kAposePoseId;
        specs.push_back({static_cast<uint32_t>(c), static_cast<uint32_t>(a), pose_b});
        ++idx;
      }
    }
  }
  // deterministic Fisher-Yates so the eval tail spans identities
  RngState shuffle = RngState(seed).substream("data").substream("shuffle");
  for (size_t i = specs.size(); i > 1; --i) {
    const size_t j = shuffle.next_below(i);
    std::swap(specs[i - 1], specs[j]);
  }
  return specs;
}

}  // namespace

std::string serialize_records(const std::vector<TrainingPair>& pairs, int dim) {
  std::string out;
  for (const TrainingPair& p : pairs) {
    append_u32_le(out, p.char_id);
    append_u32_le(out, p.pose_a_id);
    append_u32_le(out, p.pose_b_id);
    append_u32_le(out, p.flags);
    append_u32_le(out, static_cast<uint32_t>(p.skel_b.bone_count()));
    append_u32_le(out, static_cast<uint32_t>(p.shape_b.n_surface()));
    append_u32_le(out, static_cast<uint32_t>(p.shape_b.n_sharp()));
    append_u32_le(out, static_cast<uint32_t>(p.shape_b.n_queries()));
    append_u32_le(out, p.raster_w);
    append_u32_le(out, p.raster_h);
    append_doubles_as_f32(out, p.skel_b.ps);
    append_doubles_as_f32(out, p.skel_b.pe);
    append_f32_le(out, p.shape_b.surface.data(), p.shape_b.surface.size());
    append_f32_le(out, p.shape_b.sharp.data(), p.shape_b.sharp.size());
    append_f32_le(out, p.shape_b.queries.data(), p.shape_b.queries.size());
    append_f32_le(out, p.shape_b.sdf.data(), p.shape_b.sdf.size());
    out.append(reinterpret_cast<const char*>(p.raster_bits.data()), p.raster_bits.size());
  }
  return out;
}

std::vector<TrainingPair> parse_records(const std::string& blob, int dim) {
  std::vector<TrainingPair> pairs;
  size_t off = 0;
  auto take_f32s = [&](size_t count) {
    std::vector<float> v(count);
    read_f32_le(blob, off, v.data(), count);
    off += count * 4;
    return v;
  };
  while (off < blob.size()) {
    TrainingPair p;
    p.char_id = read_u32_le(blob, off); off += 4;
    p.pose_a_id = read_u32_le(blob, off); off += 4;
    p.pose_b_id = read_u32_le(blob, off); off += 4;
    p.flags = read_u32_le(blob, off); off += 4;
    const uint32_t n = read_u32_le(blob, off); off += 4;
    const uint32_t ns = read_u32_le(blob, off); off += 4;
    const uint32_t nk = read_u32_le(blob, off); off += 4;
    const uint32_t nq = read_u32_le(blob, off); off += 4;
    p.raster_w = read_u32_le(blob, off); off += 4;
    p.raster_h = read_u32_le(blob, off); off += 4;
    p.skel_b.dim = dim;
    auto ps = take_f32s(static_cast<size_t>(n) * dim);
    auto pe = take_f32s(static_cast<size_t>(n) * dim);
    p.skel_b.ps.assign(ps.begin(), ps.end());
    p.skel_b.pe.assign(pe.begin(), pe.end());
    p.shape_b.dim = dim;
    p.shape_b.surface = take_f32s(static_cast<size_t>(ns) * dim);
    p.shape_b.sharp = take_f32s(static_cast<size_t>(nk) * dim);
    p.shape_b.queries = take_f32s(static_cast<size_t>(nq) * dim);
    p.shape_b.sdf = take_f32s(nq);
    p.shape_b.sharp_fallback = (p.flags & kFlagSharpFallback) != 0;
    const size_t raster_bytes = static_cast<size_t>((p.raster_w + 7) / 8) * p.raster_h;
    if (off + raster_bytes > blob.size()) throw IoError("dataset record truncated");
    p.raster_bits.assign(blob.begin() + static_cast<std::ptrdiff_t>(off),
                         blob.begin() + static_cast<std::ptrdiff_t>(off + raster_bytes));
    off += raster_bytes;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void build_dataset(const DataConfig& cfg, uint64_t seed, const std::string& out_dir) {
  if (cfg.n_chars < 1) throw Error("build_dataset: n_chars must be >= 1");
  if (cfg.poses_per_char < 2 && !cfg.include_identity_pairs)
    throw Error("build_dataset: need at least 2 poses per character for cross pairs");
  if (cfg.eval_pairs >= cfg.total_pairs())
    throw Error("build_dataset: eval_pairs must be smaller than the total pair count");

  const SkeletonTopology topo = SkeletonTopology::humanoid10();
  const auto specs = enumerate_pairs(cfg, seed);

  std::vector<TrainingPair> train, eval;
  const size_t n_train = specs.size() - static_cast<size_t>(cfg.eval_pairs);
  for (size_t i = 0; i < specs.size(); ++i) {
    TrainingPair p = build_pair(seed, specs[i].char_id, specs[i].pose_a, specs[i].pose_b,
                                static_cast<uint64_t>(i), topo, cfg);
    if (i < n_train)
      train.push_back(std::move(p));
    else
      eval.push_back(std::move(p));
  }

  const std::string train_blob = serialize_records(train, 2);
  const std::string eval_blob = serialize_records(eval, 2);

  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["seed"] = seed;
  manifest["dim"] = 2;
  manifest["config"] = data_config_to_json(cfg);
  manifest["counts"] = {{"pairs", specs.size()}, {"train", train.size()}, {"eval", eval.size()}};
  manifest["checksums"] = {{"train_fnv1a64", fnv1a64_bytes(train_blob)},
                           {"eval_fnv1a64", fnv1a64_bytes(eval_blob)}};
  fs::create_directories(out_dir);
  write_file_atomic((fs::path(out_dir) / "train.bin").string(), train_blob);
  write_file_atomic((fs::path(out_dir) / "eval.bin").string(), eval_blob);
  write_file_atomic((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  nlohmann::json manifest = nlohmann::json::parse(read_file((fs::path(dir) / "manifest.json").string()));
  ds.seed = manifest.at("seed").get<uint64_t>();
  ds.dim = manifest.at("dim").get<int>();
  ds.config = data_config_from_json(manifest.at("config"), "/config");
  const std::string train_blob = read_file((fs::path(dir) / "train.bin").string());
  const std::string eval_blob = read_file((fs::path(dir) / "eval.bin").string());
  if (manifest.at("checksums").at("train_fnv1a64").get<uint64_t>() != fnv1a64_bytes(train_blob))
    throw IoError("dataset train blob checksum mismatch in " + dir);
  if (manifest.at("checksums").at("eval_fnv1a64").get<uint64_t>() != fnv1a64_bytes(eval_blob))
    throw IoError("dataset eval blob checksum mismatch in " + dir);
  ds.train = parse_records(train_blob, ds.dim);
  ds.eval = parse_records(eval_blob, ds.dim);
  return ds;
}

DataConfig data_config_from_json(const nlohmann::json& j, const std::string& ptr) {
  DataConfig d;
  d.n_chars = positive_int(j, ptr, "n_chars", d.n_chars);
  d.poses_per_char = positive_int(j, ptr, "poses_per_char", d.poses_per_char);
  d.include_identity_pairs = field_or<bool>(j, ptr, "include_identity_pairs", d.include_identity_pairs);
  d.apose_fraction = unit_fraction(j, ptr, "apose_fraction", d.apose_fraction);
  d.apose_angle_deg = field_or<double>(j, ptr, "apose_angle_deg", d.apose_angle_deg);
  bool angle_ok = false;
  for (double a : {35.0, 45.0, 50.0, 55.0}) angle_ok = angle_ok || d.apose_angle_deg == a;
  if (!angle_ok) throw ConfigError(ptr + "/apose_angle_deg", "expected one of 35, 45, 50, 55");
  d.n_surface = positive_int(j, ptr, "n_surface", d.n_surface);
  d.n_sharp = positive_int(j, ptr, "n_sharp", d.n_sharp);
  d.n_queries = positive_int(j, ptr, "n_queries", d.n_queries);
  d.raster_w = positive_int(j, ptr, "raster_w", d.raster_w);
  d.raster_h = positive_int(j, ptr, "raster_h", d.raster_h);
  if (d.raster_w < 8 || d.raster_h < 8) throw ConfigError(ptr + "/raster_w", "raster must be at least 8x8");
  d.eval_pairs = field_or<int>(j, ptr, "eval_pairs", d.eval_pairs);
  if (d.eval_pairs < 0) throw ConfigError(ptr + "/eval_pairs", "expected non-negative integer");
  d.limit_scale = field_or<double>(j, ptr, "limit_scale", d.limit_scale);
  if (d.limit_scale <= 0.0 || d.limit_scale > 1.0)
    throw ConfigError(ptr + "/limit_scale", "expected value in (0,1]");
  d.margin = field_or<double>(j, ptr, "margin", d.margin);
  if (d.margin <= 0.0 || d.margin > 1.0) throw ConfigError(ptr + "/margin", "expected value in (0,1]");
  return d;
}

nlohmann::json data_config_to_json(const DataConfig& cfg) {
  return nlohmann::json{{"n_chars", cfg.n_chars},
                        {"poses_per_char", cfg.poses_per_char},
                        {"include_identity_pairs", cfg.include_identity_pairs},
                        {"apose_fraction", cfg.apose_fraction},
                        {"apose_angle_deg", cfg.apose_angle_deg},
                        {"n_surface", cfg.n_surface},
                        {"n_sharp", cfg.n_sharp},
                        {"n_queries", cfg.n_queries},
                        {"raster_w", cfg.raster_w},
                        {"raster_h", cfg.raster_h},
                        {"eval_pairs", cfg.eval_pairs},
                        {"limit_scale", cfg.limit_scale},
                        {"margin", cfg.margin}};
}

}  // namespace poseflow
