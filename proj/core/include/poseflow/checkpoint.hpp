#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "poseflow/params.hpp"

namespace poseflow {

/// Checkpoint = `manifest.json` + `params.bin` inside a directory.
/// The manifest lists {name, shape, byte_offset, byte_length} per parameter
/// plus the RNG seed, the step counter, and a free-form `extras` object
/// (normalization statistics, config echo). The blob holds raw
/// little-endian f32 values in manifest order. Round trips are bit-exact.
void save_checkpoint(const std::string& dir, const ParameterStore& store, uint64_t seed,
                     int64_t step, const nlohmann::json& extras);

/// Loads into a fresh store. `extras_out` may be null.
ParameterStore load_checkpoint(const std::string& dir, uint64_t* seed_out = nullptr,
                               int64_t* step_out = nullptr, nlohmann::json* extras_out = nullptr);

// Little-endian f32 blob helpers shared with the dataset writer.
void append_f32_le(std::string& out, const float* data, size_t count);
void read_f32_le(const std::string& in, size_t offset, float* data, size_t count);
void append_u32_le(std::string& out, uint32_t v);
uint32_t read_u32_le(const std::string& in, size_t offset);

void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace poseflow
