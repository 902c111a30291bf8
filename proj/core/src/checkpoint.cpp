#include "poseflow/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace poseflow {

namespace fs = std::filesystem;

void append_f32_le(std::string& out, const float* data, size_t count) {
  for (size_t i = 0; i < count; ++i) {
    uint32_t bits = std::bit_cast<uint32_t>(data[i]);
    out.push_back(static_cast<char>(bits & 0xff));
    out.push_back(static_cast<char>((bits >> 8) & 0xff));
    out.push_back(static_cast<char>((bits >> 16) & 0xff));
    out.push_back(static_cast<char>((bits >> 24) & 0xff));
  }
}

void read_f32_le(const std::string& in, size_t offset, float* data, size_t count) {
  if (offset + count * 4 > in.size()) throw IoError("blob read out of range");
  const unsigned char* p = reinterpret_cast<const unsigned char*>(in.data()) + offset;
  for (size_t i = 0; i < count; ++i, p += 4) {
    uint32_t bits = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                    (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    data[i] = std::bit_cast<float>(bits);
  }
}

void append_u32_le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t read_u32_le(const std::string& in, size_t offset) {
  if (offset + 4 > in.size()) throw IoError("u32 read out of range");
  const unsigned char* p = reinterpret_cast<const unsigned char*>(in.data()) + offset;
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + tmp + " -> " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void save_checkpoint(const std::string& dir, const ParameterStore& store, uint64_t seed,
                     int64_t step, const nlohmann::json& extras) {
  fs::create_directories(dir);
  std::string blob;
  nlohmann::json plist = nlohmann::json::array();
  for (const auto& name : store.names()) {
    const Tensor& t = store.at(name);
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape;
    e["byte_offset"] = blob.size();
    e["byte_length"] = t.v.size() * 4;
    plist.push_back(std::move(e));
    append_f32_le(blob, t.v.data(), t.v.size());
  }
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["rng_seed"] = seed;
  manifest["step"] = step;
  manifest["params"] = std::move(plist);
  manifest["extras"] = extras;
  write_file_atomic((fs::path(dir) / "params.bin").string(), blob);
  write_file_atomic((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

ParameterStore load_checkpoint(const std::string& dir, uint64_t* seed_out, int64_t* step_out,
                               nlohmann::json* extras_out) {
  const std::string mpath = (fs::path(dir) / "manifest.json").string();
  nlohmann::json manifest = nlohmann::json::parse(read_file(mpath));
  const std::string blob = read_file((fs::path(dir) / "params.bin").string());
  ParameterStore store(manifest.at("rng_seed").get<uint64_t>());
  for (const auto& e : manifest.at("params")) {
    Shape shape = e.at("shape").get<Shape>();
    Tensor& t = store.create(e.at("name").get<std::string>(), shape);
    const size_t off = e.at("byte_offset").get<size_t>();
    const size_t len = e.at("byte_length").get<size_t>();
    if (len != t.v.size() * 4)
      throw IoError("checkpoint entry size mismatch for " + e.at("name").get<std::string>());
    read_f32_le(blob, off, t.v.data(), t.v.size());
  }
  if (seed_out) *seed_out = manifest.at("rng_seed").get<uint64_t>();
  if (step_out) *step_out = manifest.at("step").get<int64_t>();
  if (extras_out) *extras_out = manifest.value("extras", nlohmann::json::object());
  return store;
}

}  // namespace poseflow
