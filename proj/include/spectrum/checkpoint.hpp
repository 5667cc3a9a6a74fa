#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "spectrum/tensor.hpp"

namespace spectrum {

struct ShardInfo {
    std::filesystem::path path;
    std::uint64_t data_begin = 0; // file offset of the data section
    std::uint64_t data_size = 0;  // bytes following the header
};

struct TensorEntry {
    std::size_t shard = 0;
    std::string dtype; // header spelling; validated on load, not on open
    std::vector<std::size_t> shape;
    std::uint64_t begin = 0; // offsets within the shard's data section
    std::uint64_t end = 0;
};

// Immutable after open; safe to share across concurrent load_tensor calls.
struct CheckpointManifest {
    std::string model_id;
    std::vector<ShardInfo> shards;
    std::map<std::string, TensorEntry> tensors;
};

// Opens a single container file, or a directory holding a shard index
// ("*.safetensors.index.json" with a "weight_map") plus shard files.
// Reads headers only; tensor data stays on disk until load_tensor.
CheckpointManifest open_checkpoint(const std::filesystem::path& path);

// Loads and decodes one tensor to float32. Non-finite values are counted
// on the record, never dropped.
TensorRecord load_tensor(const CheckpointManifest& manifest, const std::string& name);

// Raw, already-encoded tensor for byte-level fixture construction.
struct RawTensor {
    std::string name;
    Dtype dtype = Dtype::f32;
    std::vector<std::size_t> shape;
    std::vector<std::uint8_t> bytes;
};

// Writes a container: 8-byte LE header length, JSON header with sorted
// keys, then the raw data section. Deterministic for identical input.
void write_container(const std::vector<RawTensor>& tensors, const std::filesystem::path& path);

// Encodes records per their dtype and writes a container fixture.
void write_fixture(const std::vector<TensorRecord>& tensors, const std::filesystem::path& path);

} // namespace spectrum
