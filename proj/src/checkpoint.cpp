#include "spectrum/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace spectrum {

static_assert(std::endian::native == std::endian::little,
              "container decoding assumes a little-endian host");

namespace {

std::string derive_model_id(const fs::path& path) {
    fs::path p = path;
    if (!p.has_filename()) p = p.parent_path(); // trailing slash
    std::string id = p.filename().string();
    const std::string suffix = ".safetensors";
    if (id.size() > suffix.size() && id.ends_with(suffix)) {
        id.resize(id.size() - suffix.size());
    }
    return id.empty() ? "checkpoint" : id;
}

// Parses one shard's header into manifest entries.
void read_shard_header(const fs::path& file, std::size_t shard_index,
                       CheckpointManifest& manifest) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint file: " + file.string());

    in.seekg(0, std::ios::end);
    const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0);
    if (file_size < 8) throw CheckpointError("malformed header: file too small: " + file.string());

    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), 8);
    if (!in || header_len > file_size - 8) {
        throw CheckpointError("malformed header: declared header length exceeds file size: " +
                              file.string());
    }

    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw CheckpointError("malformed header: truncated header: " + file.string());

    json doc;
    try {
        doc = json::parse(header);
    } catch (const json::exception& e) {
        throw CheckpointError("malformed header: " + std::string(e.what()) + ": " + file.string());
    }
    if (!doc.is_object()) throw CheckpointError("malformed header: not a JSON object: " + file.string());

    const std::uint64_t data_size = file_size - 8 - header_len;
    manifest.shards.push_back({file, 8 + header_len, data_size});

    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
    for (const auto& [name, meta] : doc.items()) {
        if (name == "__metadata__") continue;
        if (!meta.is_object() || !meta.contains("dtype") || !meta.contains("shape") ||
            !meta.contains("data_offsets")) {
            throw CheckpointError("malformed header: incomplete entry for tensor '" + name + "'");
        }
        TensorEntry entry;
        entry.shard = shard_index;
        entry.dtype = meta.at("dtype").get<std::string>();
        for (const auto& d : meta.at("shape")) {
            if (!d.is_number_unsigned()) {
                throw CheckpointError("malformed header: bad shape for tensor '" + name + "'");
            }
            entry.shape.push_back(d.get<std::size_t>());
        }
        const auto& off = meta.at("data_offsets");
        if (!off.is_array() || off.size() != 2) {
            throw CheckpointError("malformed header: bad data_offsets for tensor '" + name + "'");
        }
        entry.begin = off[0].get<std::uint64_t>();
        entry.end = off[1].get<std::uint64_t>();
        if (entry.begin > entry.end || entry.end > data_size) {
            throw CheckpointError("malformed header: byte range out of bounds for tensor '" +
                                  name + "'");
        }
        Dtype dt;
        if (parse_dtype(entry.dtype, dt)) {
            std::size_t count = 1;
            for (std::size_t d : entry.shape) count *= d;
            if (entry.end - entry.begin != count * dtype_size(dt)) {
                throw CheckpointError("malformed header: byte range does not match shape for "
                                      "tensor '" + name + "'");
            }
        }
        ranges.emplace_back(entry.begin, entry.end);
        if (!manifest.tensors.emplace(name, std::move(entry)).second) {
            throw CheckpointError("duplicate tensor name: '" + name + "'");
        }
    }

    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i) {
        if (ranges[i].first < ranges[i - 1].second) {
            throw CheckpointError("malformed header: overlapping byte ranges: " + file.string());
        }
    }
}

fs::path find_shard_index(const fs::path& dir) {
    const fs::path preferred = dir / "model.safetensors.index.json";
    if (fs::exists(preferred)) return preferred;
    std::vector<fs::path> candidates;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string n = e.path().filename().string();
        if (n.ends_with(".safetensors.index.json")) candidates.push_back(e.path());
    }
    std::sort(candidates.begin(), candidates.end());
    return candidates.empty() ? fs::path{} : candidates.front();
}

} // namespace

CheckpointManifest open_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) {
        throw CheckpointError("checkpoint not found: " + path.string());
    }

    CheckpointManifest manifest;
    manifest.model_id = derive_model_id(path);

    if (fs::is_directory(path)) {
        const fs::path index = find_shard_index(path);
        if (index.empty()) {
            const fs::path single = path / "model.safetensors";
            if (!fs::exists(single)) {
                throw CheckpointError("no shard index or model.safetensors in directory: " +
                                      path.string());
            }
            read_shard_header(single, 0, manifest);
            return manifest;
        }

        json doc;
        try {
            std::ifstream in(index);
            doc = json::parse(in);
        } catch (const json::exception& e) {
            throw CheckpointError("malformed shard index: " + std::string(e.what()));
        }
        if (!doc.contains("weight_map") || !doc.at("weight_map").is_object()) {
            throw CheckpointError("malformed shard index: missing weight_map: " + index.string());
        }

        std::set<std::string> shard_files;
        for (const auto& [tensor, shard] : doc.at("weight_map").items()) {
            if (!shard.is_string()) {
                throw CheckpointError("malformed shard index: bad entry for '" + tensor + "'");
            }
            shard_files.insert(shard.get<std::string>());
        }
        std::size_t idx = 0;
        for (const auto& f : shard_files) {
            read_shard_header(path / f, idx++, manifest);
        }
        for (const auto& [tensor, shard] : doc.at("weight_map").items()) {
            if (!manifest.tensors.count(tensor)) {
                throw CheckpointError("shard index names tensor missing from its shard: '" +
                                      tensor + "'");
            }
            (void)shard;
        }
        return manifest;
    }

    read_shard_header(path, 0, manifest);
    return manifest;
}

TensorRecord load_tensor(const CheckpointManifest& manifest, const std::string& name) {
    const auto it = manifest.tensors.find(name);
    if (it == manifest.tensors.end()) {
        throw CheckpointError("unknown tensor: '" + name + "'");
    }
    const TensorEntry& entry = it->second;

    Dtype dtype;
    if (!parse_dtype(entry.dtype, dtype)) {
        throw CheckpointError("tensor '" + name + "': unsupported dtype " + entry.dtype);
    }

    const ShardInfo& shard = manifest.shards.at(entry.shard);
    std::ifstream in(shard.path, std::ios::binary);
    if (!in) throw CheckpointError("tensor '" + name + "': cannot open shard");

    const std::uint64_t byte_count = entry.end - entry.begin;
    std::vector<std::uint8_t> bytes(byte_count);
    in.seekg(static_cast<std::streamoff>(shard.data_begin + entry.begin));
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(byte_count));
    if (!in || static_cast<std::uint64_t>(in.gcount()) != byte_count) {
        throw CheckpointError("tensor '" + name + "': byte range truncated");
    }

    TensorRecord record;
    record.name = name;
    record.shape = entry.shape;
    record.dtype = dtype;

    const std::size_t count = record.element_count();
    record.values.resize(count);
    switch (dtype) {
        case Dtype::f32:
            std::memcpy(record.values.data(), bytes.data(), count * 4);
            break;
        case Dtype::f16:
            for (std::size_t i = 0; i < count; ++i) {
                std::uint16_t h;
                std::memcpy(&h, bytes.data() + 2 * i, 2);
                record.values[i] = decode_f16(h);
            }
            break;
        case Dtype::bf16:
            for (std::size_t i = 0; i < count; ++i) {
                std::uint16_t b;
                std::memcpy(&b, bytes.data() + 2 * i, 2);
                record.values[i] = decode_bf16(b);
            }
            break;
    }

    for (float v : record.values) {
        if (!std::isfinite(v)) ++record.nonfinite_count;
    }
    return record;
}

void write_container(const std::vector<RawTensor>& tensors, const fs::path& path) {
    std::map<std::string, const RawTensor*> ordered;
    for (const auto& t : tensors) {
        if (!ordered.emplace(t.name, &t).second) {
            throw CheckpointError("duplicate tensor name: '" + t.name + "'");
        }
    }

    json header = json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : ordered) {
        json meta;
        meta["dtype"] = dtype_name(t->dtype);
        meta["shape"] = t->shape;
        meta["data_offsets"] = {offset, offset + t->bytes.size()};
        header[name] = std::move(meta);
        offset += t->bytes.size();
    }

    std::string header_str = header.dump(); // nlohmann objects are key-sorted
    while (header_str.size() % 8 != 0) header_str.push_back(' ');
    const std::uint64_t header_len = header_str.size();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write container: " + path.string());
    out.write(reinterpret_cast<const char*>(&header_len), 8);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& [name, t] : ordered) {
        out.write(reinterpret_cast<const char*>(t->bytes.data()),
                  static_cast<std::streamsize>(t->bytes.size()));
    }
    out.flush();
    if (!out) throw CheckpointError("write failed: " + path.string());
}

void write_fixture(const std::vector<TensorRecord>& tensors, const fs::path& path) {
    std::vector<RawTensor> raw;
    raw.reserve(tensors.size());
    for (const auto& t : tensors) {
        if (t.element_count() != t.values.size()) {
            throw CheckpointError("tensor '" + t.name + "': shape/value count mismatch");
        }
        RawTensor r;
        r.name = t.name;
        r.dtype = t.dtype;
        r.shape = t.shape;
        r.bytes.resize(t.values.size() * dtype_size(t.dtype));
        switch (t.dtype) {
            case Dtype::f32:
                std::memcpy(r.bytes.data(), t.values.data(), r.bytes.size());
                break;
            case Dtype::f16:
                for (std::size_t i = 0; i < t.values.size(); ++i) {
                    const std::uint16_t h = encode_f16(t.values[i]);
                    std::memcpy(r.bytes.data() + 2 * i, &h, 2);
                }
                break;
            case Dtype::bf16:
                for (std::size_t i = 0; i < t.values.size(); ++i) {
                    const std::uint16_t b = encode_bf16(t.values[i]);
                    std::memcpy(r.bytes.data() + 2 * i, &b, 2);
                }
                break;
        }
        raw.push_back(std::move(r));
    }
    write_container(raw, path);
}

} // namespace spectrum
