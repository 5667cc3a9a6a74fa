#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "spectrum/checkpoint.hpp"

namespace testsupport {

namespace fs = std::filesystem;

// Fresh directory under the build tree, unique per tag.
inline fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("spectrum_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

inline spectrum::TensorRecord make_record(const std::string& name,
                                          std::vector<std::size_t> shape,
                                          std::vector<float> values,
                                          spectrum::Dtype dtype = spectrum::Dtype::f32) {
    spectrum::TensorRecord r;
    r.name = name;
    r.shape = std::move(shape);
    r.dtype = dtype;
    r.values = std::move(values);
    return r;
}

inline std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void spit(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Writes a container with a hand-crafted header, for corruption tests.
inline void write_raw_file(const fs::path& path, const std::string& header,
                           const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    const std::uint64_t len = header.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

} // namespace testsupport
