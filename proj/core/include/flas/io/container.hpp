#pragma once

#include "flas/numcore/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace flas::io {

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

// In-memory view of a named-array file: a sorted string header plus an
// ordered list of named tensors.
//
// On-disk layout (all integers little-endian):
//   magic "FLASARR\0" | u32 version (=1)
//   u32 header_count  | { u32 key_len, key, u32 value_len, value } ...
//   u32 array_count   | { u32 name_len, name, u8 dtype, u32 ndim, u64 dims[ndim], data } ...
// dtype 1 stores float32, 2 stores float64.
struct ArrayFile {
    std::map<std::string, std::string> header;
    std::vector<std::pair<std::string, Tensor>> arrays;

    void put(const std::string& name, const Tensor& t);
    bool contains(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    const std::string& header_value(const std::string& key) const;
};

void write_array_file(const std::filesystem::path& path, const ArrayFile& file, DType dtype = DType::f64);
ArrayFile read_array_file(const std::filesystem::path& path);

// Formats a double so that parsing it back yields the identical value.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& what);
long long parse_int(const std::string& s, const std::string& what);

}  // namespace flas::io
