#include "flas/io/container.hpp"

#include "flas/errors.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace flas::io {

namespace {

constexpr char kMagic[8] = {'F', 'L', 'A', 'S', 'A', 'R', 'R', '\0'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

template <class T>
void put_raw(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ofstream& out, const std::string& s) {
    put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get_raw(std::ifstream& in, const std::filesystem::path& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("truncated array file: " + path.string());
    return v;
}

std::string get_string(std::ifstream& in, const std::filesystem::path& path) {
    const auto n = get_raw<std::uint32_t>(in, path);
    if (n > (1u << 24)) throw DataError("corrupt string length in " + path.string());
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw DataError("truncated array file: " + path.string());
    return s;
}

}  // namespace

void ArrayFile::put(const std::string& name, const Tensor& t) {
    for (auto& [n, existing] : arrays) {
        if (n == name) {
            existing = t;
            return;
        }
    }
    arrays.emplace_back(name, t);
}

bool ArrayFile::contains(const std::string& name) const {
    for (const auto& [n, t] : arrays) {
        if (n == name) return true;
    }
    return false;
}

const Tensor& ArrayFile::get(const std::string& name) const {
    for (const auto& [n, t] : arrays) {
        if (n == name) return t;
    }
    throw DataError("array '" + name + "' not found");
}

const std::string& ArrayFile::header_value(const std::string& key) const {
    auto it = header.find(key);
    if (it == header.end()) throw DataError("header field '" + key + "' missing");
    return it->second;
}

void write_array_file(const std::filesystem::path& path, const ArrayFile& file, DType dtype) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write(kMagic, sizeof(kMagic));
    put_raw<std::uint32_t>(out, kVersion);
    put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(file.header.size()));
    for (const auto& [k, v] : file.header) {
        put_string(out, k);
        put_string(out, v);
    }
    put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(file.arrays.size()));
    for (const auto& [name, t] : file.arrays) {
        put_string(out, name);
        put_raw<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
        put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
        for (auto e : t.shape()) put_raw<std::uint64_t>(out, e);
        for (double v : t.data()) {
            if (dtype == DType::f32) {
                put_raw<float>(out, static_cast<float>(v));
            } else {
                put_raw<double>(out, v);
            }
        }
    }
    if (!out) throw DataError("write failed: " + path.string());
}

ArrayFile read_array_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError(path.string() + " is not a named-array file");
    }
    const auto version = get_raw<std::uint32_t>(in, path);
    if (version != kVersion) {
        throw ConfigError(path.string() + ": unsupported container version " + std::to_string(version));
    }
    ArrayFile file;
    const auto n_header = get_raw<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < n_header; ++i) {
        auto k = get_string(in, path);
        auto v = get_string(in, path);
        file.header.emplace(std::move(k), std::move(v));
    }
    const auto n_arrays = get_raw<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < n_arrays; ++i) {
        auto name = get_string(in, path);
        const auto dtype = get_raw<std::uint8_t>(in, path);
        if (dtype != static_cast<std::uint8_t>(DType::f32) && dtype != static_cast<std::uint8_t>(DType::f64)) {
            throw DataError("array '" + name + "' has unknown dtype " + std::to_string(dtype));
        }
        const auto ndim = get_raw<std::uint32_t>(in, path);
        if (ndim == 0 || ndim > 8) throw DataError("array '" + name + "' has invalid rank");
        Shape shape(ndim);
        for (auto& e : shape) e = static_cast<std::size_t>(get_raw<std::uint64_t>(in, path));
        std::vector<double> data(shape_numel(shape));
        for (auto& v : data) {
            v = dtype == static_cast<std::uint8_t>(DType::f32) ? static_cast<double>(get_raw<float>(in, path))
                                                               : get_raw<double>(in, path);
        }
        file.arrays.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return file;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("field '" + what + "': expected a number, got '" + s + "'");
    }
}

long long parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("field '" + what + "': expected an integer, got '" + s + "'");
    }
}

}  // namespace flas::io
