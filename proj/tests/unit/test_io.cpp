#include "flas/errors.hpp"
#include "flas/io/container.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace flas;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "flas_io_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Container, RoundTripIsBitExact) {
    io::ArrayFile f;
    f.header["kind"] = "demo";
    f.header["value"] = io::format_double(0.1);
    f.put("a", test_support::random_tensor({3, 4}, 1));
    f.put("b", Tensor::scalar(-2.5));
    const auto p = temp_path("rt.bin");
    io::write_array_file(p, f);
    auto g = io::read_array_file(p);
    EXPECT_EQ(g.header, f.header);
    EXPECT_TRUE(bit_equal(g.get("a"), f.get("a")));
    EXPECT_TRUE(bit_equal(g.get("b"), f.get("b")));
    EXPECT_EQ(io::parse_double(g.header_value("value"), "value"), 0.1);
}

TEST(Container, Float32Storage) {
    io::ArrayFile f;
    f.put("x", Tensor({2}, {0.1, 3.0}));
    const auto p = temp_path("f32.bin");
    io::write_array_file(p, f, io::DType::f32);
    auto g = io::read_array_file(p);
    EXPECT_EQ(g.get("x").data()[0], static_cast<double>(0.1f));
    EXPECT_EQ(g.get("x").data()[1], 3.0);
}

TEST(Container, RejectsBadMagicAndMissingNames) {
    const auto p = temp_path("bad.bin");
    std::ofstream(p) << "not a container";
    EXPECT_THROW(io::read_array_file(p), Error);
    io::ArrayFile f;
    EXPECT_THROW(f.get("nope"), Error);
    EXPECT_THROW(f.header_value("nope"), Error);
}

TEST(Container, ParseDiagnosticsNameTheField) {
    try {
        io::parse_double("abc", "train.lr");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("train.lr"), std::string::npos);
    }
    EXPECT_THROW(io::parse_int("1.5", "steps"), ConfigError);
}
