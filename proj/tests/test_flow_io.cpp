#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "saliflow/flow_io.hpp"
#include "support/fixtures.hpp"

using namespace saliflow;
using namespace testsupport;

TEST_CASE("flo round trip is bit-exact for random fields") {
    auto dir = scratch_dir("flo");
    Rng rng(42);
    for (int i = 0; i < 50; ++i) {
        int h = 1 + static_cast<int>(rng.next_below(16));
        int w = 1 + static_cast<int>(rng.next_below(16));
        FlowField f = random_flow(h, w, rng, 100.0f);
        write_flo(f, dir / "f.flo");
        FlowField g = read_flo(dir / "f.flo");
        REQUIRE(g == f);
    }
}

TEST_CASE("2x2 zero flow file is exactly 44 bytes") {
    auto dir = scratch_dir("flo_size");
    write_flo(FlowField(2, 2), dir / "z.flo");
    CHECK(std::filesystem::file_size(dir / "z.flo") == 44);
}

TEST_CASE("flo rejects bad magic") {
    auto dir = scratch_dir("flo_magic");
    {
        std::ofstream f(dir / "bad.flo", std::ios::binary);
        float magic = 123.25f;
        std::int32_t w = 2, h = 2;
        f.write(reinterpret_cast<char*>(&magic), 4);
        f.write(reinterpret_cast<char*>(&w), 4);
        f.write(reinterpret_cast<char*>(&h), 4);
    }
    CHECK_THROWS_AS(read_flo(dir / "bad.flo"), FormatError);
}

TEST_CASE("flo rejects truncation and dimension overflow") {
    auto dir = scratch_dir("flo_trunc");
    write_flo(FlowField::constant(3, 3, 1.0f, -2.0f), dir / "ok.flo");

    // truncated payload
    {
        std::ifstream in(dir / "ok.flo", std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        std::ofstream out(dir / "cut.flo", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    }
    CHECK_THROWS_AS(read_flo(dir / "cut.flo"), FormatError);

    // absurd dimensions
    {
        std::ofstream f(dir / "huge.flo", std::ios::binary);
        float magic = kFlowMagic;
        std::int32_t w = 1 << 24, h = 1 << 24;
        f.write(reinterpret_cast<char*>(&magic), 4);
        f.write(reinterpret_cast<char*>(&w), 4);
        f.write(reinterpret_cast<char*>(&h), 4);
    }
    CHECK_THROWS_AS(read_flo(dir / "huge.flo"), FormatError);

    // negative dimension
    {
        std::ofstream f(dir / "neg.flo", std::ios::binary);
        float magic = kFlowMagic;
        std::int32_t w = -3, h = 2;
        f.write(reinterpret_cast<char*>(&magic), 4);
        f.write(reinterpret_cast<char*>(&w), 4);
        f.write(reinterpret_cast<char*>(&h), 4);
    }
    CHECK_THROWS_AS(read_flo(dir / "neg.flo"), FormatError);
}

TEST_CASE("write_flo refuses non-finite fields") {
    auto dir = scratch_dir("flo_nan");
    FlowField f(2, 2);
    f.u(0, 0) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(write_flo(f, dir / "nan.flo"), ValueError);
}

TEST_CASE("resize_flow rescales displacement vectors") {
    FlowField f = FlowField::constant(4, 4, 2.0f, 1.0f);
    FlowField up = resize_flow(f, 8, 8);
    REQUIRE(up.height() == 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            CHECK(up.u(y, x) == Catch::Approx(4.0).margin(1e-6));
            CHECK(up.v(y, x) == Catch::Approx(2.0).margin(1e-6));
        }
}
