#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "convfeat/image_io.hpp"
#include "convfeat/rng.hpp"
#include "convfeat/tensor_io.hpp"
#include "oracles.hpp"

using namespace convfeat;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "convfeat_io_tests";
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

// Minimal valid PNGs generated offline: a 3x2 8-bit grayscale image with
// pixel rows (0,85,170)/(255,128,51), and a 2x2 8-bit RGB image whose
// channels are equal per pixel so gray conversion is weight-independent.
static const unsigned char kGrayPng[] = {
    137, 80, 78, 71, 13, 10, 26, 10, 0, 0, 0, 13, 73, 72, 68, 82, 0, 0, 0,
    3, 0, 0, 0, 2, 8, 0, 0, 0, 0, 184, 31, 57, 198, 0, 0, 0, 16, 73, 68,
    65, 84, 120, 156, 99, 96, 8, 93, 197, 240, 191, 193, 24, 0, 9, 136, 2,
    178, 165, 19, 53, 120, 0, 0, 0, 0, 73, 69, 78, 68, 174, 66, 96, 130};
static const unsigned char kRgbPng[] = {
    137, 80, 78, 71, 13, 10, 26, 10, 0, 0, 0, 13, 73, 72, 68, 82, 0, 0, 0,
    2, 0, 0, 0, 2, 8, 2, 0, 0, 0, 253, 212, 154, 115, 0, 0, 0, 21, 73, 68,
    65, 84, 120, 156, 99, 224, 226, 226, 58, 113, 226, 4, 3, 16, 252, 255,
    255, 31, 0, 28, 136, 5, 116, 88, 154, 18, 106, 0, 0, 0, 0, 73, 69, 78,
    68, 174, 66, 96, 130};

void dump(const fs::path& p, const unsigned char* data, std::size_t n) {
    std::ofstream os(p, std::ios::binary);
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
}

}  // namespace

TEST_CASE("tensor block round-trips exactly at f64") {
    Rng rng(31);
    for (const Shape& shape : {Shape{7}, Shape{3, 4}, Shape{2, 3, 4}, Shape{2, 2, 3, 3}}) {
        Tensor t = oracles::random_tensor(shape, rng, -5.0, 5.0);
        std::stringstream ss;
        write_tensor(ss, t, Dtype::f64);
        Dtype stored = Dtype::f32;
        Tensor back = read_tensor(ss, &stored);
        CHECK(stored == Dtype::f64);
        REQUIRE(back.shape() == t.shape());
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
    }
}

TEST_CASE("f32 payloads are half the width and round through float") {
    Tensor t({4}, {0.1, -2.5, 1e-7, 3.0});
    std::stringstream s64, s32;
    write_tensor(s64, t, Dtype::f64);
    write_tensor(s32, t, Dtype::f32);
    CHECK(s64.str().size() - s32.str().size() == 4 * sizeof(float));

    Dtype stored = Dtype::f64;
    Tensor back = read_tensor(s32, &stored);
    CHECK(stored == Dtype::f32);
    for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(back[i] == static_cast<double>(static_cast<float>(t[i])));
    }
}

TEST_CASE("tensor file save/load and error paths") {
    const fs::path p = temp_dir() / "t.cpt";
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    save_tensor(p, t, Dtype::f64);
    Tensor back = load_tensor(p);
    CHECK(back.shape() == t.shape());
    CHECK(oracles::max_abs_diff(back, t) == 0.0);

    // Saving what was loaded reproduces the file byte for byte.
    const fs::path p2 = temp_dir() / "t2.cpt";
    save_tensor(p2, back, Dtype::f64);
    CHECK(file_bytes(p) == file_bytes(p2));

    std::stringstream bad("NOPE....");
    CHECK_THROWS_AS(read_tensor(bad), FormatError);

    std::string whole = file_bytes(p);
    std::stringstream truncated(whole.substr(0, whole.size() - 3));
    CHECK_THROWS_AS(read_tensor(truncated), FormatError);

    CHECK_THROWS_AS(load_tensor(temp_dir() / "missing.cpt"), IoError);
}

TEST_CASE("pgm write/read round trip at 8-bit resolution") {
    Tensor img({2, 3});
    const double grid[] = {0.0, 1.0, 128.0 / 255.0, 37.0 / 255.0, 254.0 / 255.0, 9.0 / 255.0};
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = grid[i];
    const fs::path p = temp_dir() / "img.pgm";
    write_pgm(p, img);
    Tensor back = read_pgm(p);
    REQUIRE(back.shape() == img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == img[i]);

    // Out-of-range values clamp before quantizing.
    Tensor wild({1, 2}, {-3.0, 42.0});
    write_pgm(p, wild);
    back = read_pgm(p);
    CHECK(back[0] == 0.0);
    CHECK(back[1] == 1.0);

    CHECK_THROWS_AS(write_pgm(p, Tensor({2, 2, 2})), ShapeMismatch);
}

TEST_CASE("pgm reader handles ascii, comments and 16-bit data") {
    const fs::path p = temp_dir() / "ascii.pgm";
    {
        std::ofstream os(p);
        os << "P2\n# a comment\n2 2\n100\n0 50\n100 25\n";
    }
    Tensor img = read_pgm(p);
    CHECK(img(0, 0) == 0.0);
    CHECK(img(0, 1) == 0.5);
    CHECK(img(1, 0) == 1.0);
    CHECK(img(1, 1) == 0.25);

    const fs::path p16 = temp_dir() / "wide.pgm";
    {
        std::ofstream os(p16, std::ios::binary);
        os << "P5\n1 1\n65535\n";
        const unsigned char v[2] = {0x80, 0x00};  // 32768, big-endian per PNM
        os.write(reinterpret_cast<const char*>(v), 2);
    }
    Tensor wide = read_pgm(p16);
    CHECK(wide(0, 0) == doctest::Approx(32768.0 / 65535.0).epsilon(1e-12));

    const fs::path junk = temp_dir() / "junk.pgm";
    {
        std::ofstream os(junk);
        os << "P6\n1 1\n255\nxyz";
    }
    CHECK_THROWS_AS(read_pgm(junk), UnreadableImage);
}

TEST_CASE("png reader decodes grayscale and equal-channel color") {
    const fs::path pg = temp_dir() / "g.png";
    dump(pg, kGrayPng, sizeof(kGrayPng));
    Tensor g = read_png(pg);
    REQUIRE(g.shape() == Shape{2, 3});
    CHECK(g(0, 0) == 0.0);
    CHECK(g(0, 1) == 85.0 / 255.0);
    CHECK(g(0, 2) == 170.0 / 255.0);
    CHECK(g(1, 0) == 1.0);
    CHECK(g(1, 1) == 128.0 / 255.0);
    CHECK(g(1, 2) == 51.0 / 255.0);

    const fs::path pc = temp_dir() / "c.png";
    dump(pc, kRgbPng, sizeof(kRgbPng));
    Tensor c = read_png(pc);
    REQUIRE(c.shape() == Shape{2, 2});
    CHECK(c(0, 0) == doctest::Approx(10.0 / 255.0).epsilon(1e-6));
    CHECK(c(0, 1) == doctest::Approx(200.0 / 255.0).epsilon(1e-6));
    CHECK(c(1, 0) == 0.0);
    CHECK(c(1, 1) == 1.0);

    const fs::path bad = temp_dir() / "bad.png";
    dump(bad, kGrayPng, 20);  // truncated mid-IHDR
    CHECK_THROWS_AS(read_png(bad), UnreadableImage);
}

TEST_CASE("read_image dispatches on extension") {
    const fs::path p = temp_dir() / "d.PGM";
    Tensor img({1, 1}, {0.5});
    write_pgm(p, img);
    CHECK(read_image(p).size() == 1);  // case-insensitive extension
    CHECK_THROWS_AS(read_image(temp_dir() / "x.bmp"), UnreadableImage);
}
