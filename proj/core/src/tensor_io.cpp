#include "convfeat/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace convfeat {

static_assert(std::endian::native == std::endian::little,
              "CPT1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'P', 'T', '1'};

template <typename T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError("truncated tensor block");
    return v;
}

}  // namespace

Dtype dtype_from_string(const std::string& s) {
    if (s == "f64") return Dtype::f64;
    if (s == "f32") return Dtype::f32;
    throw FormatError("unknown dtype '" + s + "'");
}

const char* dtype_to_string(Dtype d) {
    return d == Dtype::f64 ? "f64" : "f32";
}

void write_tensor(std::ostream& os, const Tensor& t, Dtype dtype) {
    os.write(kMagic, 4);
    write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) write_raw<std::uint64_t>(os, e);
    write_raw<std::uint8_t>(os, static_cast<std::uint8_t>(dtype));
    if (dtype == Dtype::f64) {
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
    } else {
        std::vector<float> narrow(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) narrow[i] = static_cast<float>(t[i]);
        os.write(reinterpret_cast<const char*>(narrow.data()),
                 static_cast<std::streamsize>(narrow.size() * sizeof(float)));
    }
    if (!os) throw IoError("failed writing tensor block");
}

Tensor read_tensor(std::istream& is, Dtype* stored_dtype) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("bad tensor magic");
    }
    const auto rank = read_raw<std::uint32_t>(is);
    if (rank > 16) throw FormatError("implausible tensor rank");
    Shape shape(rank);
    for (auto& e : shape) e = read_raw<std::uint64_t>(is);
    const auto code = read_raw<std::uint8_t>(is);
    if (code > 1) throw FormatError("unknown dtype code");
    const Dtype dtype = static_cast<Dtype>(code);
    if (stored_dtype) *stored_dtype = dtype;

    const std::size_t n = shape_volume(shape);
    std::vector<double> data(n);
    if (dtype == Dtype::f64) {
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
    } else {
        std::vector<float> narrow(n);
        is.read(reinterpret_cast<char*>(narrow.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
        for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<double>(narrow[i]);
    }
    if (!is) throw FormatError("truncated tensor data");
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    write_tensor(os, t, dtype);
}

Tensor load_tensor(const std::filesystem::path& path, Dtype* stored_dtype) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path.string());
    return read_tensor(is, stored_dtype);
}

}  // namespace convfeat
