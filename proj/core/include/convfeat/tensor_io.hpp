#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "convfeat/tensor.hpp"

namespace convfeat {

// On-disk element type of a tensor payload. In memory everything is f64;
// f32 payloads are widened on load and produced by rounding on save.
enum class Dtype : std::uint8_t { f64 = 0, f32 = 1 };

Dtype dtype_from_string(const std::string& s);
const char* dtype_to_string(Dtype d);

// Flat binary tensor block:
//   magic "CPT1", u32 rank, rank x u64 extents, u8 dtype code (0=f64, 1=f32),
//   then raw little-endian element data.
// Throws FormatError on bad magic or truncation, IoError on stream failure.
void write_tensor(std::ostream& os, const Tensor& t, Dtype dtype);
Tensor read_tensor(std::istream& is, Dtype* stored_dtype = nullptr);

void save_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype);
Tensor load_tensor(const std::filesystem::path& path, Dtype* stored_dtype = nullptr);

}  // namespace convfeat
