#include "convfeat/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "convfeat/errors.hpp"

namespace convfeat {

namespace {

// Skips whitespace and '#' comment lines between PNM header tokens.
int next_pnm_token(std::istream& is, std::string& token) {
    token.clear();
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {}
        } else if (!std::isspace(c)) {
            break;
        }
    }
    if (c == EOF) return -1;
    token.push_back(static_cast<char>(c));
    while ((c = is.get()) != EOF && !std::isspace(c) && c != '#') {
        token.push_back(static_cast<char>(c));
    }
    if (c == '#') is.unget();
    return 0;
}

long pnm_int(std::istream& is, const std::filesystem::path& path) {
    std::string tok;
    if (next_pnm_token(is, tok) != 0) {
        throw UnreadableImage("truncated PGM header: " + path.string());
    }
    try {
        return std::stol(tok);
    } catch (...) {
        throw UnreadableImage("bad PGM header token '" + tok + "' in " + path.string());
    }
}

}  // namespace

Tensor read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw UnreadableImage("cannot open " + path.string());
    std::string magic;
    if (next_pnm_token(is, magic) != 0 || (magic != "P5" && magic != "P2")) {
        throw UnreadableImage("not a PGM file: " + path.string());
    }
    const long w = pnm_int(is, path);
    const long h = pnm_int(is, path);
    const long maxval = pnm_int(is, path);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
        throw UnreadableImage("bad PGM dimensions in " + path.string());
    }
    Tensor img({static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    const double denom = static_cast<double>(maxval);
    if (magic == "P2") {
        for (std::size_t i = 0; i < img.size(); ++i) {
            img[i] = static_cast<double>(pnm_int(is, path)) / denom;
        }
    } else {
        const bool wide = maxval > 255;
        std::vector<unsigned char> row(static_cast<std::size_t>(w) * (wide ? 2 : 1));
        std::size_t o = 0;
        for (long y = 0; y < h; ++y) {
            is.read(reinterpret_cast<char*>(row.data()),
                    static_cast<std::streamsize>(row.size()));
            if (!is) throw UnreadableImage("truncated PGM data: " + path.string());
            for (long x = 0; x < w; ++x) {
                const unsigned v = wide ? (row[2 * x] << 8 | row[2 * x + 1]) : row[x];
                img[o++] = static_cast<double>(v) / denom;
            }
        }
    }
    return img;
}

Tensor read_png(const std::filesystem::path& path) {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(
        std::fopen(path.string().c_str(), "rb"), &std::fclose);
    if (!fp) throw UnreadableImage("cannot open " + path.string());

    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw UnreadableImage("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw UnreadableImage("libpng init failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<unsigned char> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnreadableImage("libpng failed to decode " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    const int color = png_get_color_type(png, info);
    if (color & PNG_COLOR_MASK_COLOR) {
        png_set_rgb_to_gray(png, PNG_ERROR_ACTION_NONE, -1, -1);
    }
    png_read_update_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * h);
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = pixels.data() + y * stride;
    png_read_image(png, row_ptrs.data());
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor img({h, w});
    for (png_uint_32 y = 0; y < h; ++y) {
        for (png_uint_32 x = 0; x < w; ++x) {
            img(y, x) = pixels[y * stride + x] / 255.0;
        }
    }
    return img;
}

Tensor read_image(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm") return read_pgm(path);
    if (ext == ".png") return read_png(path);
    throw UnreadableImage("unsupported image format: " + path.string());
}

void write_pgm(const std::filesystem::path& path, const Tensor& img) {
    if (img.rank() != 2) throw ShapeMismatch("write_pgm expects a rank-2 tensor");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << "P5\n" << img.extent(1) << " " << img.extent(0) << "\n255\n";
    std::vector<unsigned char> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = std::clamp(img[i], 0.0, 1.0);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace convfeat
