#include "convfeat/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "convfeat/errors.hpp"
#include "convfeat/image_io.hpp"
#include "convfeat/parallel.hpp"

namespace convfeat {

Tensor rescale_bilinear(const Tensor& img, int side) {
    if (img.rank() != 2) throw ShapeMismatch("rescale_bilinear expects a rank-2 image");
    if (side < 1) throw BadParam("rescale side must be >= 1");
    const std::size_t sh = img.extent(0), sw = img.extent(1);
    const std::size_t d = static_cast<std::size_t>(side);
    Tensor out({d, d});

    auto src_coord = [](std::size_t dst, std::size_t dst_n, std::size_t src_n) {
        if (dst_n == 1) return (static_cast<double>(src_n) - 1.0) / 2.0;
        return static_cast<double>(dst) * (static_cast<double>(src_n) - 1.0) /
               (static_cast<double>(dst_n) - 1.0);
    };

    for (std::size_t y = 0; y < d; ++y) {
        const double fy = src_coord(y, d, sh);
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, sh - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < d; ++x) {
            const double fx = src_coord(x, d, sw);
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, sw - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = (1.0 - wx) * img(y0, x0) + wx * img(y0, x1);
            const double bot = (1.0 - wx) * img(y1, x0) + wx * img(y1, x1);
            out(y, x) = (1.0 - wy) * top + wy * bot;
        }
    }
    return out;
}

namespace {

SplitDataset split_pool(std::vector<LabeledImage> pool, std::vector<std::string> class_names,
                        const SplitFractions& fractions, Rng& rng) {
    if (fractions.train < 0 || fractions.validation < 0 ||
        fractions.train + fractions.validation > 1.0) {
        throw BadParam("split fractions must be nonnegative and sum to <= 1");
    }
    shuffle(pool, rng);
    const std::size_t n = pool.size();
    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(fractions.train * static_cast<double>(n)));
    const std::size_t n_val =
        static_cast<std::size_t>(std::floor(fractions.validation * static_cast<double>(n)));

    SplitDataset out;
    out.class_names = std::move(class_names);
    out.train.assign(std::make_move_iterator(pool.begin()),
                     std::make_move_iterator(pool.begin() + n_train));
    out.validation.assign(std::make_move_iterator(pool.begin() + n_train),
                          std::make_move_iterator(pool.begin() + n_train + n_val));
    out.test.assign(std::make_move_iterator(pool.begin() + n_train + n_val),
                    std::make_move_iterator(pool.end()));
    return out;
}

bool has_image_ext(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".pgm" || ext == ".png";
}

}  // namespace

SplitDataset load_directory(const std::filesystem::path& root, int input_side,
                            const SplitFractions& fractions, Rng& rng) {
    if (!std::filesystem::is_directory(root)) {
        throw IoError("dataset root is not a directory: " + root.string());
    }
    std::vector<std::string> class_names;
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
    }
    std::sort(class_names.begin(), class_names.end());
    if (class_names.empty()) throw IoError("no class directories under " + root.string());

    std::vector<std::filesystem::path> files;
    std::vector<int> file_class;
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        std::vector<std::filesystem::path> class_files;
        for (const auto& entry : std::filesystem::directory_iterator(root / class_names[c])) {
            if (entry.is_regular_file() && has_image_ext(entry.path())) {
                class_files.push_back(entry.path());
            }
        }
        if (class_files.empty()) {
            throw EmptyClass("class directory has no images: " + class_names[c]);
        }
        std::sort(class_files.begin(), class_files.end());
        for (auto& f : class_files) {
            files.push_back(std::move(f));
            file_class.push_back(static_cast<int>(c));
        }
    }

    // Decode in parallel into fixed slots; order stays the sorted path order.
    std::vector<LabeledImage> pool(files.size());
    parallel_for(files.size(), [&](std::size_t i) {
        LabeledImage li;
        li.pixels = rescale_bilinear(read_image(files[i]), input_side);
        li.class_id = file_class[i];
        li.source_path = files[i].string();
        pool[i] = std::move(li);
    });
    return split_pool(std::move(pool), std::move(class_names), fractions, rng);
}

void export_manifest(const SplitDataset& data, const std::filesystem::path& csv_path) {
    std::ofstream os(csv_path);
    if (!os) throw IoError("cannot open for writing: " + csv_path.string());
    os << "path,class_id,split\n";
    auto dump = [&](const std::vector<LabeledImage>& split, const char* name) {
        for (const auto& img : split) {
            os << img.source_path << "," << img.class_id << "," << name << "\n";
        }
    };
    dump(data.train, "train");
    dump(data.validation, "validation");
    dump(data.test, "test");
    if (!os) throw IoError("failed writing " + csv_path.string());
}

void export_images(const SplitDataset& data, const std::filesystem::path& root) {
    std::filesystem::create_directories(root);
    std::vector<int> counters(data.class_names.size(), 0);
    for (const auto& name : data.class_names) {
        std::filesystem::create_directories(root / name);
    }
    auto dump = [&](const std::vector<LabeledImage>& split) {
        for (const auto& img : split) {
            const auto& cls = data.class_names[static_cast<std::size_t>(img.class_id)];
            char name[32];
            std::snprintf(name, sizeof(name), "%05d.pgm", counters[img.class_id]++);
            write_pgm(root / cls / name, img.pixels);
        }
    };
    dump(data.train);
    dump(data.validation);
    dump(data.test);
}

SplitDataset make_split(std::vector<LabeledImage> pool, std::vector<std::string> class_names,
                        const SplitFractions& fractions, Rng& rng) {
    return split_pool(std::move(pool), std::move(class_names), fractions, rng);
}

}  // namespace convfeat
