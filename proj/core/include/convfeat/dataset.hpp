#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "convfeat/rng.hpp"
#include "convfeat/tensor.hpp"

namespace convfeat {

struct LabeledImage {
    Tensor pixels;  // rank-2 grayscale, values in [0,1]
    int class_id = 0;
    std::string source_path;
};

struct SplitDataset {
    std::vector<LabeledImage> train;
    std::vector<LabeledImage> validation;
    std::vector<LabeledImage> test;
    std::vector<std::string> class_names;

    int n_classes() const { return static_cast<int>(class_names.size()); }
    std::size_t total() const { return train.size() + validation.size() + test.size(); }
};

// Train/validation fractions; test takes the remainder.
struct SplitFractions {
    double train = 0.825;
    double validation = 0.050;
};

// Bilinear resample of a grayscale image to side x side, corner-aligned:
// output corners sample input corners, so same-size rescale is the identity.
// Output values are convex combinations of input values. side must be >= 1
// (a 1-pixel output samples the image center).
Tensor rescale_bilinear(const Tensor& img, int side);

// Loads root/<class_name>/*.{pgm,png}, rescales every image to
// input_side x input_side, and splits with a seeded shuffle. Class names and
// file order are sorted before the shuffle, so loading is order-stable.
// Throws EmptyClass if a class directory has no images, UnreadableImage on
// decode failure.
SplitDataset load_directory(const std::filesystem::path& root, int input_side,
                            const SplitFractions& fractions, Rng& rng);

// Shuffles the pool with `rng` and cuts it into floor(train*N) /
// floor(validation*N) / remainder. Every image lands in exactly one split.
SplitDataset make_split(std::vector<LabeledImage> pool, std::vector<std::string> class_names,
                        const SplitFractions& fractions, Rng& rng);

struct SynthParams {
    int n_classes = 10;
    int per_class = 100;
    int side = 28;
    SplitFractions split;
};

// Renders a deterministic synthetic shape dataset: each class is a
// parameterized archetype (blob, ring, bar, cross, dotted texture, membrane
// arc, ...) drawn with per-sample random rotation, scale, offset and noise,
// so classes cohere visually while raw-pixel centroids blur. Throws BadParam
// if per_class < 3 or n_classes < 2.
SplitDataset synth_generate(const SynthParams& params, Rng& rng);

// CSV `path,class_id,split` over all three splits.
void export_manifest(const SplitDataset& data, const std::filesystem::path& csv_path);

// Writes every image as root/<class_name>/<index>.pgm (all splits pooled).
void export_images(const SplitDataset& data, const std::filesystem::path& root);

}  // namespace convfeat
