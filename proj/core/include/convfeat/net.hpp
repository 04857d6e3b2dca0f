#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "convfeat/tensor.hpp"

namespace convfeat {

enum class LayerKind { conv, maxpool, fully_connected, softmax };

enum class Activation { none, relu, maxout };

// One network layer. Kernel/stride/padding are explicit (h,w) pairs; nothing
// is ever inferred. For conv layers `filters` counts the linear filters
// BEFORE maxout grouping, so a maxout layer outputs filters/maxout_k
// channels. dropout_rate applies to this layer's *input* during training
// (inverted dropout: kept values are scaled by 1/(1-p), eval is a plain pass).
struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    int filters = 0;  // conv only
    int kernel_h = 0, kernel_w = 0;
    int stride_h = 1, stride_w = 1;
    int pad_h = 0, pad_w = 0;
    bool ceil_mode = false;  // maxpool rounding of the output extent
    int units = 0;           // fully_connected only
    Activation activation = Activation::none;
    int maxout_k = 1;
    double dropout_rate = 0.0;
};

struct NetworkSpec {
    std::string name;
    int input_side = 0;
    int n_classes = 0;  // 0 = bind to the dataset at training time
    std::vector<LayerSpec> layers;
    std::string notes;
};

// Output shape of every layer, in order (entry i = layer i's output; the
// input itself is not included). Convolution/pooling extents follow
//   out = round((in + 2*pad - kernel)/stride) + 1
// with round = floor, or ceil for pool layers with ceil_mode (windows are
// clipped to the input). Throws ShapePlanError when an extent drops below 1
// or a layer is malformed (e.g. filters not divisible by maxout_k, softmax
// not last, n_classes unset).
std::vector<Shape> shape_plan(const NetworkSpec& spec);

// Activation indices (0 = raw input, i = output of layer i) at which feature
// matrices are extracted: the raw input plus one tap per conv/fc layer,
// taken after its following maxpool when present. The classifier softmax is
// not a tap.
std::vector<std::size_t> feature_taps(const NetworkSpec& spec);

// Flattened width of feature tap `tap` (throws LayerOutOfRange).
std::size_t feature_dim(const NetworkSpec& spec, int tap);

NetworkSpec load_network(const std::filesystem::path& json_path);
void save_network(const NetworkSpec& spec, const std::filesystem::path& json_path);

const char* layer_kind_name(LayerKind k);
const char* activation_name(Activation a);

}  // namespace convfeat
