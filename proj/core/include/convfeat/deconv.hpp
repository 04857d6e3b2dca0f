#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "convfeat/engine.hpp"

namespace convfeat {

// One eval-mode forward pass of a single image together with everything
// project() needs to run the network backwards: pooling switches and the
// ReLU/maxout decisions the pass actually made.
struct ForwardRecord {
    Activations acts;   // batch of one
    ForwardTrace trace;
    int sample_id = -1;
};

// Activations are identical to a plain eval forward of the same image.
ForwardRecord record_forward(const Checkpoint& ckpt, const LabeledImage& image,
                             int sample_id = -1);

struct Projection {
    Tensor image;        // rank 2, network input side; raw values, NOT normalized
    int layer_index = 0; // feature tap the seed came from
    int feature_index = 0;
    int source_sample = -1;
    double activation_value = 0.0;  // max of the seeded channel's forward activation
};

// Back-projection of one feature map to pixel space. `layer_index` uses the
// feature-tap numbering shared with extraction (tap 0 = raw input, which is
// not projectable); `feature_index` picks a channel (conv taps) or unit (fc
// taps). Every other channel is zeroed, then the descent inverts each layer
// in turn: unpooling through the recorded switches, gating with the forward
// pass's own ReLU/maxout choices, and the exact adjoint of each
// convolution / fully-connected map. The whole descent is linear in the
// seeded map once the record is fixed.
Projection project(const Checkpoint& ckpt, const ForwardRecord& record, int layer_index,
                   int feature_index);

// (sample id, activation) pairs ranked by the maximum spatial activation of
// the chosen feature, descending; ties keep the lower sample id. k clamps to
// the set size.
std::vector<std::pair<int, double>> top_activating_samples(
    const Checkpoint& ckpt, const std::vector<LabeledImage>& images, int layer_index,
    int feature_index, int k);

// 8-bit PGM of the projection with min/max mapped onto [0,1] (a constant
// image exports as black), plus a JSON sidecar at path + ".json" recording
// layer, feature, sample id and activation value.
void export_projection_pgm(const Projection& p, const std::filesystem::path& path);

}  // namespace convfeat
