#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "graphonomy/convolution.hpp"
#include "graphonomy/optim.hpp"
#include "graphonomy/tensor.hpp"

namespace graphonomy::seg {

// Dense image features stored [B*H*W x C] with explicit extents.
template <typename S>
struct FeatureMap {
    num::Tensor<S> values;
    std::int64_t batch = 1;
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::int64_t channels = 0;
};

template <typename S>
FeatureMap<S> make_feature_map(num::Tensor<S> values, std::int64_t batch, std::int64_t height,
                               std::int64_t width) {
    if (values.rank() != 2 || values.dim(0) != batch * height * width)
        throw DimensionError("feature map: tensor " + num::shape_str(values.shape()) +
                             " does not match B*H*W=" + std::to_string(batch * height * width));
    const std::int64_t c = values.dim(1);
    return {std::move(values), batch, height, width, c};
}

// Small convolutional encoder standing in for a heavy pretrained backbone.
// stem conv (stride 1), one stride-2 conv per downsampling, one closing
// stride-1 conv at the final width.
struct BackboneConfig {
    std::vector<int> widths{16, 32, 64}; // stem width, then one per stride-2 stage
    int output_stride = 4;               // one of {4, 8, 16}
    int kernel = 3;

    int downsamples() const {
        switch (output_stride) {
        case 4: return 2;
        case 8: return 3;
        case 16: return 4;
        default:
            throw ConfigError("backbone output_stride must be 4, 8 or 16, got " +
                              std::to_string(output_stride));
        }
    }

    // Conv plan as (in_channels, out_channels, stride) triples for RGB input.
    std::vector<std::array<int, 3>> plan() const {
        const int down = downsamples();
        if (static_cast<int>(widths.size()) != down + 1)
            throw ConfigError("backbone widths must list " + std::to_string(down + 1) +
                              " stage widths for output_stride " + std::to_string(output_stride));
        std::vector<std::array<int, 3>> stages;
        stages.push_back({3, widths[0], 1});
        for (int i = 0; i < down; ++i) stages.push_back({widths[i], widths[i + 1], 2});
        stages.push_back({widths.back(), widths.back(), 1});
        return stages;
    }

    int feature_channels() const { return widths.back(); }
};

// Parameter handles are registered in a shared store under "backbone/...".
template <typename S>
struct BackboneParams {
    std::vector<num::Tensor<S>> weights; // [k*k*Cin x Cout] each
    std::vector<num::Tensor<S>> biases;  // [Cout]
};

template <typename S>
BackboneParams<S> init_backbone(const BackboneConfig& config, num::ParameterStore<S>& store,
                                std::uint64_t seed) {
    BackboneParams<S> params;
    const auto plan = config.plan();
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const auto [cin, cout, stride] = plan[i];
        (void)stride;
        const std::int64_t fan_in = static_cast<std::int64_t>(config.kernel) * config.kernel * cin;
        const std::string base = "backbone/conv" + std::to_string(i);
        // relu gain: keeps the activation scale roughly constant through the
        // conv+relu stack (see uniform_init).
        const double gain = std::sqrt(6.0);
        params.weights.push_back(store.add(
            base + "/weight",
            num::uniform_init<S>({fan_in, cout}, fan_in, seed, base + "/weight", gain)));
        params.biases.push_back(
            store.add(base + "/bias", num::uniform_init<S>({cout}, fan_in, seed, base + "/bias")));
    }
    return params;
}

template <typename S>
FeatureMap<S> backbone_forward(const FeatureMap<S>& image, const BackboneConfig& config,
                               const BackboneParams<S>& params) {
    const auto plan = config.plan();
    if (image.height % config.output_stride != 0 || image.width % config.output_stride != 0)
        throw DimensionError("backbone: resolution " + std::to_string(image.height) + "x" +
                             std::to_string(image.width) + " not divisible by stride " +
                             std::to_string(config.output_stride));
    num::Tensor<S> x = image.values;
    std::int64_t h = image.height, w = image.width;
    const std::int64_t pad = config.kernel / 2;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const auto [cin, cout, stride] = plan[i];
        (void)cin; (void)cout;
        x = num::relu(num::conv2d(x, image.batch, h, w, params.weights[i], config.kernel,
                                  config.kernel, params.biases[i], stride, pad));
        h = (h + 2 * pad - config.kernel) / stride + 1;
        w = (w + 2 * pad - config.kernel) / stride + 1;
    }
    return make_feature_map(std::move(x), image.batch, h, w);
}

// 1x1 convolution onto K logit channels; K is the dataset's label count.
template <typename S>
struct ClassifyParams {
    num::Tensor<S> weight; // [C x K]
    num::Tensor<S> bias;   // [K]
};

template <typename S>
ClassifyParams<S> init_classify(const std::string& dataset_id, std::int64_t channels,
                                std::int64_t label_count, num::ParameterStore<S>& store,
                                std::uint64_t seed) {
    const std::string base = "head/" + dataset_id + "/classify";
    return {store.add(base + "/weight", num::uniform_init<S>({channels, label_count}, channels, seed,
                                                             base + "/weight")),
            store.add(base + "/bias",
                      num::uniform_init<S>({label_count}, channels, seed, base + "/bias"))};
}

template <typename S>
FeatureMap<S> classify(const FeatureMap<S>& features, const ClassifyParams<S>& params) {
    num::Tensor<S> logits = num::add_rowvec(num::matmul(features.values, params.weight), params.bias);
    return make_feature_map(std::move(logits), features.batch, features.height, features.width);
}

template <typename S>
FeatureMap<S> upsample_bilinear(const FeatureMap<S>& x, std::int64_t h_out, std::int64_t w_out) {
    num::Tensor<S> up =
        num::upsample_bilinear(x.values, x.batch, x.height, x.width, h_out, w_out);
    return make_feature_map(std::move(up), x.batch, h_out, w_out);
}

} // namespace graphonomy::seg
