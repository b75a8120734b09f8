#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "snp/tensor.hpp"

namespace snp {

// W is out x in; y = W x + b.
struct DenseLayer {
    Tensor2D W;
    std::vector<double> b;
};

// Kernel stored flat in (out_ch, in_ch, kh, kw) order.
struct Conv2dLayer {
    std::size_t out_ch = 0;
    std::size_t in_ch = 0;
    std::size_t kh = 0;
    std::size_t kw = 0;
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::vector<double> kernel;
    std::vector<double> b;

    double k(std::size_t o, std::size_t c, std::size_t y, std::size_t x) const {
        return kernel[((o * in_ch + c) * kh + y) * kw + x];
    }
    double& k(std::size_t o, std::size_t c, std::size_t y, std::size_t x) {
        return kernel[((o * in_ch + c) * kh + y) * kw + x];
    }
};

struct ReluLayer {};
struct FlattenLayer {};

struct Layer {
    std::string name;
    std::variant<DenseLayer, Conv2dLayer, ReluLayer, FlattenLayer> op;

    bool is_weighted() const {
        return std::holds_alternative<DenseLayer>(op) || std::holds_alternative<Conv2dLayer>(op);
    }
    const char* kind() const;
};

// Where a weighted layer's input units come from and at what granularity
// they can be pruned.
struct PruneSite {
    enum class Kind {
        None,               // input is raw data; never pruned
        DenseUnits,         // dense consumer, dense producer
        ConvChannels,       // conv consumer; units are its input channels
        FlattenedChannels,  // dense consumer fed by a conv through flatten
    };
    Kind kind = Kind::None;
    std::size_t units = 0;            // prunable unit count (n or C_in)
    std::size_t group = 1;            // consumer columns per unit (H*W for FlattenedChannels)
    std::ptrdiff_t producer = -1;     // index of the producing weighted layer, -1 if raw input
    std::size_t spatial = 1;          // capture samples per batch sample (H*W of the feature map)
};

// Per weighted layer: its INPUT features as a units x samples matrix. For
// channel sites each spatial position contributes one sample column.
struct ActivationCapture {
    std::map<std::string, Tensor2D> features;
};

class Network {
  public:
    std::vector<Layer> layers;
    std::vector<std::size_t> input_shape;  // {features} or {channels, height, width}

    // Validates that adjacent layer shapes compose; throws ShapeError with
    // the offending layer index otherwise. Also fills per-layer input shapes.
    void validate() const;

    // Shape flowing INTO layer i (after validate-style propagation).
    std::vector<std::size_t> shape_before(std::size_t layer_index) const;
    std::vector<std::size_t> output_shape() const;

    std::size_t input_size() const;
    std::size_t output_size() const;

    // Prune-site analysis for every weighted layer, in layer order.
    std::vector<std::pair<std::size_t, PruneSite>> prune_sites() const;

    std::vector<std::size_t> weighted_layer_indices() const;
};

struct ForwardResult {
    Tensor2D outputs;  // samples x output_features
    std::optional<ActivationCapture> capture;
};

// Runs the network on a sample-major batch (samples x input_size). When
// capture is requested, every weighted layer's input features are recorded
// at the granularity its prune site calls for.
ForwardResult forward(const Network& net, const Tensor2D& batch, bool capture);

// FLOPs per sample and parameter count. Dense: 2*n_in*n_out FLOPs,
// n_in*n_out + n_out params. Conv: 2*C_in*kH*kW*C_out*H_out*W_out FLOPs.
// Relu/flatten contribute nothing.
std::pair<std::uint64_t, std::uint64_t> count_flops_params(const Network& net);

}  // namespace snp
