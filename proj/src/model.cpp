#include "snp/model.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>

#include "snp/errors.hpp"

namespace snp {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    const std::size_t padded = in + 2 * pad;
    if (padded < k) return 0;
    return (padded - k) / stride + 1;
}

}  // namespace

const char* Layer::kind() const {
    if (std::holds_alternative<DenseLayer>(op)) return "dense";
    if (std::holds_alternative<Conv2dLayer>(op)) return "conv2d";
    if (std::holds_alternative<ReluLayer>(op)) return "relu";
    return "flatten";
}

void Network::validate() const {
    if (layers.empty()) {
        throw ShapeError("network has no layers");
    }
    if (input_shape.empty() || shape_product(input_shape) == 0) {
        throw ShapeError("network input_shape is empty");
    }
    std::vector<std::size_t> cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& layer = layers[i];
        const std::string where = "layer " + std::to_string(i) + " (" + layer.name + ")";
        if (const auto* d = std::get_if<DenseLayer>(&layer.op)) {
            if (cur.size() != 1) {
                throw ShapeError(where + ": dense input must be flat, got rank " +
                                 std::to_string(cur.size()));
            }
            if (cur[0] != d->W.cols()) {
                throw ShapeError(where + ": dense expects " + std::to_string(d->W.cols()) +
                                 " inputs, got " + std::to_string(cur[0]));
            }
            if (d->b.size() != d->W.rows()) {
                throw ShapeError(where + ": bias length " + std::to_string(d->b.size()) +
                                 " != output count " + std::to_string(d->W.rows()));
            }
            cur = {d->W.rows()};
        } else if (const auto* c = std::get_if<Conv2dLayer>(&layer.op)) {
            if (cur.size() != 3) {
                throw ShapeError(where + ": conv input must be (C,H,W), got rank " +
                                 std::to_string(cur.size()));
            }
            if (cur[0] != c->in_ch) {
                throw ShapeError(where + ": conv expects " + std::to_string(c->in_ch) +
                                 " channels, got " + std::to_string(cur[0]));
            }
            if (c->kernel.size() != c->out_ch * c->in_ch * c->kh * c->kw) {
                throw ShapeError(where + ": kernel size does not match declared dims");
            }
            if (c->b.size() != c->out_ch) {
                throw ShapeError(where + ": bias length != out_ch");
            }
            if (c->stride == 0) {
                throw ShapeError(where + ": stride must be >= 1");
            }
            const std::size_t ho = conv_out_dim(cur[1], c->kh, c->stride, c->pad);
            const std::size_t wo = conv_out_dim(cur[2], c->kw, c->stride, c->pad);
            if (ho == 0 || wo == 0) {
                throw ShapeError(where + ": kernel larger than padded input");
            }
            cur = {c->out_ch, ho, wo};
        } else if (std::holds_alternative<FlattenLayer>(layer.op)) {
            cur = {shape_product(cur)};
        }
        // relu keeps the shape
    }
}

std::vector<std::size_t> Network::shape_before(std::size_t layer_index) const {
    std::vector<std::size_t> cur = input_shape;
    for (std::size_t i = 0; i < layer_index; ++i) {
        const Layer& layer = layers[i];
        if (const auto* d = std::get_if<DenseLayer>(&layer.op)) {
            cur = {d->W.rows()};
        } else if (const auto* c = std::get_if<Conv2dLayer>(&layer.op)) {
            cur = {c->out_ch, conv_out_dim(cur[1], c->kh, c->stride, c->pad),
                   conv_out_dim(cur[2], c->kw, c->stride, c->pad)};
        } else if (std::holds_alternative<FlattenLayer>(layer.op)) {
            cur = {shape_product(cur)};
        }
    }
    return cur;
}

std::vector<std::size_t> Network::output_shape() const { return shape_before(layers.size()); }

std::size_t Network::input_size() const { return shape_product(input_shape); }

std::size_t Network::output_size() const { return shape_product(output_shape()); }

std::vector<std::size_t> Network::weighted_layer_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].is_weighted()) idx.push_back(i);
    }
    return idx;
}

std::vector<std::pair<std::size_t, PruneSite>> Network::prune_sites() const {
    std::vector<std::pair<std::size_t, PruneSite>> sites;
    std::ptrdiff_t last_weighted = -1;
    bool flatten_since_weighted = false;

    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& layer = layers[i];
        if (std::holds_alternative<FlattenLayer>(layer.op)) {
            flatten_since_weighted = true;
            continue;
        }
        if (!layer.is_weighted()) continue;

        PruneSite site;
        site.producer = last_weighted;
        const std::vector<std::size_t> in_shape = shape_before(i);
        if (const auto* d = std::get_if<DenseLayer>(&layer.op)) {
            if (last_weighted < 0) {
                site.kind = PruneSite::Kind::None;
                site.units = d->W.cols();
            } else if (flatten_since_weighted &&
                       std::holds_alternative<Conv2dLayer>(layers[last_weighted].op)) {
                // dense fed by a conv through flatten: prune whole channels,
                // each owning H*W consecutive columns of W
                const auto& prod = std::get<Conv2dLayer>(layers[last_weighted].op);
                site.kind = PruneSite::Kind::FlattenedChannels;
                site.units = prod.out_ch;
                site.group = d->W.cols() / prod.out_ch;
                site.spatial = site.group;
            } else {
                site.kind = PruneSite::Kind::DenseUnits;
                site.units = d->W.cols();
            }
        } else {
            const auto& c = std::get<Conv2dLayer>(layer.op);
            site.kind = last_weighted < 0 ? PruneSite::Kind::None : PruneSite::Kind::ConvChannels;
            site.units = c.in_ch;
            site.spatial = in_shape.size() == 3 ? in_shape[1] * in_shape[2] : 1;
        }
        sites.emplace_back(i, site);
        last_weighted = static_cast<std::ptrdiff_t>(i);
        flatten_since_weighted = false;
    }
    return sites;
}

namespace {

// Feature matrix (units x samples) for a weighted layer's input, at the
// granularity its prune site requires. `acts` is sample-major.
Tensor2D capture_features(const Tensor2D& acts, const std::vector<std::size_t>& shape,
                          const PruneSite& site) {
    const std::size_t samples = acts.rows();
    if (site.kind == PruneSite::Kind::ConvChannels ||
        site.kind == PruneSite::Kind::FlattenedChannels ||
        (site.kind == PruneSite::Kind::None && shape.size() == 3)) {
        // per-channel: one column per (sample, spatial position)
        const std::size_t channels = shape.size() == 3 ? shape[0] : site.units;
        const std::size_t hw = shape.size() == 3 ? shape[1] * shape[2]
                                                 : acts.cols() / channels;
        Tensor2D f(channels, samples * hw);
        for (std::size_t s = 0; s < samples; ++s) {
            for (std::size_t c = 0; c < channels; ++c) {
                for (std::size_t p = 0; p < hw; ++p) {
                    f(c, s * hw + p) = acts(s, c * hw + p);
                }
            }
        }
        return f;
    }
    // dense units: feature matrix is the transposed batch
    Tensor2D f(acts.cols(), samples);
    for (std::size_t s = 0; s < samples; ++s) {
        for (std::size_t u = 0; u < acts.cols(); ++u) f(u, s) = acts(s, u);
    }
    return f;
}

Tensor2D apply_dense(const DenseLayer& d, const Tensor2D& acts) {
    Tensor2D out = matmul(acts, d.W.transposed());
    for (std::size_t s = 0; s < out.rows(); ++s) {
        for (std::size_t j = 0; j < out.cols(); ++j) out(s, j) += d.b[j];
    }
    return out;
}

Tensor2D apply_conv(const Conv2dLayer& c, const Tensor2D& acts,
                    const std::vector<std::size_t>& in_shape) {
    const std::size_t samples = acts.rows();
    const std::size_t h = in_shape[1];
    const std::size_t w = in_shape[2];
    const std::size_t ho = conv_out_dim(h, c.kh, c.stride, c.pad);
    const std::size_t wo = conv_out_dim(w, c.kw, c.stride, c.pad);

    Tensor2D out(samples, c.out_ch * ho * wo);
    for (std::size_t s = 0; s < samples; ++s) {
        const double* in = acts.data() + s * acts.cols();
        double* dst = out.data() + s * out.cols();
        for (std::size_t o = 0; o < c.out_ch; ++o) {
            for (std::size_t oy = 0; oy < ho; ++oy) {
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    double acc = c.b[o];
                    for (std::size_t ch = 0; ch < c.in_ch; ++ch) {
                        for (std::size_t ky = 0; ky < c.kh; ++ky) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(oy * c.stride + ky) -
                                static_cast<std::ptrdiff_t>(c.pad);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < c.kw; ++kx) {
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(ox * c.stride + kx) -
                                    static_cast<std::ptrdiff_t>(c.pad);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                acc += c.k(o, ch, ky, kx) *
                                       in[(ch * h + static_cast<std::size_t>(iy)) * w +
                                          static_cast<std::size_t>(ix)];
                            }
                        }
                    }
                    dst[(o * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    return out;
}

}  // namespace

ForwardResult forward(const Network& net, const Tensor2D& batch, bool capture) {
    net.validate();
    if (batch.cols() != net.input_size()) {
        throw ShapeError("forward: batch has " + std::to_string(batch.cols()) +
                         " features, network expects " + std::to_string(net.input_size()));
    }

    std::map<std::size_t, PruneSite> site_by_layer;
    if (capture) {
        for (const auto& [idx, site] : net.prune_sites()) site_by_layer[idx] = site;
    }

    ForwardResult result;
    if (capture) result.capture = ActivationCapture{};

    Tensor2D acts = batch;
    std::vector<std::size_t> shape = net.input_shape;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& layer = net.layers[i];
        if (capture && layer.is_weighted()) {
            result.capture->features[layer.name] =
                capture_features(acts, shape, site_by_layer.at(i));
        }
        if (const auto* d = std::get_if<DenseLayer>(&layer.op)) {
            acts = apply_dense(*d, acts);
            shape = {d->W.rows()};
        } else if (const auto* c = std::get_if<Conv2dLayer>(&layer.op)) {
            acts = apply_conv(*c, acts, shape);
            shape = {c->out_ch, conv_out_dim(shape[1], c->kh, c->stride, c->pad),
                     conv_out_dim(shape[2], c->kw, c->stride, c->pad)};
        } else if (std::holds_alternative<ReluLayer>(layer.op)) {
            for (double& v : acts.storage()) v = v > 0.0 ? v : 0.0;
        } else {
            shape = {shape_product(shape)};
        }
    }
    result.outputs = std::move(acts);
    return result;
}

std::pair<std::uint64_t, std::uint64_t> count_flops_params(const Network& net) {
    std::uint64_t flops = 0;
    std::uint64_t params = 0;
    std::vector<std::size_t> shape = net.input_shape;
    for (const Layer& layer : net.layers) {
        if (const auto* d = std::get_if<DenseLayer>(&layer.op)) {
            flops += 2ull * d->W.cols() * d->W.rows();
            params += d->W.size() + d->b.size();
            shape = {d->W.rows()};
        } else if (const auto* c = std::get_if<Conv2dLayer>(&layer.op)) {
            if (shape.size() != 3) {
                throw ShapeError("count_flops_params: conv layer on non-(C,H,W) input");
            }
            const std::size_t ho = conv_out_dim(shape[1], c->kh, c->stride, c->pad);
            const std::size_t wo = conv_out_dim(shape[2], c->kw, c->stride, c->pad);
            flops += 2ull * c->in_ch * c->kh * c->kw * c->out_ch * ho * wo;
            params += c->kernel.size() + c->b.size();
            shape = {c->out_ch, ho, wo};
        } else if (std::holds_alternative<FlattenLayer>(layer.op)) {
            shape = {shape_product(shape)};
        }
    }
    return {flops, params};
}

}  // namespace snp
