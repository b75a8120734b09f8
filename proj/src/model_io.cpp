#include "snp/model_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "snp/errors.hpp"

namespace snp {

namespace {

constexpr char kMagic[4] = {'S', 'N', 'P', 'M'};
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "model payload is little-endian; big-endian hosts are unsupported");

struct PayloadWriter {
    std::vector<float> values;

    // Returns the byte offset of the appended block.
    std::uint64_t append(const std::vector<double>& v) {
        const std::uint64_t offset = values.size() * sizeof(float);
        values.reserve(values.size() + v.size());
        for (double x : v) values.push_back(static_cast<float>(x));
        return offset;
    }
};

struct PayloadReader {
    const std::vector<float>& values;
    const std::string& path;

    std::vector<double> read(std::uint64_t byte_offset, std::size_t count,
                             std::size_t layer_index) const {
        if (byte_offset % sizeof(float) != 0 ||
            byte_offset / sizeof(float) + count > values.size()) {
            throw IoError("model " + path + ": truncated or misaligned payload at layer " +
                          std::to_string(layer_index));
        }
        const std::size_t start = byte_offset / sizeof(float);
        std::vector<double> out(count);
        for (std::size_t i = 0; i < count; ++i) out[i] = values[start + i];
        return out;
    }
};

}  // namespace

void save_model(const Network& net, const std::string& path) {
    net.validate();

    PayloadWriter payload;
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& layer : net.layers) {
        nlohmann::json entry;
        entry["kind"] = layer.kind();
        entry["name"] = layer.name;
        if (const auto* d = std::get_if<DenseLayer>(&layer.op)) {
            entry["shape"] = {d->W.rows(), d->W.cols()};
            entry["dtype"] = "f32";
            entry["weights_offset"] = payload.append(d->W.storage());
            entry["bias_offset"] = payload.append(d->b);
        } else if (const auto* c = std::get_if<Conv2dLayer>(&layer.op)) {
            entry["shape"] = {c->out_ch, c->in_ch, c->kh, c->kw};
            entry["stride"] = c->stride;
            entry["pad"] = c->pad;
            entry["dtype"] = "f32";
            entry["weights_offset"] = payload.append(c->kernel);
            entry["bias_offset"] = payload.append(c->b);
        }
        layers.push_back(std::move(entry));
    }

    nlohmann::json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["input_shape"] = net.input_shape;
    manifest["layers"] = layers;
    manifest["payload_bytes"] = payload.values.size() * sizeof(float);

    const std::string manifest_str = manifest.dump();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open model for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    const std::uint64_t manifest_len = manifest_str.size();
    os.write(reinterpret_cast<const char*>(&manifest_len), sizeof(manifest_len));
    os.write(manifest_str.data(), static_cast<std::streamsize>(manifest_str.size()));
    os.write(reinterpret_cast<const char*>(payload.values.data()),
             static_cast<std::streamsize>(payload.values.size() * sizeof(float)));
    if (!os) throw IoError("write failed for model: " + path);
}

Network load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open model: " + path);

    char magic[4];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ParseError("model " + path + ": bad magic at byte 0");
    }
    std::uint64_t manifest_len = 0;
    is.read(reinterpret_cast<char*>(&manifest_len), sizeof(manifest_len));
    std::string manifest_str(manifest_len, '\0');
    is.read(manifest_str.data(), static_cast<std::streamsize>(manifest_len));
    if (!is) throw ParseError("model " + path + ": truncated manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_str);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("model " + path + ": manifest JSON: " + e.what());
    }
    if (manifest.value("format_version", -1) != kFormatVersion) {
        throw ParseError("model " + path + ": unsupported format_version " +
                         manifest.value("format_version", nlohmann::json{}).dump());
    }
    if (!manifest.contains("layers") || manifest["layers"].empty()) {
        throw ParseError("model " + path + ": empty layer list");
    }

    const std::uint64_t payload_bytes = manifest.at("payload_bytes").get<std::uint64_t>();
    std::vector<float> payload(payload_bytes / sizeof(float));
    is.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload_bytes));
    if (static_cast<std::uint64_t>(is.gcount()) != payload_bytes) {
        throw IoError("model " + path + ": payload shorter than manifest declares (" +
                      std::to_string(is.gcount()) + " of " + std::to_string(payload_bytes) +
                      " bytes)");
    }
    PayloadReader reader{payload, path};

    Network net;
    net.input_shape = manifest.at("input_shape").get<std::vector<std::size_t>>();
    std::size_t index = 0;
    for (const auto& entry : manifest.at("layers")) {
        const std::string kind = entry.at("kind").get<std::string>();
        Layer layer;
        layer.name = entry.value("name", kind + "_" + std::to_string(index));
        if (kind == "dense") {
            const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 2) {
                throw ParseError("model " + path + ": dense layer " + std::to_string(index) +
                                 " has bad shape");
            }
            DenseLayer d;
            d.W = Tensor2D(shape[0], shape[1],
                           reader.read(entry.at("weights_offset").get<std::uint64_t>(),
                                       shape[0] * shape[1], index));
            d.b = reader.read(entry.at("bias_offset").get<std::uint64_t>(), shape[0], index);
            layer.op = std::move(d);
        } else if (kind == "conv2d") {
            const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 4) {
                throw ParseError("model " + path + ": conv layer " + std::to_string(index) +
                                 " has bad shape");
            }
            Conv2dLayer c;
            c.out_ch = shape[0];
            c.in_ch = shape[1];
            c.kh = shape[2];
            c.kw = shape[3];
            c.stride = entry.value("stride", std::size_t{1});
            c.pad = entry.value("pad", std::size_t{0});
            c.kernel = reader.read(entry.at("weights_offset").get<std::uint64_t>(),
                                   shape[0] * shape[1] * shape[2] * shape[3], index);
            c.b = reader.read(entry.at("bias_offset").get<std::uint64_t>(), c.out_ch, index);
            layer.op = std::move(c);
        } else if (kind == "relu") {
            layer.op = ReluLayer{};
        } else if (kind == "flatten") {
            layer.op = FlattenLayer{};
        } else {
            throw ParseError("model " + path + ": unknown layer kind '" + kind + "' at index " +
                             std::to_string(index));
        }
        net.layers.push_back(std::move(layer));
        ++index;
    }

    try {
        net.validate();
    } catch (const ShapeError& e) {
        throw ParseError("model " + path + ": shapes do not compose: " + e.what());
    }
    return net;
}

}  // namespace snp
