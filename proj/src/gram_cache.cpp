#include "snp/gram_cache.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "snp/errors.hpp"

namespace snp {

namespace {

constexpr char kMagic[4] = {'S', 'N', 'P', 'G'};
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "Gram cache payload is little-endian; big-endian hosts are unsupported");

void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

}  // namespace

const GramMatrix* GramCache::find(const std::string& layer_id) const {
    for (const auto& g : grams) {
        if (g.layer_id == layer_id) return &g;
    }
    return nullptr;
}

void save_gram_cache(const GramCache& cache, const std::string& path) {
    nlohmann::json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["absorb_bias"] = cache.absorb_bias;

    std::uint64_t offset = 0;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& g : cache.grams) {
        const std::size_t n = g.n();
        entries.push_back({{"layer_id", g.layer_id},
                           {"n", n},
                           {"sample_count", g.sample_count},
                           {"byte_offset", offset}});
        offset += n * (n + 1) / 2 * sizeof(double);
    }
    manifest["entries"] = entries;

    const std::string manifest_str = manifest.dump();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open gram cache for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_u64(os, manifest_str.size());
    os.write(manifest_str.data(), static_cast<std::streamsize>(manifest_str.size()));

    for (const auto& g : cache.grams) {
        for (std::size_t i = 0; i < g.n(); ++i) {
            const double* row = g.C.data() + i * g.n();
            os.write(reinterpret_cast<const char*>(row + i),
                     static_cast<std::streamsize>((g.n() - i) * sizeof(double)));
        }
    }
    if (!os) throw IoError("write failed for gram cache: " + path);
}

GramCache load_gram_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open gram cache: " + path);

    char magic[4];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ParseError("gram cache " + path + ": bad magic at byte 0");
    }
    const std::uint64_t manifest_len = read_u64(is);
    std::string manifest_str(manifest_len, '\0');
    is.read(manifest_str.data(), static_cast<std::streamsize>(manifest_len));
    if (!is) throw ParseError("gram cache " + path + ": truncated manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_str);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("gram cache " + path + ": manifest JSON: " + e.what());
    }
    if (manifest.value("format_version", -1) != kFormatVersion) {
        throw ParseError("gram cache " + path + ": unsupported format_version");
    }

    const std::streampos payload_start = is.tellg();
    GramCache cache;
    cache.absorb_bias = manifest.value("absorb_bias", false);
    for (const auto& entry : manifest.at("entries")) {
        const std::size_t n = entry.at("n").get<std::size_t>();
        const std::uint64_t byte_offset = entry.at("byte_offset").get<std::uint64_t>();
        GramMatrix g = GramMatrix::zero(entry.at("layer_id").get<std::string>(), n);
        g.sample_count = entry.at("sample_count").get<std::size_t>();

        is.seekg(payload_start + static_cast<std::streamoff>(byte_offset));
        std::vector<double> packed(n * (n + 1) / 2);
        is.read(reinterpret_cast<char*>(packed.data()),
                static_cast<std::streamsize>(packed.size() * sizeof(double)));
        if (!is) {
            throw ParseError("gram cache " + path + ": truncated payload for layer " +
                             g.layer_id);
        }
        std::size_t k = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i; j < n; ++j) {
                g.C(i, j) = packed[k];
                g.C(j, i) = packed[k];
                ++k;
            }
        }
        g.C.require_finite("gram cache payload");
        cache.grams.push_back(std::move(g));
    }
    return cache;
}

}  // namespace snp
