#pragma once

#include <string>
#include <vector>

#include "snp/linalg.hpp"

namespace snp {

// On-disk Gram cache (see docs/formats.md): a JSON manifest listing
// {layer_id, n, sample_count, byte_offset} per layer followed by a raw
// little-endian real64 payload holding each Gram's packed upper triangle
// (row-major, diagonal included).
struct GramCache {
    bool absorb_bias = false;        // whether captures carried the constant unit
    std::vector<GramMatrix> grams;   // in collection (layer) order

    const GramMatrix* find(const std::string& layer_id) const;
};

void save_gram_cache(const GramCache& cache, const std::string& path);
GramCache load_gram_cache(const std::string& path);

}  // namespace snp
