#pragma once

#include <string>

#include "snp/model.hpp"

namespace snp {

// .snm model container (see docs/formats.md): "SNPM" magic, manifest JSON
// (layer list, kinds, shapes, dtype, byte offsets, format_version), then a
// little-endian real32 row-major tensor payload. Conv kernels are stored in
// (out_ch, in_ch, kH, kW) order. load rejects unknown format versions,
// truncated payloads and networks whose layer shapes do not compose.
void save_model(const Network& net, const std::string& path);
Network load_model(const std::string& path);

}  // namespace snp
