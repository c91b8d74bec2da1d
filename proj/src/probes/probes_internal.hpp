#pragma once

#include "xlab/probes/probes.hpp"

namespace xlab::probes::detail {

/// Right-pads to the longest sequence. Empty `segments` means all zeros.
encoder::Batch pack(const std::vector<std::vector<std::int32_t>>& tokens,
                    const std::vector<std::vector<std::int32_t>>& segments, std::int32_t pad);

/// Truncated normal (sigma 0.02) keyed by tensor name.
num::Tensor<float> init_weight(num::Shape shape, std::uint64_t seed, const std::string& name);

}  // namespace xlab::probes::detail
