#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "godeflow/tensor.hpp"

namespace godeflow::ad {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct Checkpoint {
    std::vector<NamedTensor> tensors;
    nlohmann::json metadata;
};

// Writes a JSON manifest at `manifest_path` (tensor name, shape and element
// offset) and a sibling blob "<manifest>.bin": an 8-byte magic followed by
// every tensor's values as little-endian IEEE-754 doubles. Round-trips
// bit-exactly.
void save_checkpoint(const std::filesystem::path& manifest_path, const std::vector<NamedTensor>& tensors,
                     const nlohmann::json& metadata);

// Throws IoError on a missing file, bad magic, or inconsistent sizes.
Checkpoint load_checkpoint(const std::filesystem::path& manifest_path);

}  // namespace godeflow::ad
