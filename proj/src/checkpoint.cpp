#include "godeflow/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "godeflow/errors.hpp"

namespace godeflow::ad {

namespace {

constexpr std::array<char, 8> kBlobMagic{'G', 'D', 'F', 'B', 'L', 'O', 'B', '1'};
constexpr const char* kManifestMagic = "godeflow-checkpoint";
constexpr int kVersion = 1;

std::uint64_t to_little_endian(std::uint64_t bits) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t out = 0;
        for (int k = 0; k < 8; ++k) out |= ((bits >> (8 * k)) & 0xFFu) << (8 * (7 - k));
        return out;
    }
    return bits;
}

std::filesystem::path blob_path_for(const std::filesystem::path& manifest_path) {
    return manifest_path.string() + ".bin";
}

}  // namespace

void save_checkpoint(const std::filesystem::path& manifest_path, const std::vector<NamedTensor>& tensors,
                     const nlohmann::json& metadata) {
    const auto blob_path = blob_path_for(manifest_path);
    nlohmann::json manifest;
    manifest["magic"] = kManifestMagic;
    manifest["version"] = kVersion;
    manifest["blob"] = blob_path.filename().string();
    manifest["metadata"] = metadata;
    manifest["tensors"] = nlohmann::json::array();

    std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
    if (!blob) throw IoError("cannot write checkpoint blob " + blob_path.string());
    blob.write(kBlobMagic.data(), kBlobMagic.size());
    std::size_t offset = 0;
    for (const auto& [name, tensor] : tensors) {
        manifest["tensors"].push_back({{"name", name}, {"shape", tensor.shape()}, {"offset", offset}});
        for (double v : tensor.values()) {
            const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
            char bytes[8];
            std::memcpy(bytes, &bits, 8);
            blob.write(bytes, 8);
        }
        offset += tensor.numel();
    }
    if (!blob) throw IoError("failed writing checkpoint blob " + blob_path.string());

    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint manifest " + manifest_path.string());
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("failed writing checkpoint manifest " + manifest_path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open checkpoint " + manifest_path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
    }
    if (!manifest.is_object() || manifest.value("magic", "") != kManifestMagic) {
        throw IoError("bad checkpoint magic in " + manifest_path.string());
    }
    if (manifest.value("version", 0) != kVersion) throw IoError("unsupported checkpoint version");

    const auto blob_path = manifest_path.parent_path() / manifest.at("blob").get<std::string>();
    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) throw IoError("cannot open checkpoint blob " + blob_path.string());
    std::array<char, 8> magic{};
    blob.read(magic.data(), magic.size());
    if (!blob || magic != kBlobMagic) throw IoError("bad checkpoint magic in " + blob_path.string());
    std::vector<double> flat;
    char bytes[8];
    while (blob.read(bytes, 8)) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, bytes, 8);
        flat.push_back(std::bit_cast<double>(to_little_endian(bits)));
    }
    if (blob.gcount() != 0) throw IoError("checkpoint blob has a truncated value");

    Checkpoint out;
    out.metadata = manifest.value("metadata", nlohmann::json::object());
    try {
        for (const auto& entry : manifest.at("tensors")) {
            const auto shape = entry.at("shape").get<Shape>();
            const auto offset = entry.at("offset").get<std::size_t>();
            const std::size_t n = shape_numel(shape);
            if (offset + n > flat.size()) throw IoError("checkpoint tensor exceeds blob size");
            std::vector<double> values(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                                       flat.begin() + static_cast<std::ptrdiff_t>(offset + n));
            out.tensors.push_back({entry.at("name").get<std::string>(), Tensor::from_values(shape, std::move(values))});
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed checkpoint manifest: ") + e.what());
    }
    return out;
}

}  // namespace godeflow::ad
