#pragma once

#include "geora/adapters.hpp"
#include "geora/io/npy.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace geora::io {

/// A stored file is missing, its checksum differs, or its shape disagrees
/// with the manifest.
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kManifestVersion = "1.0";
inline constexpr const char* kManifestName = "manifest.json";

struct StoredArray {
    std::string path;  // relative to the manifest directory
    std::uint32_t crc32 = 0;
};

struct ManifestLayer {
    std::string name;
    Index rows = 0;
    Index cols = 0;
    Index trainable = 0;
    bool rank_deficient = false;
    StoredArray a;
    StoredArray b;
    StoredArray w_res;
};

struct AdapterManifest {
    std::string format_version = kManifestVersion;
    std::string method;
    Index rank = 0;
    double alpha = 0.0;
    double rho = 0.0;
    Index r_mask = 0;
    bool use_spec = true;
    bool use_euc = true;
    std::uint64_t seed = 0;
    std::vector<ManifestLayer> layers;

    Index total_trainable() const;
};

nlohmann::json to_json(const AdapterManifest& m);
AdapterManifest manifest_from_json(const nlohmann::json& j);

void write_manifest(const std::filesystem::path& dir, const AdapterManifest& m);
AdapterManifest read_manifest(const std::filesystem::path& dir);

/// Writes a, b and w_res as <name>.A.npy, <name>.B.npy, <name>.W_res.npy.
ManifestLayer store_layer(const std::filesystem::path& dir, const std::string& name,
                          const AdapterBundle& bundle, NpyDtype dtype);

/// Loads one layer, verifying existence, checksums and shapes.
AdapterBundle load_layer(const std::filesystem::path& dir, const AdapterManifest& m,
                         const ManifestLayer& layer);

}  // namespace geora::io
