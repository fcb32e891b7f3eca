#include "geora/io/manifest.hpp"

#include <fstream>

namespace geora::io {

using nlohmann::json;

Index AdapterManifest::total_trainable() const {
    Index total = 0;
    for (const auto& l : layers) {
        total += l.trainable;
    }
    return total;
}

namespace {

json stored_to_json(const StoredArray& s) {
    return {{"path", s.path}, {"crc32", s.crc32}};
}

StoredArray stored_from_json(const json& j) {
    return {j.at("path").get<std::string>(), j.at("crc32").get<std::uint32_t>()};
}

Matrix load_checked(const std::filesystem::path& dir, const StoredArray& s, Index rows, Index cols,
                    const std::string& layer) {
    const auto path = dir / s.path;
    if (!std::filesystem::exists(path)) {
        throw IntegrityError("layer '" + layer + "': missing file " + path.string());
    }
    const auto bytes = read_file(path);
    const auto crc = crc32(bytes);
    if (crc != s.crc32) {
        throw IntegrityError("layer '" + layer + "': checksum mismatch for " + path.string() +
                             " (stored " + std::to_string(s.crc32) + ", computed " +
                             std::to_string(crc) + ")");
    }
    Matrix m = decode_npy(bytes);
    if (m.rows() != rows || m.cols() != cols) {
        throw IntegrityError("layer '" + layer + "': " + path.string() + " has shape " +
                             std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                             ", manifest expects " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    }
    return m;
}

}  // namespace

json to_json(const AdapterManifest& m) {
    json layers = json::array();
    for (const auto& l : m.layers) {
        layers.push_back({{"name", l.name},
                          {"shape", {l.rows, l.cols}},
                          {"trainable", l.trainable},
                          {"rank_deficient", l.rank_deficient},
                          {"files",
                           {{"A", stored_to_json(l.a)},
                            {"B", stored_to_json(l.b)},
                            {"W_res", stored_to_json(l.w_res)}}}});
    }
    return {{"format_version", m.format_version},
            {"method", m.method},
            {"rank", m.rank},
            {"alpha", m.alpha},
            {"rho", m.rho},
            {"r_mask", m.r_mask},
            {"use_spec", m.use_spec},
            {"use_euc", m.use_euc},
            {"seed", m.seed},
            {"total_trainable", m.total_trainable()},
            {"layers", layers}};
}

AdapterManifest manifest_from_json(const json& j) {
    AdapterManifest m;
    try {
        m.format_version = j.at("format_version").get<std::string>();
        if (m.format_version != kManifestVersion) {
            throw IntegrityError("unsupported manifest format_version '" + m.format_version + "'");
        }
        m.method = j.at("method").get<std::string>();
        m.rank = j.at("rank").get<Index>();
        m.alpha = j.at("alpha").get<double>();
        m.rho = j.at("rho").get<double>();
        m.r_mask = j.at("r_mask").get<Index>();
        m.use_spec = j.at("use_spec").get<bool>();
        m.use_euc = j.at("use_euc").get<bool>();
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& lj : j.at("layers")) {
            ManifestLayer l;
            l.name = lj.at("name").get<std::string>();
            l.rows = lj.at("shape").at(0).get<Index>();
            l.cols = lj.at("shape").at(1).get<Index>();
            l.trainable = lj.at("trainable").get<Index>();
            l.rank_deficient = lj.value("rank_deficient", false);
            const auto& files = lj.at("files");
            l.a = stored_from_json(files.at("A"));
            l.b = stored_from_json(files.at("B"));
            l.w_res = stored_from_json(files.at("W_res"));
            m.layers.push_back(std::move(l));
        }
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

void write_manifest(const std::filesystem::path& dir, const AdapterManifest& m) {
    write_text_atomic(dir / kManifestName, to_json(m).dump(2) + "\n");
}

AdapterManifest read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / kManifestName;
    std::ifstream in(path);
    if (!in) {
        throw IntegrityError("cannot open " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IntegrityError(path.string() + ": " + e.what());
    }
    return manifest_from_json(j);
}

ManifestLayer store_layer(const std::filesystem::path& dir, const std::string& name,
                          const AdapterBundle& bundle, NpyDtype dtype) {
    ManifestLayer l;
    l.name = name;
    l.rows = bundle.rows();
    l.cols = bundle.cols();
    l.trainable = trainable_count(bundle);
    l.rank_deficient = bundle.rank_deficient;
    auto put = [&](const char* suffix, const Matrix& m) {
        StoredArray s;
        s.path = name + "." + suffix + ".npy";
        s.crc32 = save_npy(dir / s.path, m, dtype);
        return s;
    };
    l.a = put("A", bundle.a);
    l.b = put("B", bundle.b);
    l.w_res = put("W_res", bundle.w_res);
    return l;
}

AdapterBundle load_layer(const std::filesystem::path& dir, const AdapterManifest& m,
                         const ManifestLayer& layer) {
    AdapterBundle b;
    b.rank = m.rank;
    b.alpha = m.alpha;
    b.rank_deficient = layer.rank_deficient;
    if (m.method != "sparseft") {
        b.method = parse_method(m.method);
    }
    b.a = load_checked(dir, layer.a, m.rank, layer.cols, layer.name);
    b.b = load_checked(dir, layer.b, layer.rows, m.rank, layer.name);
    b.w_res = load_checked(dir, layer.w_res, layer.rows, layer.cols, layer.name);
    return b;
}

}  // namespace geora::io
