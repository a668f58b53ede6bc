#pragma once

// Line-delimited dataset manifests. First line is a header record carrying
// the schema version, generator fingerprint, and counts; every following
// line is one triplet record with paths relative to the manifest file.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saliflow/error.hpp"

namespace saliflow {

inline constexpr int kManifestSchemaVersion = 1;

enum class Provenance { synthetic, real };

inline const char* to_string(Provenance p) {
    return p == Provenance::synthetic ? "synthetic" : "real";
}

inline Provenance provenance_from_string(const std::string& s) {
    if (s == "synthetic") return Provenance::synthetic;
    if (s == "real") return Provenance::real;
    throw FormatError("manifest: unknown provenance: " + s);
}

struct GeneratorFingerprint {
    std::string backend;
    std::uint64_t seed = 0;
};

struct ManifestCounts {
    std::int64_t n_sources = 0;
    std::int64_t frames_per_source = 0;  // 0 when per-source counts vary
    std::int64_t n_triplets = 0;
};

struct TripletRecord {
    std::string image_path;
    std::string flow_path;
    std::string mask_path;
    std::string source_id;
    int t = 0;
    Provenance provenance = Provenance::synthetic;
};

struct DatasetManifest {
    std::string name;
    std::filesystem::path root;  // directory containing the manifest file
    GeneratorFingerprint generator;
    ManifestCounts counts;
    std::vector<TripletRecord> records;
    int schema_version = kManifestSchemaVersion;

    std::filesystem::path resolve(const std::string& rel) const { return root / rel; }

    // Derives counts from records; frames_per_source is set only when uniform.
    void refresh_counts() {
        std::vector<std::string> ids;
        ids.reserve(records.size());
        for (const auto& r : records) ids.push_back(r.source_id);
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        counts.n_sources = static_cast<std::int64_t>(ids.size());
        counts.n_triplets = static_cast<std::int64_t>(records.size());
        if (!ids.empty() && records.size() % ids.size() == 0) {
            std::int64_t per = static_cast<std::int64_t>(records.size() / ids.size());
            std::vector<std::int64_t> by_source(ids.size(), 0);
            for (const auto& r : records) {
                auto it = std::lower_bound(ids.begin(), ids.end(), r.source_id);
                ++by_source[static_cast<std::size_t>(it - ids.begin())];
            }
            counts.frames_per_source =
                std::all_of(by_source.begin(), by_source.end(),
                            [per](std::int64_t c) { return c == per; })
                    ? per
                    : 0;
        } else {
            counts.frames_per_source = 0;
        }
    }
};

inline void save_manifest(DatasetManifest manifest, const std::filesystem::path& path) {
    std::sort(manifest.records.begin(), manifest.records.end(),
              [](const TripletRecord& a, const TripletRecord& b) {
                  return std::tie(a.source_id, a.t) < std::tie(b.source_id, b.t);
              });
    manifest.refresh_counts();
    std::ofstream out(path);
    if (!out) throw IoError("manifest: cannot open for write: " + path.string());
    nlohmann::json header = {
        {"kind", "header"},
        {"schema_version", manifest.schema_version},
        {"name", manifest.name},
        {"generator", {{"backend", manifest.generator.backend}, {"seed", manifest.generator.seed}}},
        {"counts",
         {{"n_sources", manifest.counts.n_sources},
          {"frames_per_source", manifest.counts.frames_per_source},
          {"n_triplets", manifest.counts.n_triplets}}},
    };
    out << header.dump() << "\n";
    for (const auto& r : manifest.records) {
        nlohmann::json rec = {
            {"image_path", r.image_path}, {"flow_path", r.flow_path},
            {"mask_path", r.mask_path},   {"source_id", r.source_id},
            {"t", r.t},                   {"provenance", to_string(r.provenance)},
        };
        out << rec.dump() << "\n";
    }
    if (!out) throw IoError("manifest: write failed: " + path.string());
}

inline DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files = true) {
    std::ifstream in(path);
    if (!in) throw IoError("manifest: cannot open: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("manifest: empty file: " + path.string());

    DatasetManifest m;
    m.root = path.parent_path();
    try {
        nlohmann::json header = nlohmann::json::parse(line);
        if (header.value("kind", "") != "header")
            throw FormatError("manifest: first record is not a header");
        m.schema_version = header.at("schema_version").get<int>();
        if (m.schema_version != kManifestSchemaVersion)
            throw FormatError("manifest: unsupported schema version " +
                              std::to_string(m.schema_version));
        m.name = header.value("name", "");
        m.generator.backend = header.at("generator").value("backend", "");
        m.generator.seed = header.at("generator").value("seed", std::uint64_t{0});
        m.counts.n_sources = header.at("counts").value("n_sources", std::int64_t{0});
        m.counts.frames_per_source =
            header.at("counts").value("frames_per_source", std::int64_t{0});
        m.counts.n_triplets = header.at("counts").value("n_triplets", std::int64_t{0});
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json rec = nlohmann::json::parse(line);
            TripletRecord r;
            r.image_path = rec.at("image_path").get<std::string>();
            r.flow_path = rec.at("flow_path").get<std::string>();
            r.mask_path = rec.at("mask_path").get<std::string>();
            r.source_id = rec.at("source_id").get<std::string>();
            r.t = rec.at("t").get<int>();
            r.provenance = provenance_from_string(rec.at("provenance").get<std::string>());
            m.records.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest: corrupt manifest " + path.string() + ": " + e.what());
    }

    if (m.counts.n_triplets != static_cast<std::int64_t>(m.records.size()))
        throw FormatError("manifest: corrupt manifest (header count " +
                          std::to_string(m.counts.n_triplets) + " != " +
                          std::to_string(m.records.size()) + " records): " + path.string());
    if (check_files) {
        for (const auto& r : m.records)
            for (const std::string* p : {&r.image_path, &r.flow_path, &r.mask_path})
                if (!std::filesystem::exists(m.resolve(*p)))
                    throw IoError("manifest: referenced file missing: " + m.resolve(*p).string());
    }
    return m;
}

// Counts summary (Table-1 style numbers).
struct DatasetStats {
    std::int64_t n_sources = 0;       // visual contexts
    std::int64_t n_triplets = 0;
    std::int64_t frames_per_source = 0;
    std::int64_t n_synthetic = 0;
    std::int64_t n_real = 0;
};

// When records are present they are authoritative and cross-checked against
// the header; a records-free manifest (counts only) reports symbolically.
inline DatasetStats dataset_stats(const DatasetManifest& manifest) {
    DatasetStats s;
    if (manifest.records.empty()) {
        s.n_sources = manifest.counts.n_sources;
        s.frames_per_source = manifest.counts.frames_per_source;
        s.n_triplets = manifest.counts.n_triplets;
        if (s.frames_per_source > 0 && s.n_triplets != s.n_sources * s.frames_per_source)
            throw FormatError("dataset_stats: corrupt manifest: counts are inconsistent");
        return s;
    }
    DatasetManifest copy = manifest;
    copy.refresh_counts();
    if (copy.counts.n_triplets != manifest.counts.n_triplets ||
        copy.counts.n_sources != manifest.counts.n_sources)
        throw FormatError("dataset_stats: corrupt manifest: header counts do not match records");
    s.n_sources = copy.counts.n_sources;
    s.n_triplets = copy.counts.n_triplets;
    s.frames_per_source = copy.counts.frames_per_source;
    for (const auto& r : manifest.records)
        (r.provenance == Provenance::synthetic ? s.n_synthetic : s.n_real)++;
    return s;
}

}  // namespace saliflow
