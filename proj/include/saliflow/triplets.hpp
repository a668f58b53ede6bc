#pragma once

// Assembly and persistence of (image, flow, mask) supervision triplets.
// Synthetic triplets pair the unchanged source image and mask with the flow
// toward each generated frame, so all three rasters stay aligned by
// construction. Real-video triplets pair each annotated frame with the flow
// to its successor.

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "saliflow/datagen.hpp"
#include "saliflow/error.hpp"
#include "saliflow/estimator.hpp"
#include "saliflow/flow_io.hpp"
#include "saliflow/manifest.hpp"
#include "saliflow/pnm.hpp"

namespace saliflow {

struct Triplet {
    ImageU8 image;
    FlowField flow;
    ImageU8 mask;
    std::string source_id;
    int t = 0;
    Provenance provenance = Provenance::synthetic;
};

// One triplet per generated frame, all sharing the source image and mask.
inline std::vector<Triplet> build_triplets(const SourceSample& source,
                                           const GeneratedClip& clip,
                                           const std::vector<FlowField>& flows) {
    source.validate();
    if (flows.size() != clip.frames.size())
        throw ValueError("build_triplets: flow count does not match frame count");
    for (const auto& f : flows)
        if (f.height() != source.image.height() || f.width() != source.image.width())
            throw DimensionError("build_triplets: flow dimensions do not match source");
    std::vector<Triplet> triplets;
    triplets.reserve(flows.size());
    for (std::size_t t = 0; t < flows.size(); ++t) {
        Triplet tr;
        tr.image = source.image;
        tr.mask = source.mask;
        tr.flow = flows[t];
        tr.source_id = source.id;
        tr.t = static_cast<int>(t);
        tr.provenance = Provenance::synthetic;
        triplets.push_back(std::move(tr));
    }
    return triplets;
}

namespace detail {

inline std::string indexed_name(const char* stem, int t, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%03d%s", stem, t, ext);
    return buf;
}

}  // namespace detail

// Writes one synthetic source group: the image and mask once, one flow file
// per frame. Paths in the returned records are relative to dataset_dir.
inline std::vector<TripletRecord> write_synthetic_group(
    const std::filesystem::path& dataset_dir, const SourceSample& source,
    const std::vector<FlowField>& flows) {
    namespace fs = std::filesystem;
    const fs::path group = dataset_dir / source.id;
    fs::create_directories(group);
    write_pnm(source.image, group / "image.ppm");
    write_mask(source.mask, group / "mask.pgm");
    std::vector<TripletRecord> records;
    for (std::size_t t = 0; t < flows.size(); ++t) {
        const std::string flow_name = detail::indexed_name("flow", static_cast<int>(t), ".flo");
        write_flo(flows[t], group / flow_name);
        TripletRecord r;
        r.image_path = source.id + "/image.ppm";
        r.mask_path = source.id + "/mask.pgm";
        r.flow_path = source.id + "/" + flow_name;
        r.source_id = source.id;
        r.t = static_cast<int>(t);
        r.provenance = Provenance::synthetic;
        records.push_back(std::move(r));
    }
    return records;
}

inline Triplet load_triplet(const DatasetManifest& manifest, const TripletRecord& record) {
    Triplet t;
    t.image = read_pnm(manifest.resolve(record.image_path));
    t.mask = read_mask(manifest.resolve(record.mask_path));
    t.flow = read_flo(manifest.resolve(record.flow_path));
    t.source_id = record.source_id;
    t.t = record.t;
    t.provenance = record.provenance;
    if (t.image.height() != t.flow.height() || t.image.width() != t.flow.width() ||
        !t.mask.same_shape(ImageU8(t.image.height(), t.image.width(), 1)))
        throw DimensionError("triplet rasters disagree on dimensions: " + record.image_path);
    return t;
}

// ---- real-video ingestion ---------------------------------------------------

namespace detail {

inline std::vector<std::filesystem::path> sorted_files(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    if (!std::filesystem::is_directory(dir))
        throw IoError("ingest_video: not a directory: " + dir.string());
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace detail

// Ingests one annotated video: frame t pairs with the flow t -> t+1; the
// final frame reuses the flow of the penultimate pair. Frames, masks, and
// flows are copied into dataset_dir/<video_id>/.
inline std::vector<TripletRecord> ingest_video(const std::filesystem::path& frames_dir,
                                               const std::filesystem::path& masks_dir,
                                               FlowEstimator& estimator,
                                               const std::filesystem::path& dataset_dir,
                                               const std::string& video_id) {
    namespace fs = std::filesystem;
    const auto frame_files = detail::sorted_files(frames_dir);
    const auto mask_files = detail::sorted_files(masks_dir);
    if (frame_files.size() != mask_files.size())
        throw ValueError("ingest_video: missing mask: " + std::to_string(frame_files.size()) +
                         " frames vs " + std::to_string(mask_files.size()) + " masks in " +
                         masks_dir.string());
    if (frame_files.size() < 2)
        throw ValueError("ingest_video: single-frame video: " + frames_dir.string());

    std::vector<ImageU8> frames;
    std::vector<ImageU8> masks;
    for (std::size_t i = 0; i < frame_files.size(); ++i) {
        frames.push_back(read_pnm(frame_files[i]));
        masks.push_back(read_mask(mask_files[i]));
        if (!frames.back().same_shape(frames.front()))
            throw DimensionError("ingest_video: frame size varies: " + frame_files[i].string());
        if (masks.back().height() != frames.back().height() ||
            masks.back().width() != frames.back().width())
            throw DimensionError("ingest_video: mask size mismatch: " + mask_files[i].string());
    }

    std::vector<FlowField> flows;
    for (std::size_t t = 0; t + 1 < frames.size(); ++t)
        flows.push_back(estimate_flow(frames[t], frames[t + 1], estimator));
    flows.push_back(flows.back());  // last frame duplicates the penultimate flow

    const fs::path group = dataset_dir / video_id;
    fs::create_directories(group);
    std::vector<TripletRecord> records;
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const int ti = static_cast<int>(t);
        const std::string img = detail::indexed_name("frame", ti, ".ppm");
        const std::string msk = detail::indexed_name("mask", ti, ".pgm");
        const std::string flo = detail::indexed_name("flow", ti, ".flo");
        write_pnm(frames[t], group / img);
        write_mask(masks[t], group / msk);
        write_flo(flows[t], group / flo);
        TripletRecord r;
        r.image_path = video_id + "/" + img;
        r.mask_path = video_id + "/" + msk;
        r.flow_path = video_id + "/" + flo;
        r.source_id = video_id;
        r.t = ti;
        r.provenance = Provenance::real;
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace saliflow
