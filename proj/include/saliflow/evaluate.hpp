#pragma once

// Dataset-level evaluation: per-frame metrics averaged per video, then per
// dataset, then (in merged reports) an unweighted cross-dataset average.
// Report rendering mirrors the usual benchmark-table layout, values x100.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saliflow/error.hpp"
#include "saliflow/manifest.hpp"
#include "saliflow/metrics.hpp"
#include "saliflow/parallel.hpp"
#include "saliflow/pnm.hpp"

namespace saliflow {

namespace detail {

inline std::string pred_name(int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%03d.pgm", t);
    return buf;
}

}  // namespace detail

// Path of the prediction for a record: <pred_dir>/<source_id>/<t:03d>.pgm.
inline std::filesystem::path prediction_path(const std::filesystem::path& pred_dir,
                                             const TripletRecord& record) {
    return pred_dir / record.source_id / detail::pred_name(record.t);
}

// Scores every record of the manifest against predictions on disk.
// Predictions are resized (bilinear) to ground-truth resolution when needed.
// Missing predictions abort with the full offender list.
inline DatasetMetrics evaluate_dataset(const std::filesystem::path& pred_dir,
                                       const DatasetManifest& manifest,
                                       FProtocol protocol = FProtocol::max) {
    std::vector<TripletRecord> records = manifest.records;
    std::sort(records.begin(), records.end(),
              [](const TripletRecord& a, const TripletRecord& b) {
                  return std::tie(a.source_id, a.t) < std::tie(b.source_id, b.t);
              });

    std::vector<std::string> missing;
    for (const auto& r : records)
        if (!std::filesystem::exists(prediction_path(pred_dir, r)))
            missing.push_back(prediction_path(pred_dir, r).string());
    if (!missing.empty()) {
        std::string msg = "evaluate_dataset: missing predictions:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw ValueError(msg);
    }

    std::vector<MetricTriple> frame_scores(records.size());
    parallel_for(records.size(), [&](std::size_t i) {
        const TripletRecord& r = records[i];
        ImageU8 gt = read_mask(manifest.resolve(r.mask_path));
        ImageF pred = read_gray01(prediction_path(pred_dir, r));
        if (pred.height() != gt.height() || pred.width() != gt.width())
            pred = resize_bilinear(pred, gt.height(), gt.width());
        frame_scores[i] = frame_metrics(pred, gt, protocol);
    });

    DatasetMetrics out;
    out.dataset = manifest.name;
    out.f_protocol = to_string(protocol);
    std::map<std::string, VideoMetrics> videos;
    for (std::size_t i = 0; i < records.size(); ++i) {
        VideoMetrics& v = videos[records[i].source_id];
        v.video = records[i].source_id;
        v.n_frames += 1;
        v.mean.s += frame_scores[i].s;
        v.mean.f += frame_scores[i].f;
        v.mean.m += frame_scores[i].m;
    }
    for (auto& [id, v] : videos) {
        v.mean.s /= v.n_frames;
        v.mean.f /= v.n_frames;
        v.mean.m /= v.n_frames;
        out.mean.s += v.mean.s;
        out.mean.f += v.mean.f;
        out.mean.m += v.mean.m;
        out.videos.push_back(v);
    }
    if (!out.videos.empty()) {
        const double n = static_cast<double>(out.videos.size());
        out.mean.s /= n;
        out.mean.f /= n;
        out.mean.m /= n;
    }
    return out;
}

// ---- report serialization ------------------------------------------------

inline nlohmann::json dataset_metrics_to_json(const DatasetMetrics& d) {
    nlohmann::json videos = nlohmann::json::array();
    for (const auto& v : d.videos)
        videos.push_back({{"video", v.video},
                          {"n_frames", v.n_frames},
                          {"s", v.mean.s},
                          {"f", v.mean.f},
                          {"mae", v.mean.m}});
    return {{"dataset", d.dataset}, {"f_protocol", d.f_protocol},
            {"s", d.mean.s},        {"f", d.mean.f},
            {"mae", d.mean.m},      {"videos", videos}};
}

inline DatasetMetrics dataset_metrics_from_json(const nlohmann::json& j) {
    DatasetMetrics d;
    d.dataset = j.at("dataset").get<std::string>();
    d.f_protocol = j.value("f_protocol", "max");
    d.mean.s = j.at("s").get<double>();
    d.mean.f = j.at("f").get<double>();
    d.mean.m = j.at("mae").get<double>();
    for (const auto& vj : j.value("videos", nlohmann::json::array())) {
        VideoMetrics v;
        v.video = vj.at("video").get<std::string>();
        v.n_frames = vj.at("n_frames").get<int>();
        v.mean.s = vj.at("s").get<double>();
        v.mean.f = vj.at("f").get<double>();
        v.mean.m = vj.at("mae").get<double>();
        d.videos.push_back(std::move(v));
    }
    return d;
}

// One JSON record per line: dataset blocks, then the average record.
inline void write_report(const MetricReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("report: cannot open for write: " + path.string());
    for (const auto& d : report.datasets) out << dataset_metrics_to_json(d).dump() << "\n";
    nlohmann::json avg = {{"dataset", "Average"},
                          {"f_protocol", report.f_protocol},
                          {"s", report.average.s},
                          {"f", report.average.f},
                          {"mae", report.average.m}};
    out << avg.dump() << "\n";
}

inline MetricReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("report: cannot open: " + path.string());
    MetricReport report;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (j.at("dataset").get<std::string>() == "Average") continue;  // recomputed
        report.datasets.push_back(dataset_metrics_from_json(j));
        report.f_protocol = report.datasets.back().f_protocol;
    }
    report.refresh_average();
    return report;
}

// Human-readable table: S up, F up, M down per dataset plus Average,
// everything x100, one decimal.
inline std::string render_table(const MetricReport& report) {
    std::ostringstream out;
    auto cell = [](double v) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(1) << v * 100.0;
        return c.str();
    };
    std::vector<std::pair<std::string, MetricTriple>> blocks;
    for (const auto& d : report.datasets) blocks.emplace_back(d.dataset, d.mean);
    blocks.emplace_back("Average", report.average);

    out << std::left << std::setw(14) << "";
    for (const auto& [name, m] : blocks) out << "| " << std::setw(22) << name;
    out << "\n" << std::setw(14) << "Method";
    for (std::size_t i = 0; i < blocks.size(); ++i)
        out << "| " << std::setw(7) << "S^" << std::setw(7) << "F^" << std::setw(8) << "M_";
    out << "\n";
    out << std::string(14 + blocks.size() * 24, '-') << "\n";
    out << std::setw(14) << ("ours(F=" + report.f_protocol + ")");
    for (const auto& [name, m] : blocks)
        out << "| " << std::setw(7) << cell(m.s) << std::setw(7) << cell(m.f) << std::setw(8)
            << cell(m.m);
    out << "\n";
    return out.str();
}

}  // namespace saliflow
