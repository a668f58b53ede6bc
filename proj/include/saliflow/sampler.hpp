#pragma once

// Deterministic ratio-weighted triplet sampling. Every draw is a pure
// function of (spec, seed, draw index) via counter-based hashing, so the
// stream is replayable, seekable, and indifferent to thread scheduling.

#include <cstdint>
#include <numeric>
#include <vector>

#include "saliflow/error.hpp"
#include "saliflow/manifest.hpp"
#include "saliflow/rng.hpp"

namespace saliflow {

struct MixingSpec {
    std::vector<DatasetManifest> datasets;
    std::vector<int> ratios;  // e.g. 2:1:1 synthetic : first real : second real
    std::uint64_t seed = 0;

    void validate() const {
        if (datasets.size() != ratios.size())
            throw ConfigError("mixing spec: ratio count != dataset count");
        long total = 0;
        for (std::size_t i = 0; i < ratios.size(); ++i) {
            if (ratios[i] < 0) throw ConfigError("mixing spec: ratios must be non-negative");
            total += ratios[i];
            if (ratios[i] > 0 && datasets[i].records.empty())
                throw ConfigError("mixing spec: dataset with positive ratio is empty: " +
                                  datasets[i].name);
        }
        if (total <= 0) throw ConfigError("mixing spec: ratio sum must be positive");
    }
};

class MixedSampler {
public:
    struct Draw {
        int dataset = 0;
        std::size_t record = 0;
    };

    explicit MixedSampler(MixingSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        cumulative_.reserve(spec_.ratios.size());
        std::uint64_t acc = 0;
        for (int r : spec_.ratios) {
            acc += static_cast<std::uint64_t>(r);
            cumulative_.push_back(acc);
        }
        total_ = acc;
    }

    // Dataset picked with probability ratio_d / sum(ratios), then a uniform
    // record within it; both from counter-based hashes of (seed, index).
    Draw draw_at(std::uint64_t index) const {
        const std::uint64_t h1 = mix64(spec_.seed, 2 * index);
        const std::uint64_t h2 = mix64(spec_.seed ^ 0x5851F42D4C957F2Dull, 2 * index + 1);
        const std::uint64_t pick = h1 % total_;
        int d = 0;
        while (cumulative_[static_cast<std::size_t>(d)] <= pick) ++d;
        const auto& records = spec_.datasets[static_cast<std::size_t>(d)].records;
        return Draw{d, static_cast<std::size_t>(h2 % records.size())};
    }

    const TripletRecord& record_at(const Draw& d) const {
        return spec_.datasets[static_cast<std::size_t>(d.dataset)].records[d.record];
    }

    const DatasetManifest& dataset(int index) const {
        return spec_.datasets[static_cast<std::size_t>(index)];
    }

    const MixingSpec& spec() const { return spec_; }

    // Value-semantics iteration; copies advance independently.
    Draw next() { return draw_at(cursor_++); }
    std::uint64_t cursor() const { return cursor_; }
    void seek(std::uint64_t index) { cursor_ = index; }

private:
    MixingSpec spec_;
    std::vector<std::uint64_t> cumulative_;
    std::uint64_t total_ = 0;
    std::uint64_t cursor_ = 0;
};

}  // namespace saliflow
