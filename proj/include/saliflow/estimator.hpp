#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "saliflow/block_match.hpp"
#include "saliflow/error.hpp"
#include "saliflow/flow_field.hpp"
#include "saliflow/flow_io.hpp"
#include "saliflow/image.hpp"

namespace saliflow {

// Flow estimator interface. Learned estimators plug in through adapters
// implementing this; the built-in block matcher keeps the pipeline running
// without external weights. An estimator declares whether it may be called
// concurrently; the registry serializes the ones that may not.
class FlowEstimator {
public:
    virtual ~FlowEstimator() = default;
    virtual std::string name() const = 0;
    virtual bool reentrant() const { return true; }
    virtual FlowField estimate(const ImageU8& src, const ImageU8& tgt) = 0;
};

class BlockMatchEstimator final : public FlowEstimator {
public:
    BlockMatchEstimator(int search_radius = 6, int patch = 7)
        : radius_(search_radius), patch_(patch) {}
    std::string name() const override { return "block_match"; }
    FlowField estimate(const ImageU8& src, const ImageU8& tgt) override {
        return block_match_flow(src, tgt, radius_, patch_);
    }

private:
    int radius_, patch_;
};

// Replays recorded flow files flow_000.flo, flow_001.flo, ... from a
// directory, one per call. Stateful, hence declared non-reentrant.
class FixtureEstimator final : public FlowEstimator {
public:
    explicit FixtureEstimator(std::filesystem::path dir) : dir_(std::move(dir)) {}
    std::string name() const override { return "fixture"; }
    bool reentrant() const override { return false; }
    FlowField estimate(const ImageU8& src, const ImageU8& tgt) override {
        if (!src.same_shape(tgt)) throw DimensionError("fixture estimator: frame size mismatch");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "flow_%03d.flo", next_++);
        return read_flo(dir_ / buf);
    }
    void rewind() { next_ = 0; }

private:
    std::filesystem::path dir_;
    int next_ = 0;
};

class EstimatorRegistry {
public:
    void add(std::shared_ptr<FlowEstimator> estimator) {
        auto name = estimator->name();
        entries_[name] = Entry{std::move(estimator), std::make_unique<std::mutex>()};
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    FlowEstimator& get(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end())
            throw UnavailableError("estimator not registered: " + name);
        return *it->second.estimator;
    }

    // Runs the named estimator, honoring its reentrancy declaration.
    FlowField run(const std::string& name, const ImageU8& src, const ImageU8& tgt) {
        auto it = entries_.find(name);
        if (it == entries_.end())
            throw UnavailableError("estimator not registered: " + name);
        Entry& e = it->second;
        if (e.estimator->reentrant()) return e.estimator->estimate(src, tgt);
        std::lock_guard<std::mutex> lock(*e.mutex);
        return e.estimator->estimate(src, tgt);
    }

    static EstimatorRegistry with_builtins() {
        EstimatorRegistry r;
        r.add(std::make_shared<BlockMatchEstimator>());
        return r;
    }

private:
    struct Entry {
        std::shared_ptr<FlowEstimator> estimator;
        std::unique_ptr<std::mutex> mutex;
    };
    std::map<std::string, Entry> entries_;
};

// Estimate flow between two equally sized frames.
inline FlowField estimate_flow(const ImageU8& src, const ImageU8& tgt,
                               FlowEstimator& estimator) {
    if (!src.same_shape(tgt)) throw DimensionError("estimate_flow: frame size mismatch");
    FlowField flow = estimator.estimate(src, tgt);
    if (flow.height() != src.height() || flow.width() != src.width())
        throw DimensionError("estimate_flow: estimator returned wrong resolution");
    return flow;
}

}  // namespace saliflow
