// Command-line front end: wires the run-file sections to the pipeline
// commands. Exit codes: 0 success, 1 hard failure, 2 configuration error,
// 3 partial failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "saliflow/pipeline.hpp"

namespace {

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "run file (JSON)")->required();
    cmd->add_option("--seed", opts.seed, "override the root seed");
    cmd->add_option("--out", opts.out, "override the output root");
}

saliflow::PipelineConfig load_with_overrides(const CommonOptions& opts) {
    saliflow::PipelineConfig config = saliflow::PipelineConfig::load(opts.config_path);
    if (opts.seed) config.seed = *opts.seed;
    if (opts.out) config.out = *opts.out;
    return config;
}

int dispatch(const std::string& name, const CommonOptions& opts) {
    using namespace saliflow;
    try {
        PipelineConfig config = load_with_overrides(opts);
        if (name == "generate") return cmd_generate(config, std::cout);
        if (name == "build") return cmd_build(config, std::cout);
        if (name == "ingest-video") return cmd_ingest(config, std::cout);
        if (name == "train") return cmd_train(config, std::cout);
        if (name == "eval") return cmd_eval(config, std::cout);
        if (name == "report") return cmd_report(config, std::cout);
        if (name == "inspect") return cmd_inspect(config, std::cout);
        std::cerr << "unknown command: " << name << "\n";
        return kConfigError;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const BackendFailure& e) {
        std::cerr << "backend failure: " << e.what() << "\n";
        if (!e.diagnostics().empty()) std::cerr << e.diagnostics() << "\n";
        return kHardFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kHardFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"image-flow-mask triplet synthesis and flow-guided saliency training"};
    app.require_subcommand(1);

    const char* names[] = {"generate", "build",  "ingest-video", "train",
                           "eval",     "report", "inspect"};
    const char* descriptions[] = {
        "generate target frames for each source image",
        "estimate flows and assemble the triplet dataset",
        "ingest real annotated videos into a triplet dataset",
        "train the two-stream saliency model",
        "run inference and score datasets",
        "merge evaluation reports into one table",
        "colorize flows and report quality statistics",
    };

    CommonOptions opts[7];
    for (int i = 0; i < 7; ++i) add_common(app.add_subcommand(names[i], descriptions[i]), opts[i]);

    CLI11_PARSE(app, argc, argv);

    for (int i = 0; i < 7; ++i)
        if (app.get_subcommand(names[i])->parsed()) return dispatch(names[i], opts[i]);
    return saliflow::kConfigError;
}
