// Writes a small procedural source set (textured images + masks) plus a
// ready-to-run pipeline run file, so the CLI can be exercised without any
// external data:
//
//   ./make_demo_data demo_dir
//   saliflow generate --config demo_dir/run.json
//   saliflow build    --config demo_dir/run.json
//   saliflow train    --config demo_dir/run.json
//   saliflow eval     --config demo_dir/run.json
//   saliflow report   --config demo_dir/run.json
//   saliflow inspect  --config demo_dir/run.json

#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "saliflow/image.hpp"
#include "saliflow/pnm.hpp"
#include "saliflow/rng.hpp"

using namespace saliflow;

namespace {

ImageU8 textured_image(int h, int w, std::uint64_t seed) {
    ImageU8 img(h, w, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::uint64_t v = mix64(seed, (static_cast<std::uint64_t>(y) << 20) ^
                                              static_cast<std::uint64_t>(x));
            img.at(y, x, 0) = static_cast<std::uint8_t>(v & 0xFF);
            img.at(y, x, 1) = static_cast<std::uint8_t>((v >> 8) & 0xFF);
            img.at(y, x, 2) = static_cast<std::uint8_t>((v >> 16) & 0xFF);
        }
    return img;
}

ImageU8 disk_mask(int h, int w, int cy, int cx, int radius) {
    ImageU8 mask(h, w, 1, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= radius * radius) mask.at(y, x) = 1;
    return mask;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_demo_data <output-dir>\n";
        return 1;
    }
    const std::filesystem::path root = argv[1];
    const std::filesystem::path sources = root / "sources";
    std::filesystem::create_directories(sources);

    for (int s = 0; s < 4; ++s) {
        const std::string id = "demo" + std::to_string(s);
        write_pnm(textured_image(96, 96, 42 + static_cast<std::uint64_t>(s)),
                  sources / (id + ".ppm"));
        write_mask(disk_mask(96, 96, 36 + 6 * s, 40 + 4 * s, 14), sources / (id + ".pgm"));
    }

    nlohmann::json run = {
        {"seed", 7},
        {"out", "out"},
        {"generate", {{"backend", "rigid_oracle"}, {"sources", "sources"}, {"frames", 6}}},
        {"build",
         {{"estimator", "block_match"},
          {"search_radius", 6},
          {"patch", 7},
          {"dataset", "demo"}}},
        {"train",
         {{"learning_rate", 0.01},
          {"batch_size", 4},
          {"max_steps", 60},
          {"eval_every", 20},
          {"resolution", 64},
          {"datasets", {"out/dataset/demo/manifest.jsonl"}},
          {"ratios", {1}},
          {"eval_manifest", "out/dataset/demo/manifest.jsonl"},
          {"model", {{"stages", 2}, {"widths", {8, 16}}, {"reduction", 4}}}}},
        {"eval",
         {{"checkpoint", "out/train/final.ckpt"},
          {"datasets", {"out/dataset/demo/manifest.jsonl"}}}},
        {"report", {{"inputs", {"out/eval/report.jsonl"}}}},
        {"inspect", {{"inputs", {"out/dataset/demo"}}}},
    };
    std::ofstream f(root / "run.json");
    f << run.dump(2) << "\n";
    std::cout << "wrote 4 sources and " << (root / "run.json").string() << "\n";
    return 0;
}
