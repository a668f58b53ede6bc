#pragma once

// Binary PNM (PPM P6 / PGM P5) readers and writers. Lossless, dependency
// free, and readable by every image tool; all raster artifacts on disk use
// these formats.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "saliflow/error.hpp"
#include "saliflow/image.hpp"

namespace saliflow {

namespace detail {

inline int pnm_read_token(std::istream& in) {
    // Skips whitespace and '#' comments, returns a non-negative integer.
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = -1;
    in >> value;
    if (!in || value < 0) throw FormatError("pnm: malformed header token");
    return value;
}

}  // namespace detail

inline void write_pnm(const ImageU8& img, const std::filesystem::path& path) {
    if (img.channels() != 1 && img.channels() != 3)
        throw ValueError("pnm: only 1- or 3-channel rasters supported");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("pnm: cannot open for write: " + path.string());
    out << (img.channels() == 3 ? "P6" : "P5") << "\n"
        << img.width() << " " << img.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data()),
              static_cast<std::streamsize>(img.size()));
    if (!out) throw IoError("pnm: write failed: " + path.string());
}

inline ImageU8 read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("pnm: cannot open: " + path.string());
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || (m1 != '5' && m1 != '6'))
        throw FormatError("pnm: bad magic in " + path.string());
    const int channels = (m1 == '6') ? 3 : 1;
    int width = detail::pnm_read_token(in);
    int height = detail::pnm_read_token(in);
    int maxval = detail::pnm_read_token(in);
    if (width <= 0 || height <= 0 || maxval != 255)
        throw FormatError("pnm: unsupported header in " + path.string());
    in.get();  // single whitespace after maxval
    ImageU8 img(height, width, channels);
    in.read(reinterpret_cast<char*>(img.data()), static_cast<std::streamsize>(img.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.size()))
        throw FormatError("pnm: truncated file: " + path.string());
    return img;
}

// Masks live in memory as {0,1}; on disk as {0,255} so they view correctly.
inline void write_mask(const ImageU8& mask, const std::filesystem::path& path) {
    validate_mask(mask);
    ImageU8 visual = mask;
    for (auto& v : visual.raw()) v = v ? 255 : 0;
    write_pnm(visual, path);
}

inline ImageU8 read_mask(const std::filesystem::path& path) {
    ImageU8 img = read_pnm(path);
    if (img.channels() != 1) throw FormatError("mask must be grayscale: " + path.string());
    for (auto& v : img.raw()) v = (v > 127) ? 1 : 0;
    return img;
}

// Float maps in [0,1] (saliency predictions) stored as 8-bit PGM.
inline void write_gray01(const ImageF& map, const std::filesystem::path& path) {
    if (map.channels() != 1) throw ValueError("gray01: single channel expected");
    ImageU8 img(map.height(), map.width(), 1);
    for (std::size_t i = 0; i < map.raw().size(); ++i) {
        float v = map.raw()[i];
        img.raw()[i] = static_cast<std::uint8_t>(
            std::clamp(std::lround(v * 255.0f), 0l, 255l));
    }
    write_pnm(img, path);
}

inline ImageF read_gray01(const std::filesystem::path& path) {
    ImageU8 img = read_pnm(path);
    if (img.channels() != 1) throw FormatError("gray01: single channel expected: " + path.string());
    ImageF map(img.height(), img.width(), 1);
    for (std::size_t i = 0; i < img.raw().size(); ++i)
        map.raw()[i] = static_cast<float>(img.raw()[i]) / 255.0f;
    return map;
}

}  // namespace saliflow
