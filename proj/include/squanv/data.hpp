#pragma once

#include "squanv/quanv.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace squanv {

/// Grayscale images in [0, 1] with integer class labels.
struct ImageDataset {
    int count = 0;
    int height = 0;
    int width = 0;
    std::vector<double> pixels; // count * height * width, row-major
    std::vector<int> labels;
    std::string split;  // "train" / "test"
    std::string source; // "mnist" / "fmnist" / ...

    [[nodiscard]] ImageView image(int i) const {
        const auto n = static_cast<std::size_t>(height) * width;
        return {std::span(pixels).subspan(static_cast<std::size_t>(i) * n, n), height,
                width};
    }
    /// One past the largest label.
    [[nodiscard]] int num_classes() const;
};

/**
 * Reads an IDX image file (magic 0x00000803) and label file (0x00000801),
 * both big-endian, each optionally gzip-compressed. Pixels are scaled by
 * 1/255. Throws IngestError on bad magic, truncation, or count mismatch.
 */
ImageDataset load_idx(const std::filesystem::path &images_path,
                      const std::filesystem::path &labels_path);

/// Whole file contents, transparently gunzipped when it starts with 1f 8b.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path &path);

/// Writes an uncompressed IDX pair (used for fixtures and tests).
void write_idx(const std::filesystem::path &images_path,
               const std::filesystem::path &labels_path,
               const std::vector<std::uint8_t> &pixels, int count, int height, int width,
               const std::vector<std::uint8_t> &labels);

/// Non-overlapping factor x factor average pooling.
ImageDataset downscale(const ImageDataset &dataset, int factor);

/// First `per_class` examples of each class after a seeded shuffle, kept
/// in shuffled order.
ImageDataset subset(const ImageDataset &dataset, int per_class, std::uint64_t seed);

} // namespace squanv
