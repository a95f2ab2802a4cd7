#include "squanv/data.hpp"

#include "squanv/error.hpp"
#include "squanv/random.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>

namespace squanv {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(const std::vector<std::uint8_t> &buf, std::size_t off) {
    return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
           (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
}

void put_be32(std::ofstream &out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                           static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(bytes, 4);
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t> &in,
                                 const std::filesystem::path &path) {
    z_stream zs{};
    // 15 + 16: zlib window with gzip header decoding.
    if (inflateInit2(&zs, 15 + 16) != Z_OK) {
        throw IngestError("zlib init failed for " + path.string());
    }
    zs.next_in = const_cast<Bytef *>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    std::vector<std::uint8_t> out;
    std::uint8_t chunk[1 << 16];
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = chunk;
        zs.avail_out = sizeof(chunk);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw IngestError("corrupt or truncated gzip stream in " + path.string() +
                              " at compressed offset " + std::to_string(zs.total_in));
        }
        out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
        if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw IngestError("truncated gzip stream in " + path.string());
        }
    }
    inflateEnd(&zs);
    return out;
}

void expect_size(const std::vector<std::uint8_t> &buf, std::size_t expected,
                 const std::filesystem::path &path) {
    if (buf.size() < expected) {
        throw IngestError(path.string() + ": truncated, expected " +
                          std::to_string(expected) + " bytes but found " +
                          std::to_string(buf.size()));
    }
}

} // namespace

int ImageDataset::num_classes() const {
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IngestError("cannot open " + path.string());
    }
    std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) {
        return gunzip(raw, path);
    }
    return raw;
}

ImageDataset load_idx(const std::filesystem::path &images_path,
                      const std::filesystem::path &labels_path) {
    const auto img = read_maybe_gzip(images_path);
    const auto lab = read_maybe_gzip(labels_path);

    expect_size(img, 16, images_path);
    if (const auto magic = read_be32(img, 0); magic != kImageMagic) {
        throw IngestError(images_path.string() + ": bad magic " + std::to_string(magic) +
                          " at offset 0, expected 2051");
    }
    expect_size(lab, 8, labels_path);
    if (const auto magic = read_be32(lab, 0); magic != kLabelMagic) {
        throw IngestError(labels_path.string() + ": bad magic " + std::to_string(magic) +
                          " at offset 0, expected 2049");
    }

    const std::uint32_t n = read_be32(img, 4);
    const std::uint32_t h = read_be32(img, 8);
    const std::uint32_t w = read_be32(img, 12);
    const std::uint32_t nl = read_be32(lab, 4);
    if (n != nl) {
        throw IngestError("image count " + std::to_string(n) + " (" + images_path.string() +
                          ", offset 4) does not match label count " + std::to_string(nl) +
                          " (" + labels_path.string() + ", offset 4)");
    }
    const std::size_t pixels = std::size_t{n} * h * w;
    expect_size(img, 16 + pixels, images_path);
    expect_size(lab, 8 + std::size_t{n}, labels_path);

    ImageDataset ds;
    ds.count = static_cast<int>(n);
    ds.height = static_cast<int>(h);
    ds.width = static_cast<int>(w);
    ds.pixels.resize(pixels);
    for (std::size_t k = 0; k < pixels; ++k) {
        ds.pixels[k] = img[16 + k] / 255.0;
    }
    ds.labels.assign(lab.begin() + 8, lab.begin() + 8 + n);
    return ds;
}

void write_idx(const std::filesystem::path &images_path,
               const std::filesystem::path &labels_path,
               const std::vector<std::uint8_t> &pixels, int count, int height, int width,
               const std::vector<std::uint8_t> &labels) {
    require(pixels.size() == static_cast<std::size_t>(count) * height * width,
            "pixel buffer does not match dimensions");
    require(labels.size() == static_cast<std::size_t>(count),
            "label buffer does not match count");
    std::ofstream img(images_path, std::ios::binary);
    put_be32(img, kImageMagic);
    put_be32(img, static_cast<std::uint32_t>(count));
    put_be32(img, static_cast<std::uint32_t>(height));
    put_be32(img, static_cast<std::uint32_t>(width));
    img.write(reinterpret_cast<const char *>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
    std::ofstream lab(labels_path, std::ios::binary);
    put_be32(lab, kLabelMagic);
    put_be32(lab, static_cast<std::uint32_t>(count));
    lab.write(reinterpret_cast<const char *>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
    if (!img || !lab) {
        throw IngestError("failed writing IDX files");
    }
}

ImageDataset downscale(const ImageDataset &ds, int factor) {
    require(factor >= 1, "downscale factor must be positive");
    require(ds.height % factor == 0 && ds.width % factor == 0,
            "downscale factor " + std::to_string(factor) + " does not divide " +
                std::to_string(ds.height) + "x" + std::to_string(ds.width));
    ImageDataset out = ds;
    out.height = ds.height / factor;
    out.width = ds.width / factor;
    out.pixels.assign(static_cast<std::size_t>(ds.count) * out.height * out.width, 0.0);
    const double inv = 1.0 / (factor * factor);
    for (int n = 0; n < ds.count; ++n) {
        const auto src = ds.image(n);
        double *dst =
            out.pixels.data() + static_cast<std::size_t>(n) * out.height * out.width;
        for (int i = 0; i < out.height; ++i) {
            for (int j = 0; j < out.width; ++j) {
                double acc = 0.0;
                for (int di = 0; di < factor; ++di) {
                    for (int dj = 0; dj < factor; ++dj) {
                        acc += src.at(i * factor + di, j * factor + dj);
                    }
                }
                dst[i * out.width + j] = acc * inv;
            }
        }
    }
    return out;
}

ImageDataset subset(const ImageDataset &ds, int per_class, std::uint64_t seed) {
    require(per_class >= 1, "per_class must be positive");
    const int classes = ds.num_classes();
    std::vector<int> order(static_cast<std::size_t>(ds.count));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(seed, 0x5b5e7));
    rng.shuffle(std::span(order));

    std::vector<int> taken(static_cast<std::size_t>(classes), 0);
    std::vector<int> keep;
    for (const int idx : order) {
        const int c = ds.labels[idx];
        if (taken[c] < per_class) {
            ++taken[c];
            keep.push_back(idx);
        }
    }
    for (int c = 0; c < classes; ++c) {
        require(taken[c] == per_class, "class " + std::to_string(c) + " has only " +
                                           std::to_string(taken[c]) + " examples, " +
                                           std::to_string(per_class) + " requested");
    }

    ImageDataset out;
    out.count = static_cast<int>(keep.size());
    out.height = ds.height;
    out.width = ds.width;
    out.split = ds.split;
    out.source = ds.source;
    const auto n = static_cast<std::size_t>(ds.height) * ds.width;
    out.pixels.reserve(keep.size() * n);
    for (const int idx : keep) {
        const auto img = ds.image(idx).pixels;
        out.pixels.insert(out.pixels.end(), img.begin(), img.end());
        out.labels.push_back(ds.labels[idx]);
    }
    return out;
}

} // namespace squanv
