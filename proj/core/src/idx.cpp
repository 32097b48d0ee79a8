#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "creff/data.hpp"
#include "creff/errors.hpp"

// Reader/writer for the big-endian IDX container used by the MNIST family:
// a u32 magic, u32 dimension sizes, then raw unsigned bytes.

namespace creff {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;  // u8 data, 3 dims
constexpr std::uint32_t kLabelMagic = 0x00000801;  // u8 data, 1 dim

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path, const char* field) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw TruncatedError(path + ": file ends inside " + field);
    }
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
           (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

void write_be_u32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::string hex_magic(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", v);
    return buf;
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw ParseError(images_path + ": cannot open");
    const std::uint32_t img_magic = read_be_u32(img, images_path, "magic");
    if (img_magic != kImageMagic) {
        throw BadMagicError(images_path + ": magic " + hex_magic(img_magic) + ", expected " +
                            hex_magic(kImageMagic));
    }
    const std::uint32_t n_images = read_be_u32(img, images_path, "image count");
    const std::uint32_t height = read_be_u32(img, images_path, "height");
    const std::uint32_t width = read_be_u32(img, images_path, "width");
    const std::size_t dim = static_cast<std::size_t>(height) * width;
    if (dim == 0) throw ParseError(images_path + ": zero-sized image dimensions");

    std::vector<unsigned char> pixels(static_cast<std::size_t>(n_images) * dim);
    if (!img.read(reinterpret_cast<char*>(pixels.data()),
                  static_cast<std::streamsize>(pixels.size()))) {
        throw TruncatedError(images_path + ": file ends inside pixel data (wanted " +
                             std::to_string(pixels.size()) + " bytes)");
    }

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw ParseError(labels_path + ": cannot open");
    const std::uint32_t lab_magic = read_be_u32(lab, labels_path, "magic");
    if (lab_magic != kLabelMagic) {
        throw BadMagicError(labels_path + ": magic " + hex_magic(lab_magic) + ", expected " +
                            hex_magic(kLabelMagic));
    }
    const std::uint32_t n_labels = read_be_u32(lab, labels_path, "label count");
    if (n_labels != n_images) {
        throw CountMismatchError(labels_path + ": " + std::to_string(n_labels) +
                                 " labels vs " + std::to_string(n_images) + " images in " +
                                 images_path);
    }
    std::vector<unsigned char> raw_labels(n_labels);
    if (!lab.read(reinterpret_cast<char*>(raw_labels.data()),
                  static_cast<std::streamsize>(raw_labels.size()))) {
        throw TruncatedError(labels_path + ": file ends inside label data (wanted " +
                             std::to_string(raw_labels.size()) + " bytes)");
    }

    int max_label = 0;
    for (unsigned char y : raw_labels) max_label = std::max(max_label, static_cast<int>(y));

    LabeledDataset ds;
    ds.inputs = Matrix(n_images, dim);
    ds.labels.reserve(n_labels);
    ds.class_counts.assign(static_cast<std::size_t>(max_label) + 1, 0);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        ds.inputs.data[i] = static_cast<double>(pixels[i]) / 255.0;
    }
    for (unsigned char y : raw_labels) {
        ds.labels.push_back(static_cast<int>(y));
        ++ds.class_counts[y];
    }
    return ds;
}

void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path) {
    // Quantize over the global value range so relative structure survives the
    // round trip; degenerate (constant) data maps to zero bytes.
    double lo = 0.0, hi = 0.0;
    if (!ds.inputs.data.empty()) {
        lo = *std::min_element(ds.inputs.data.begin(), ds.inputs.data.end());
        hi = *std::max_element(ds.inputs.data.begin(), ds.inputs.data.end());
    }
    const double span = hi - lo;

    std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
    if (!img) throw ParseError(images_path + ": cannot open for writing");
    write_be_u32(img, kImageMagic);
    write_be_u32(img, static_cast<std::uint32_t>(ds.size()));
    write_be_u32(img, 1);
    write_be_u32(img, static_cast<std::uint32_t>(ds.input_dim()));
    std::vector<unsigned char> bytes(ds.inputs.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const double unit = span > 0.0 ? (ds.inputs.data[i] - lo) / span : 0.0;
        bytes[i] = static_cast<unsigned char>(std::min(255.0, std::max(0.0, unit * 255.0 + 0.5)));
    }
    img.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!img) throw ParseError(images_path + ": write failed");

    std::ofstream lab(labels_path, std::ios::binary | std::ios::trunc);
    if (!lab) throw ParseError(labels_path + ": cannot open for writing");
    write_be_u32(lab, kLabelMagic);
    write_be_u32(lab, static_cast<std::uint32_t>(ds.size()));
    std::vector<unsigned char> raw(ds.labels.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = static_cast<unsigned char>(ds.labels[i]);
    }
    lab.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size()));
    if (!lab) throw ParseError(labels_path + ": write failed");
}

}  // namespace creff
