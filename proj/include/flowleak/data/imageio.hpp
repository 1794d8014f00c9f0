#pragma once

#include <string>

#include "flowleak/ad/tensor.hpp"
#include "flowleak/fl/client.hpp"

namespace flowleak::data {

enum class ImageFormat { pgm, ppm, cifar10 };

ImageFormat image_format_from_name(const std::string& name);
std::string image_format_name(ImageFormat format);

// Binary netpbm with maxval 255. Pixels are quantized with round(v * 255)
// after clamping to [0,1], so a write-then-read round trip moves any pixel by
// at most 1/510. write_pgm takes (H,W) or (1,H,W); write_ppm takes (3,H,W).
void write_pgm(const std::string& path, const ad::Tensor& image);
void write_ppm(const std::string& path, const ad::Tensor& image);
ad::Tensor read_pgm(const std::string& path);  // (1,H,W) in [0,1]
ad::Tensor read_ppm(const std::string& path);  // (3,H,W) in [0,1]

// CIFAR-10 batch file: 3073-byte records, one label byte then 3072 pixel
// bytes as full R, G, B planes, each row-major 32x32. A short file fails with
// the byte offset of the truncated record.
fl::ClientDataset read_cifar10(const std::string& path);

// pgm/ppm: path is one image file or a directory scanned in filename order;
// labels come from a trailing "_c<digits>" in the stem. cifar10: one batch
// file.
fl::ClientDataset load_images(const std::string& path, ImageFormat format);

// Writes img_<index>_c<label> files into dir (created if missing), matching
// what load_images expects back.
void save_dataset(const std::string& dir, const fl::ClientDataset& dataset, ImageFormat format);

}  // namespace flowleak::data
