#include "flowleak/data/imageio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"

namespace fs = std::filesystem;

namespace flowleak::data {

namespace {

constexpr std::size_t kCifarRecord = 3073;  // label byte + 3 * 32 * 32 pixels

unsigned char quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned char>(std::lround(c * 255.0));
}

void write_netpbm(const std::string& path, const ad::Tensor& image, int channels,
                  const char* magic) {
  std::vector<int> shape = image.shape();
  int h = 0, w = 0;
  if (channels == 1 && shape.size() == 2) {
    h = shape[0];
    w = shape[1];
  } else if (shape.size() == 3 && shape[0] == channels) {
    h = shape[1];
    w = shape[2];
  } else {
    throw ShapeError(std::string(magic) + " write: bad shape " + shape_str(shape));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(std::string(magic) + " write: cannot open " + path);
  out << magic << "\n" << w << " " << h << "\n255\n";
  // Netpbm interleaves channels per pixel; tensors store planes.
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  auto d = image.data();
  std::vector<unsigned char> bytes;
  bytes.reserve(plane * channels);
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < channels; ++c) bytes.push_back(quantize(d[c * plane + i]));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(std::string(magic) + " write: write failed for " + path);
}

// Token reader for netpbm headers: skips whitespace and '#' comments,
// tracking the byte offset for error messages.
struct HeaderReader {
  std::ifstream& in;
  const std::string& path;

  [[noreturn]] void fail(const std::string& why) {
    const auto at = in.tellg();
    const long long offset = at == std::ifstream::pos_type(-1) ? -1 : static_cast<long long>(at);
    throw ParseError(path + ": " + why + " at byte offset " + std::to_string(offset));
  }

  int get_or_fail(const std::string& what) {
    const int c = in.get();
    if (c == EOF) fail("unexpected end of file reading " + what);
    return c;
  }

  std::string token(const std::string& what) {
    int c = get_or_fail(what);
    while (std::isspace(c) || c == '#') {
      if (c == '#')
        while (c != '\n' && c != EOF) c = in.get();
      c = get_or_fail(what);
    }
    std::string tok;
    while (c != EOF && !std::isspace(c) && c != '#') {
      tok.push_back(static_cast<char>(c));
      c = in.get();
    }
    if (c == '#') in.unget();  // single whitespace must follow maxval, not a comment
    return tok;
  }

  int number(const std::string& what, int lo, int hi) {
    const std::string tok = token(what);
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(tok, &used);
    } catch (const std::exception&) {
      fail("invalid " + what + " '" + tok + "'");
    }
    if (used != tok.size()) fail("invalid " + what + " '" + tok + "'");
    if (value < lo || value > hi)
      fail(what + " " + tok + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return value;
  }
};

ad::Tensor read_netpbm(const std::string& path, int channels, const char* magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(std::string(magic) + " read: cannot open " + path);
  HeaderReader hdr{in, path};
  const std::string m = hdr.token("magic");
  if (m != magic) hdr.fail(std::string("expected ") + magic + " magic, got '" + m + "'");
  const int w = hdr.number("width", 1, 1 << 20);
  const int h = hdr.number("height", 1, 1 << 20);
  hdr.number("maxval", 255, 255);  // only 8-bit full-range images are supported
  // The single whitespace byte after maxval was consumed by the tokenizer.
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<unsigned char> bytes(plane * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size())
    hdr.fail("pixel data truncated, need " + std::to_string(bytes.size()) + " bytes");
  std::vector<double> px(bytes.size());
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < channels; ++c)
      px[c * plane + i] = bytes[i * channels + c] / 255.0;
  return ad::Tensor::from_data({channels, h, w}, std::move(px));
}

int label_from_stem(const std::string& stem, const std::string& path) {
  const std::size_t pos = stem.rfind("_c");
  if (pos == std::string::npos || pos + 2 >= stem.size())
    throw ParseError(path + ": filename carries no _c<label> suffix");
  std::size_t used = 0;
  int label = 0;
  try {
    label = std::stoi(stem.substr(pos + 2), &used);
  } catch (const std::exception&) {
    throw ParseError(path + ": bad label in filename");
  }
  if (used != stem.size() - pos - 2 || label < 0)
    throw ParseError(path + ": bad label in filename");
  return label;
}

}  // namespace

ImageFormat image_format_from_name(const std::string& name) {
  if (name == "pgm") return ImageFormat::pgm;
  if (name == "ppm") return ImageFormat::ppm;
  if (name == "cifar10-binary") return ImageFormat::cifar10;
  throw ParseError("unknown image format '" + name + "'");
}

std::string image_format_name(ImageFormat format) {
  switch (format) {
    case ImageFormat::pgm: return "pgm";
    case ImageFormat::ppm: return "ppm";
    case ImageFormat::cifar10: return "cifar10-binary";
  }
  throw ValueError("image format enum out of range");
}

void write_pgm(const std::string& path, const ad::Tensor& image) {
  write_netpbm(path, image, 1, "P5");
}

void write_ppm(const std::string& path, const ad::Tensor& image) {
  write_netpbm(path, image, 3, "P6");
}

ad::Tensor read_pgm(const std::string& path) { return read_netpbm(path, 1, "P5"); }

ad::Tensor read_ppm(const std::string& path) { return read_netpbm(path, 3, "P6"); }

fl::ClientDataset read_cifar10(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cifar10 read: cannot open " + path);
  fl::ClientDataset out;
  std::vector<unsigned char> rec(kCifarRecord);
  for (std::size_t k = 0;; ++k) {
    in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
    const std::size_t got = static_cast<std::size_t>(in.gcount());
    if (got == 0 && in.eof()) break;
    if (got != kCifarRecord)
      throw ParseError(path + ": truncated record at byte offset " +
                       std::to_string(k * kCifarRecord) + " (got " + std::to_string(got) +
                       " of 3073 bytes)");
    if (rec[0] > 9)
      throw ParseError(path + ": label byte " + std::to_string(int(rec[0])) +
                       " at byte offset " + std::to_string(k * kCifarRecord));
    std::vector<double> px(3072);
    for (std::size_t i = 0; i < 3072; ++i) px[i] = rec[1 + i] / 255.0;
    out.images.push_back(ad::Tensor::from_data({3, 32, 32}, std::move(px)));
    out.labels.push_back(int(rec[0]));
  }
  if (out.images.empty()) throw ParseError(path + ": no records");
  return out;
}

fl::ClientDataset load_images(const std::string& path, ImageFormat format) {
  if (format == ImageFormat::cifar10) return read_cifar10(path);
  const auto read_one = format == ImageFormat::pgm ? read_pgm : read_ppm;
  const std::string ext = "." + image_format_name(format);

  fl::ClientDataset out;
  if (fs::is_directory(path)) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.is_regular_file() && entry.path().extension() == ext)
        files.push_back(entry.path().string());
    if (files.empty()) throw IoError(path + ": no " + ext + " files");
    std::sort(files.begin(), files.end());
    for (const std::string& f : files) {
      out.images.push_back(read_one(f));
      out.labels.push_back(label_from_stem(fs::path(f).stem().string(), f));
    }
  } else {
    out.images.push_back(read_one(path));
    out.labels.push_back(label_from_stem(fs::path(path).stem().string(), path));
  }
  return out;
}

void save_dataset(const std::string& dir, const fl::ClientDataset& dataset, ImageFormat format) {
  if (format == ImageFormat::cifar10)
    throw ValueError("save_dataset: cifar10 batches are input-only");
  dataset.validate();
  fs::create_directories(dir);
  char name[64];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    std::snprintf(name, sizeof name, "img_%05zu_c%d.%s", i, dataset.labels[i],
                  image_format_name(format).c_str());
    const std::string path = (fs::path(dir) / name).string();
    if (format == ImageFormat::pgm)
      write_pgm(path, dataset.images[i]);
    else
      write_ppm(path, dataset.images[i]);
  }
}

}  // namespace flowleak::data
