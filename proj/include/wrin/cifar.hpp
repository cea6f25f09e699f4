#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wrin/tensor.hpp"

namespace wrin {

enum class CifarVariant { cifar10, cifar100 };

inline CifarVariant parse_cifar_variant(const std::string& s) {
  if (s == "cifar10") return CifarVariant::cifar10;
  if (s == "cifar100") return CifarVariant::cifar100;
  throw std::invalid_argument("unknown dataset '" + s + "' (expected cifar10 or cifar100)");
}

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;

inline std::size_t cifar_label_bytes(CifarVariant v) { return v == CifarVariant::cifar10 ? 1 : 2; }
inline std::size_t cifar_record_size(CifarVariant v) { return cifar_label_bytes(v) + kCifarPixels; }
inline std::size_t cifar_classes(CifarVariant v) { return v == CifarVariant::cifar10 ? 10 : 100; }

struct LabeledImage {
  Tensor<float> image;    // (1, 3, 32, 32)
  int label = 0;          // fine label for CIFAR-100
  int coarse_label = -1;  // CIFAR-100 only
};

/// Decodes binary records (label byte(s) then channel-planar R, G, B pixels),
/// scaling pixels by 1/255.
inline std::vector<LabeledImage> decode_cifar(std::span<const std::uint8_t> bytes, CifarVariant v,
                                              const std::string& source = "<memory>") {
  const std::size_t record = cifar_record_size(v);
  if (bytes.size() % record != 0) {
    throw FormatError(source + ": length " + std::to_string(bytes.size()) + " is not a multiple of the " +
                      std::to_string(record) + "-byte record size");
  }
  std::vector<LabeledImage> out;
  out.reserve(bytes.size() / record);
  for (std::size_t off = 0; off < bytes.size(); off += record) {
    LabeledImage img;
    if (v == CifarVariant::cifar100) {
      img.coarse_label = bytes[off];
      img.label = bytes[off + 1];
      if (img.coarse_label >= 20) {
        throw FormatError(source + ": coarse label " + std::to_string(img.coarse_label) + " at byte " +
                          std::to_string(off) + " exceeds 19");
      }
    } else {
      img.label = bytes[off];
    }
    if (static_cast<std::size_t>(img.label) >= cifar_classes(v)) {
      throw FormatError(source + ": label " + std::to_string(img.label) + " at byte " +
                        std::to_string(off + cifar_label_bytes(v) - 1) + " exceeds class count " +
                        std::to_string(cifar_classes(v)));
    }
    img.image = Tensor<float>(Shape{1, 3, kCifarSide, kCifarSide});
    const std::uint8_t* px = bytes.data() + off + cifar_label_bytes(v);
    for (std::size_t i = 0; i < kCifarPixels; ++i) img.image[i] = static_cast<float>(px[i]) / 255.0f;
    out.push_back(std::move(img));
  }
  return out;
}

/// Inverse of decode_cifar for images in [0, 1] (values are rounded to bytes).
inline std::vector<std::uint8_t> encode_cifar(const std::vector<LabeledImage>& images, CifarVariant v) {
  std::vector<std::uint8_t> out;
  out.reserve(images.size() * cifar_record_size(v));
  for (const auto& img : images) {
    if (img.image.size() != kCifarPixels) throw ShapeError("encode_cifar: image must be 3x32x32");
    if (v == CifarVariant::cifar100) out.push_back(static_cast<std::uint8_t>(img.coarse_label));
    out.push_back(static_cast<std::uint8_t>(img.label));
    for (float p : img.image.vec()) {
      out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f)));
    }
  }
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<LabeledImage> read_cifar(const std::vector<std::string>& paths, CifarVariant v) {
  std::vector<LabeledImage> all;
  for (const auto& p : paths) {
    const auto bytes = read_file_bytes(p);
    auto part = decode_cifar(bytes, v, p);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

inline void write_cifar(const std::string& path, const std::vector<LabeledImage>& images, CifarVariant v) {
  const auto bytes = encode_cifar(images, v);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Locates the standard split files under `dir` (directly or inside the
/// archive's top-level folder).
inline std::vector<std::string> cifar_split_files(const std::string& dir, CifarVariant v, bool train) {
  namespace fs = std::filesystem;
  std::vector<std::string> names;
  std::string sub;
  if (v == CifarVariant::cifar10) {
    sub = "cifar-10-batches-bin";
    if (train) {
      for (int i = 1; i <= 5; ++i) names.push_back("data_batch_" + std::to_string(i) + ".bin");
    } else {
      names.push_back("test_batch.bin");
    }
  } else {
    sub = "cifar-100-binary";
    names.push_back(train ? "train.bin" : "test.bin");
  }
  for (const fs::path& base : {fs::path(dir), fs::path(dir) / sub}) {
    std::vector<std::string> found;
    for (const auto& n : names) {
      if (fs::exists(base / n)) found.push_back((base / n).string());
    }
    if (!found.empty()) return found;
  }
  throw std::runtime_error("no " + std::string(train ? "training" : "test") + " files for " +
                           (v == CifarVariant::cifar10 ? "cifar10" : "cifar100") + " under '" + dir + "'");
}

// -- normalization ---------------------------------------------------------------

struct ChannelStats {
  std::array<float, 3> mean{0, 0, 0};
  std::array<float, 3> std{1, 1, 1};
};

inline void to_json(nlohmann::json& j, const ChannelStats& s) { j = {{"mean", s.mean}, {"std", s.std}}; }
inline void from_json(const nlohmann::json& j, ChannelStats& s) {
  s.mean = j.at("mean").get<std::array<float, 3>>();
  s.std = j.at("std").get<std::array<float, 3>>();
}

inline ChannelStats compute_channel_stats(const std::vector<LabeledImage>& data) {
  ChannelStats s;
  const std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    for (const auto& img : data) {
      const float* p = img.image.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum += p[i];
        sq += static_cast<double>(p[i]) * p[i];
      }
    }
    const double n = static_cast<double>(data.size() * plane);
    const double mean = n > 0 ? sum / n : 0.0;
    const double var = n > 0 ? sq / n - mean * mean : 1.0;
    s.mean[c] = static_cast<float>(mean);
    s.std[c] = static_cast<float>(std::sqrt(std::max(var, 1e-12)));
  }
  return s;
}

inline void normalize(std::vector<LabeledImage>& data, const ChannelStats& s) {
  const std::size_t plane = kCifarSide * kCifarSide;
  for (auto& img : data) {
    for (std::size_t c = 0; c < 3; ++c) {
      float* p = img.image.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - s.mean[c]) / s.std[c];
    }
  }
}

// -- augmentation ----------------------------------------------------------------

inline constexpr std::size_t kAugmentPad = 4;

/// Crop of the 4-pixel zero-padded image at (offset_y, offset_x), optionally
/// mirrored horizontally. Offset (4, 4) without flip is the identity.
inline LabeledImage crop_flip(const LabeledImage& src, std::size_t offset_y, std::size_t offset_x, bool flip) {
  const auto& s = src.image.shape();
  if (s.h != kCifarSide || s.w != kCifarSide) throw ShapeError("augment: expected a 32x32 image");
  if (offset_y > 2 * kAugmentPad || offset_x > 2 * kAugmentPad) throw std::out_of_range("augment: crop offset");
  LabeledImage out{Tensor<float>(s), src.label, src.coarse_label};
  const auto side = static_cast<std::ptrdiff_t>(kCifarSide);
  for (std::size_t c = 0; c < s.c; ++c) {
    for (std::ptrdiff_t y = 0; y < side; ++y) {
      const std::ptrdiff_t sy = y + static_cast<std::ptrdiff_t>(offset_y) - static_cast<std::ptrdiff_t>(kAugmentPad);
      for (std::ptrdiff_t x = 0; x < side; ++x) {
        const std::ptrdiff_t ox = flip ? side - 1 - x : x;
        const std::ptrdiff_t sx = ox + static_cast<std::ptrdiff_t>(offset_x) - static_cast<std::ptrdiff_t>(kAugmentPad);
        const bool inside = sy >= 0 && sy < side && sx >= 0 && sx < side;
        out.image.at(0, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
            inside ? src.image.at(0, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) : 0.0f;
      }
    }
  }
  return out;
}

struct AugmentDraw {
  std::size_t offset_y = kAugmentPad;
  std::size_t offset_x = kAugmentPad;
  bool flip = false;
};

inline AugmentDraw draw_augmentation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AugmentDraw d;
  d.offset_y = rng() % (2 * kAugmentPad + 1);
  d.offset_x = rng() % (2 * kAugmentPad + 1);
  d.flip = (rng() >> 63) != 0;
  return d;
}

/// Pad 4, random 32x32 crop, horizontal flip with probability 1/2.
inline LabeledImage augment(const LabeledImage& img, std::uint64_t seed) {
  const AugmentDraw d = draw_augmentation(seed);
  return crop_flip(img, d.offset_y, d.offset_x, d.flip);
}

// -- synthetic data ----------------------------------------------------------------

/// CIFAR-shaped stand-in data: each class is a fixed random smooth color
/// pattern, each image that pattern plus per-pixel noise, quantized to bytes.
inline std::vector<LabeledImage> synthetic_cifar(std::size_t count, std::size_t classes, std::uint64_t seed,
                                                 float noise = 0.15f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  std::normal_distribution<float> gauss(0.0f, noise);
  std::vector<std::vector<float>> templates(classes, std::vector<float>(kCifarPixels));
  for (auto& t : templates) {
    float fy[3], fx[3], ph[3], base[3];
    for (int c = 0; c < 3; ++c) {
      fy[c] = 0.05f + 0.4f * uni(rng);
      fx[c] = 0.05f + 0.4f * uni(rng);
      ph[c] = 6.2832f * uni(rng);
      base[c] = 0.3f + 0.4f * uni(rng);
    }
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < kCifarSide; ++y) {
        for (std::size_t x = 0; x < kCifarSide; ++x) {
          t[(c * kCifarSide + y) * kCifarSide + x] =
              base[c] + 0.25f * std::sin(fy[c] * static_cast<float>(y) + fx[c] * static_cast<float>(x) + ph[c]);
        }
      }
    }
  }
  std::vector<LabeledImage> out;
  for (std::size_t i = 0; i < count; ++i) {
    LabeledImage img;
    img.label = static_cast<int>(rng() % classes);
    img.image = Tensor<float>(Shape{1, 3, kCifarSide, kCifarSide});
    const auto& t = templates[static_cast<std::size_t>(img.label)];
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      const float v = std::clamp(t[p] + gauss(rng), 0.0f, 1.0f);
      img.image[p] = std::round(v * 255.0f) / 255.0f;
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace wrin
