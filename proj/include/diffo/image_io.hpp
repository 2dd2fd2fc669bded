#pragma once

#include <functional>
#include <string>
#include <vector>

#include "diffo/tensor.hpp"

namespace diffo {

using Image = Tensor<float>;

/// 8-bit PNG (any color type, converted to RGB) as a (1, 3, H, W) tensor in [0, 1].
Image read_png(const std::string& path);
/// Writes a (1, 3, H, W) tensor as 8-bit RGB PNG; values are clamped and rounded.
void write_png(const std::string& path, const Image& image);

/// Regular files in dir with a .png extension, sorted by name.
std::vector<std::string> list_images(const std::string& dir);

struct LoadedImage {
  std::string path;
  Image image;
};

/// Reads every listed image; unreadable ones are reported through warn and skipped.
std::vector<LoadedImage> load_images(const std::vector<std::string>& paths,
                                     const std::function<void(const std::string&)>& warn);

/// Top-left crop to the largest size divisible by multiple; ShapeError if empty.
Image crop_to_multiple(const Image& image, Index multiple);
/// (1, 3, size, size) window at (top, left).
Image crop(const Image& image, Index top, Index left, Index height, Index width);

/// Procedural test image: smooth gradients, filled shapes, sinusoidal
/// texture patches and mild noise, fully determined by seed.
Image synthetic_image(Index height, Index width, std::uint64_t seed);

}  // namespace diffo
