#include "diffo/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

namespace diffo {

Image read_png(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw FormatError("cannot read PNG " + path + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw FormatError("cannot decode PNG " + path + ": " + msg);
  }
  const Index h = img.height;
  const Index w = img.width;
  Image out({1, 3, h, w});
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      for (Index c = 0; c < 3; ++c) out(0, c, y, x) = buffer[(y * w + x) * 3 + c] / 255.0f;
    }
  }
  return out;
}

void write_png(const std::string& path, const Image& image) {
  if (image.n() != 1 || image.c() != 3) throw ShapeError("write_png expects (1, 3, H, W), got " + image.shape().str());
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.w());
  img.height = static_cast<png_uint_32>(image.h());
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
  for (Index y = 0; y < image.h(); ++y) {
    for (Index x = 0; x < image.w(); ++x) {
      for (Index c = 0; c < 3; ++c) {
        const float v = std::clamp(image(0, c, y, x), 0.0f, 1.0f);
        buffer[(y * image.w() + x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0f));
      }
    }
  }
  if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw FormatError("cannot write PNG " + path + ": " + img.message);
  }
}

std::vector<std::string> list_images(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw ConfigError("not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<LoadedImage> load_images(const std::vector<std::string>& paths,
                                     const std::function<void(const std::string&)>& warn) {
  std::vector<LoadedImage> out;
  for (const auto& p : paths) {
    try {
      out.push_back({p, read_png(p)});
    } catch (const FormatError& e) {
      if (warn) warn(std::string("skipping ") + e.what());
    }
  }
  return out;
}

Image crop(const Image& image, Index top, Index left, Index height, Index width) {
  if (top < 0 || left < 0 || top + height > image.h() || left + width > image.w() || height <= 0 || width <= 0) {
    throw ShapeError("crop window outside image " + image.shape().str());
  }
  Image out({image.n(), image.c(), height, width});
  for (Index n = 0; n < image.n(); ++n) {
    for (Index c = 0; c < image.c(); ++c) {
      for (Index y = 0; y < height; ++y) {
        for (Index x = 0; x < width; ++x) out(n, c, y, x) = image(n, c, top + y, left + x);
      }
    }
  }
  return out;
}

Image crop_to_multiple(const Image& image, Index multiple) {
  const Index h = image.h() / multiple * multiple;
  const Index w = image.w() / multiple * multiple;
  if (h == 0 || w == 0) throw ShapeError("image " + image.shape().str() + " smaller than " + std::to_string(multiple));
  if (h == image.h() && w == image.w()) return image;
  return crop(image, 0, 0, h, w);
}

Image synthetic_image(Index height, Index width, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto color = [&] { return std::array<double, 3>{u(rng), u(rng), u(rng)}; };
  Image out({1, 3, height, width});

  const auto c0 = color();
  const auto c1 = color();
  const double angle = u(rng) * 2.0 * std::numbers::pi;
  const double gx = std::cos(angle) / width;
  const double gy = std::sin(angle) / height;
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const double s = std::clamp(0.5 + (x - width / 2.0) * gx + (y - height / 2.0) * gy, 0.0, 1.0);
      for (Index c = 0; c < 3; ++c) out(0, c, y, x) = static_cast<float>(c0[c] * (1 - s) + c1[c] * s);
    }
  }

  const int shapes = 3 + static_cast<int>(u(rng) * 5);
  for (int k = 0; k < shapes; ++k) {
    const auto col = color();
    const double cx = u(rng) * width;
    const double cy = u(rng) * height;
    const double r = (0.05 + 0.2 * u(rng)) * std::min(height, width);
    const int kind = static_cast<int>(u(rng) * 3);
    const double freq = 0.1 + 0.5 * u(rng);
    const double phase = u(rng) * 2.0 * std::numbers::pi;
    const double theta = u(rng) * std::numbers::pi;
    for (Index y = 0; y < height; ++y) {
      for (Index x = 0; x < width; ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        bool inside = false;
        if (kind == 0) inside = dx * dx + dy * dy <= r * r;
        if (kind == 1) inside = std::abs(dx) <= r && std::abs(dy) <= 0.6 * r;
        if (kind == 2) inside = std::abs(dx) + std::abs(dy) <= 1.2 * r;
        if (!inside) continue;
        // Shapes of kind 2 carry a striped texture.
        double shade = 1.0;
        if (kind == 2) shade = 0.6 + 0.4 * std::sin(freq * (dx * std::cos(theta) + dy * std::sin(theta)) + phase);
        for (Index c = 0; c < 3; ++c) out(0, c, y, x) = static_cast<float>(col[c] * shade);
      }
    }
  }

  std::normal_distribution<double> noise(0.0, 0.02);
  for (Index i = 0; i < out.size(); ++i) {
    out.data()[i] = static_cast<float>(std::clamp(out.data()[i] + noise(rng), 0.0, 1.0));
  }
  return out;
}

}  // namespace diffo
