#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace reefloop {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
struct Frame {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;
  double timestamp = 0.0;  ///< seconds

  Frame() = default;
  Frame(int w, int h, int c, double t = 0.0)
      : width(w), height(h), channels(c), pixels(std::size_t(w) * h * c, 0), timestamp(t) {}

  bool consistent() const {
    return width > 0 && height > 0 && (channels == 1 || channels == 3) &&
           pixels.size() == std::size_t(width) * height * channels;
  }
  std::uint8_t* at(int x, int y) { return pixels.data() + (std::size_t(y) * width + x) * channels; }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (std::size_t(y) * width + x) * channels;
  }

  friend bool operator==(const Frame&, const Frame&) = default;
};

/// Luma (BT.601 weights) as floats, row-major.
std::vector<float> to_gray(const Frame& frame);

std::string encode_png(const Frame& frame);
Frame decode_png(const std::string& bytes);
void write_png(const std::filesystem::path& file, const Frame& frame);
Frame read_png(const std::filesystem::path& file);

}  // namespace reefloop
