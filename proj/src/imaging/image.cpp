#include "reefloop/image.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include <png.h>

namespace reefloop {

namespace {

void on_png_error(png_structp, png_const_charp msg) { throw ImageError(std::string("png: ") + msg); }
void on_png_warning(png_structp, png_const_charp) {}

void append_bytes(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), len);
}

struct ReadCursor {
  const std::string* bytes;
  std::size_t offset;
};

void read_bytes(png_structp png, png_bytep data, png_size_t len) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + len > cur->bytes->size()) png_error(png, "truncated stream");
  std::memcpy(data, cur->bytes->data() + cur->offset, len);
  cur->offset += len;
}

}  // namespace

std::vector<float> to_gray(const Frame& frame) {
  std::vector<float> out(std::size_t(frame.width) * frame.height);
  const std::uint8_t* p = frame.pixels.data();
  if (frame.channels == 1) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = p[i];
  } else {
    for (std::size_t i = 0; i < out.size(); ++i, p += 3)
      out[i] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
  }
  return out;
}

std::string encode_png(const Frame& frame) {
  if (!frame.consistent()) throw ImageError("frame buffer does not match its dimensions");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) throw ImageError("png: cannot allocate writer");
  std::string out;
  try {
    png_set_write_fn(png, &out, append_bytes, nullptr);
    png_set_IHDR(png, info, frame.width, frame.height, 8,
                 frame.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 1);
    png_write_info(png, info);
    const std::size_t stride = std::size_t(frame.width) * frame.channels;
    for (int y = 0; y < frame.height; ++y)
      png_write_row(png, const_cast<png_bytep>(frame.pixels.data() + y * stride));
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

Frame decode_png(const std::string& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
    throw ImageError("not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) throw ImageError("png: cannot allocate reader");
  Frame frame;
  ReadCursor cursor{&bytes, 0};
  try {
    png_set_read_fn(png, &cursor, read_bytes);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
      png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    frame.width = static_cast<int>(png_get_image_width(png, info));
    frame.height = static_cast<int>(png_get_image_height(png, info));
    frame.channels = static_cast<int>(png_get_channels(png, info));
    if (frame.channels != 1 && frame.channels != 3) png_error(png, "unsupported channel layout");
    frame.pixels.resize(std::size_t(frame.width) * frame.height * frame.channels);
    const std::size_t stride = std::size_t(frame.width) * frame.channels;
    for (int y = 0; y < frame.height; ++y) png_read_row(png, frame.pixels.data() + y * stride, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return frame;
}

void write_png(const std::filesystem::path& file, const Frame& frame) {
  const std::string bytes = encode_png(frame);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError("cannot write " + file.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Frame read_png(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ImageError("cannot open " + file.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

}  // namespace reefloop
