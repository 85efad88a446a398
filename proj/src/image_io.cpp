#include <png.h>

#include <fstream>

#include "binary_io.hpp"
#include "s3c/error.hpp"
#include "s3c/pipeline.hpp"

namespace s3c {

namespace {

Image load_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    fail(ErrorCode::Io, "cannot read PNG " + path.string() + ": " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&png);
    fail(ErrorCode::Io, "cannot decode PNG " + path.string() + ": " + png.message);
  }
  Image img;
  img.height = png.height;
  img.width = png.width;
  img.channels = color ? 3 : 1;
  img.pixels.resize(buffer.size());
  for (std::size_t k = 0; k < buffer.size(); ++k) img.pixels[k] = buffer[k] / 255.0;
  return img;
}

Image load_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  if (!detail::read_magic(in, "S3CI")) {
    fail(ErrorCode::MalformedHeader, "MalformedHeader: " + path.string() + " is not an S3CI image");
  }
  std::uint32_t h = 0, w = 0, c = 0;
  if (!detail::read_le(in, h) || !detail::read_le(in, w) || !detail::read_le(in, c) || c == 0) {
    fail(ErrorCode::MalformedHeader, "MalformedHeader: truncated S3CI header in " + path.string());
  }
  Image img;
  img.height = h;
  img.width = w;
  img.channels = c;
  img.pixels.resize(static_cast<std::size_t>(h) * w * c);
  // planar on disk: channel, row, column
  for (Index ch = 0; ch < img.channels; ++ch) {
    for (Index y = 0; y < img.height; ++y) {
      for (Index x = 0; x < img.width; ++x) {
        float value = 0.0f;
        if (!detail::read_le(in, value)) {
          fail(ErrorCode::CorruptArchive, "CorruptArchive: truncated S3CI payload in " + path.string());
        }
        img.pixels[static_cast<std::size_t>((y * img.width + x) * img.channels + ch)] = value;
      }
    }
  }
  return img;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) fail(ErrorCode::Io, "cannot open " + path.string());
  char head[4] = {};
  probe.read(head, 4);
  probe.close();
  if (head[0] == 'S' && head[1] == '3' && head[2] == 'C' && head[3] == 'I') return load_raw(path);
  return load_png(path);
}

void save_raw_image(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write("S3CI", 4);
  detail::write_le(out, static_cast<std::uint32_t>(img.height));
  detail::write_le(out, static_cast<std::uint32_t>(img.width));
  detail::write_le(out, static_cast<std::uint32_t>(img.channels));
  for (Index ch = 0; ch < img.channels; ++ch) {
    for (Index y = 0; y < img.height; ++y) {
      for (Index x = 0; x < img.width; ++x) {
        detail::write_le(out, static_cast<float>(img.at(y, x, ch)));
      }
    }
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace s3c
