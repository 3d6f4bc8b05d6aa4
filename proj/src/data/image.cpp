#include "mine/data/image.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "mine/core/error.hpp"

namespace mine::data {

void ImageRaster::set(std::size_t x, std::size_t y, std::uint8_t r, std::uint8_t g,
                      std::uint8_t b) {
  if (x >= width || y >= height) return;
  at(x, y, 0) = r;
  at(x, y, 1) = g;
  at(x, y, 2) = b;
}

std::vector<std::uint8_t> encode_ppm(const ImageRaster& image) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

ImageRaster decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_token = [&] {
    skip_space_and_comments();
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  if (read_token() != "P6") throw ParseError("not a binary PPM (P6) image");
  ImageRaster img;
  try {
    img.width = std::stoul(read_token());
    img.height = std::stoul(read_token());
    if (std::stoul(read_token()) != 255) throw ParseError("PPM maxval must be 255");
  } catch (const std::logic_error&) {
    throw ParseError("malformed PPM header");
  }
  ++pos;  // single whitespace after maxval
  const std::size_t n = img.width * img.height * 3;
  if (bytes.size() < pos + n) throw ParseError("truncated PPM pixel data");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

ImageRaster read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_ppm(const std::filesystem::path& path, const ImageRaster& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write image " + path.string());
  const auto bytes = encode_ppm(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ImageRaster resize_nearest(const ImageRaster& image, std::size_t width, std::size_t height) {
  if (image.width == width && image.height == height) return image;
  if (image.width == 0 || image.height == 0) throw ContractError("cannot resize an empty image");
  ImageRaster out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = y * image.height / height;
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = x * image.width / width;
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = image.at(sx, sy, c);
    }
  }
  return out;
}

Array patchify(const ImageRaster& image, std::size_t patch) {
  if (patch == 0 || image.width % patch != 0 || image.height % patch != 0) {
    throw DimensionError("image " + std::to_string(image.width) + "x" +
                         std::to_string(image.height) + " is not divisible into " +
                         std::to_string(patch) + "x" + std::to_string(patch) + " patches");
  }
  const std::size_t gx = image.width / patch, gy = image.height / patch;
  const std::size_t feat = patch * patch * 3;
  Array out({gx * gy, feat});
  for (std::size_t ty = 0; ty < gy; ++ty)
    for (std::size_t tx = 0; tx < gx; ++tx) {
      double* row = out.ptr() + (ty * gx + tx) * feat;
      std::size_t k = 0;
      for (std::size_t y = 0; y < patch; ++y)
        for (std::size_t x = 0; x < patch; ++x)
          for (std::size_t c = 0; c < 3; ++c)
            row[k++] = image.at(tx * patch + x, ty * patch + y, c) / 255.0;
    }
  return out;
}

}  // namespace mine::data
