#include "png_decode.hpp"

#include <stdexcept>
#include <string>

#include <png.h>

namespace offrl::testing {

Image decodePngReference(const std::vector<std::uint8_t>& bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw std::runtime_error(std::string("libpng: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::runtime_error(std::string("libpng: ") + img.message);
  }
  return out;
}

}  // namespace offrl::testing
