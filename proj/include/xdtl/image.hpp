#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace xdtl {

// Single-channel raster, pixels(y, x) in [0, 1].
struct ImageTensor {
  Eigen::MatrixXd pixels;
  std::string source_path;

  Eigen::Index height() const { return pixels.rows(); }
  Eigen::Index width() const { return pixels.cols(); }
};

inline constexpr int kCanonicalSize = 64;

// 8-bit interleaved raster as decoded from disk (1 = gray, 3 = RGB).
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;
};

namespace image_io {

/// Decodes PNG or JPEG bytes (detected by signature). Alpha channels are
/// dropped and 16-bit PNGs reduced to 8 bits. Throws DataError on failure.
RawImage decode(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Writes an 8-bit grayscale PNG, rounding pixels * 255.
void write_png(const std::filesystem::path& path, const ImageTensor& img);

}  // namespace image_io
}  // namespace xdtl
