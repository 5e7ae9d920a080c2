#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace uca::png {

/// Raw raster as stored on disk: 8- or 16-bit samples, 1-4 interleaved
/// channels, row-major. 8-bit samples are held in the low byte.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

/// Throws IoError if the file cannot be opened, FormatError if it is not a
/// PNG libpng can decode. Palette images are expanded to RGB.
Raster read(const std::filesystem::path& path);

/// Throws IoError on write failure, ShapeError on inconsistent rasters.
void write(const std::filesystem::path& path, const Raster& raster);

}  // namespace uca::png
