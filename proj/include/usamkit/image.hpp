#pragma once

#include <cstdint>
#include <vector>

namespace usamkit {

// Interleaved row-major 8-bit image. scene_ref/flipped are provenance
// metadata (EXIF-style): the synthetic world stamps scene_ref when rendering
// and augmentations carry both fields along, flipping toggling `flipped`.
// Pixel codecs (JPEG) never see them.
struct ImageU8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<uint8_t> data;
  uint64_t scene_ref = 0;  // 0 = not minted by a synthetic world
  bool flipped = false;

  ImageU8() = default;
  ImageU8(int h, int w, int c, uint8_t fill = 0)
      : height(h), width(w), channels(c),
        data(size_t(h) * size_t(w) * size_t(c), fill) {}

  uint8_t at(int r, int c, int ch) const {
    return data[(size_t(r) * width + c) * channels + ch];
  }
  uint8_t& at(int r, int c, int ch) {
    return data[(size_t(r) * width + c) * channels + ch];
  }

  bool operator==(const ImageU8&) const = default;
};

// Baseline sequential JPEG encode + decode at the given quality (1..100).
// Metadata fields are copied through unchanged.
ImageU8 jpeg_roundtrip(const ImageU8& img, int quality);

}  // namespace usamkit
