#include "usamkit/image.hpp"

// jpeglib.h consumes FILE/size_t without including their headers itself.
#include <stddef.h>
#include <stdio.h>

#include <jpeglib.h>

#include <csetjmp>
#include <cstdlib>

#include "usamkit/error.hpp"

namespace usamkit {

namespace {

struct JpegErrorJump {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

void error_exit_longjmp(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorJump*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

struct MemBuf {
  unsigned char* data = nullptr;
  unsigned long size = 0;
  ~MemBuf() {
    if (data) std::free(data);
  }
};

void encode(const ImageU8& img, int quality, MemBuf& out) {
  jpeg_compress_struct cinfo;
  JpegErrorJump err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = error_exit_longjmp;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    fail("jpeg_roundtrip: encoder error");
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &out.data, &out.size);
  cinfo.image_width = JDIMENSION(img.width);
  cinfo.image_height = JDIMENSION(img.height);
  cinfo.input_components = img.channels;
  cinfo.in_color_space = img.channels == 3 ? JCS_RGB : JCS_GRAYSCALE;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const size_t stride = size_t(img.width) * img.channels;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row =
        const_cast<uint8_t*>(img.data.data() + cinfo.next_scanline * stride);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
}

void decode(const MemBuf& in, ImageU8& out) {
  jpeg_decompress_struct cinfo;
  JpegErrorJump err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = error_exit_longjmp;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    fail("jpeg_roundtrip: decoder error");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, in.data, in.size);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = out.channels == 3 ? JCS_RGB : JCS_GRAYSCALE;
  jpeg_start_decompress(&cinfo);
  if (int(cinfo.output_width) != out.width ||
      int(cinfo.output_height) != out.height ||
      cinfo.output_components != out.channels) {
    jpeg_destroy_decompress(&cinfo);
    fail("jpeg_roundtrip: decoded shape differs from input");
  }
  const size_t stride = size_t(out.width) * out.channels;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.data.data() + cinfo.output_scanline * stride;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
}

}  // namespace

ImageU8 jpeg_roundtrip(const ImageU8& img, int quality) {
  if (quality < 1 || quality > 100)
    fail("jpeg_roundtrip: quality outside [1,100]");
  if (img.height <= 0 || img.width <= 0 ||
      (img.channels != 1 && img.channels != 3))
    fail("jpeg_roundtrip: unsupported image shape");

  MemBuf encoded;
  encode(img, quality, encoded);
  ImageU8 out(img.height, img.width, img.channels);
  decode(encoded, out);
  out.scene_ref = img.scene_ref;
  out.flipped = img.flipped;
  return out;
}

}  // namespace usamkit
