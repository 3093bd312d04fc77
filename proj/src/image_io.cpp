#include "mpcattack/image_io.hpp"

#include <algorithm>
#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

#include <jpeglib.h>
#include <png.h>

namespace mpcattack {

namespace fs = std::filesystem;

std::uint8_t quantize_value(double v) {
  const double scaled = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::floor(scaled + 0.5));
}

std::vector<std::uint8_t> quantize(const ImageTensor& img) {
  std::vector<std::uint8_t> out;
  out.reserve(img.values().size());
  for (double v : img.values()) out.push_back(quantize_value(v));
  return out;
}

ImageTensor dequantize(int height, int width, std::span<const std::uint8_t> rgb) {
  std::vector<double> data(rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) data[i] = rgb[i] / 255.0;
  return ImageTensor(Shape{height, width, kImageChannels}, std::move(data));
}

namespace {

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open image " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ImageTensor decode_png(const std::vector<unsigned char>& bytes, const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw ValidationError("invalid PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw ValidationError("failed to decode PNG " + path.string() + ": " + msg);
  }
  return dequantize(static_cast<int>(image.height), static_cast<int>(image.width), rgb);
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// The setjmp frame holds no C++ objects; outputs live in the caller.
bool decode_jpeg_into(const std::vector<unsigned char>& bytes, std::vector<std::uint8_t>& rgb,
                      int& height, int& width, JpegError& err) {
  jpeg_decompress_struct cinfo{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  height = static_cast<int>(cinfo.output_height);
  width = static_cast<int>(cinfo.output_width);
  rgb.resize(static_cast<std::size_t>(height) * width * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

ImageTensor decode_jpeg(const std::vector<unsigned char>& bytes, const fs::path& path) {
  std::vector<std::uint8_t> rgb;
  int height = 0, width = 0;
  JpegError err{};
  if (!decode_jpeg_into(bytes, rgb, height, width, err)) {
    throw ValidationError("failed to decode JPEG " + path.string() + ": " + err.message);
  }
  return dequantize(height, width, rgb);
}

}  // namespace

ImageTensor read_image(const fs::path& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  static constexpr unsigned char kPngSig[] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::equal(std::begin(kPngSig), std::end(kPngSig), bytes.begin())) {
    return decode_png(bytes, path);
  }
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return decode_jpeg(bytes, path);
  }
  throw ValidationError("unsupported image format (PNG or JPEG expected): " + path.string());
}

std::vector<std::uint8_t> encode_png(const ImageTensor& img) {
  const std::vector<std::uint8_t> rgb = quantize(img);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, rgb.data(), 0, nullptr)) {
    throw Error(std::string("PNG size query failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, rgb.data(), 0, nullptr)) {
    throw Error(std::string("PNG encoding failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

void write_png(const ImageTensor& img, const fs::path& path) {
  const std::vector<std::uint8_t> bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace mpcattack
