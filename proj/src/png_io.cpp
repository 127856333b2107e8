#include <csetjmp>
#include <cstdio>
#include <memory>

#include <png.h>

#include "nightseg/dataset.hpp"

namespace nightseg {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_warning_sink(png_structp, png_const_charp) {}

// libpng reports errors via longjmp to png_jmpbuf; every object that needs
// destruction is created before setjmp.

} // namespace

ImageU8 read_png(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) raise(ErrorCode::IoError, "cannot open " + path);

    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_sink);
    if (!png) raise(ErrorCode::IoError, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        raise(ErrorCode::IoError, "png_create_info_struct failed");
    }

    ImageU8 img;
    std::vector<png_bytep> rows;
    volatile bool bad_channels = false;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        raise(ErrorCode::FormatError, path + ": libpng failed to decode");
    }

    png_init_io(png, file.get());
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        bad_channels = true;
    } else {
        img = ImageU8(static_cast<int>(height), static_cast<int>(width), channels);
        rows.resize(height);
        const std::size_t stride = static_cast<std::size_t>(width) * channels;
        for (png_uint_32 y = 0; y < height; ++y)
            rows[y] = reinterpret_cast<png_bytep>(img.data.data() + y * stride);
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    }

    png_destroy_read_struct(&png, &info, nullptr);
    if (bad_channels)
        raise(ErrorCode::FormatError, path + ": unsupported channel count after decode");
    return img;
}

void write_png(const std::string& path, const ImageU8& img) {
    if (img.channels != 1 && img.channels != 3)
        raise(ErrorCode::InvalidArgument, "write_png supports 1 or 3 channels");
    if (img.height <= 0 || img.width <= 0)
        raise(ErrorCode::InvalidArgument, "write_png needs a nonempty image");

    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) raise(ErrorCode::IoError, "cannot write " + path);

    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_sink);
    if (!png) raise(ErrorCode::IoError, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        raise(ErrorCode::IoError, "png_create_info_struct failed");
    }

    std::vector<png_bytep> rows(img.height);
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(
            reinterpret_cast<png_const_bytep>(img.data.data() + y * stride));

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        raise(ErrorCode::IoError, path + ": libpng failed to encode");
    }

    png_init_io(png, file.get());
    const int color_type = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace nightseg
