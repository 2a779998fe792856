#include "aesfa/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include <jpeglib.h>
#include <png.h>

namespace aesfa {

namespace {

Tensor<float> interleaved_to_tensor(const std::vector<unsigned char>& rgb, int H, int W) {
    Tensor<float> t(Shape{1, 3, H, W});
    const int64_t hw = static_cast<int64_t>(H) * W;
    for (int64_t i = 0; i < hw; ++i) {
        t.data[static_cast<size_t>(i)] = rgb[static_cast<size_t>(3 * i)] / 255.0f;
        t.data[static_cast<size_t>(hw + i)] = rgb[static_cast<size_t>(3 * i + 1)] / 255.0f;
        t.data[static_cast<size_t>(2 * hw + i)] = rgb[static_cast<size_t>(3 * i + 2)] / 255.0f;
    }
    return t;
}

Tensor<float> decode_png(const std::string& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw IoError("cannot decode PNG '" + path + "': " + img.message);
    img.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw IoError("cannot decode PNG '" + path + "': " + msg);
    }
    return interleaved_to_tensor(buf, static_cast<int>(img.height), static_cast<int>(img.width));
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

Tensor<float> decode_jpeg(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open image: " + path);

    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        std::fclose(fp);
        throw IoError("cannot decode JPEG '" + path + "': " + jerr.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const int W = static_cast<int>(cinfo.output_width);
    const int H = static_cast<int>(cinfo.output_height);
    std::vector<unsigned char> buf(static_cast<size_t>(3) * W * H);
    while (cinfo.output_scanline < cinfo.output_height) {
        unsigned char* row = buf.data() + static_cast<size_t>(3) * W * cinfo.output_scanline;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    std::fclose(fp);
    return interleaved_to_tensor(buf, H, W);
}

}  // namespace

Tensor<float> load_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open image: " + path);
    unsigned char magic[4] = {0, 0, 0, 0};
    probe.read(reinterpret_cast<char*>(magic), sizeof(magic));
    probe.close();
    static const unsigned char png_magic[4] = {0x89, 'P', 'N', 'G'};
    if (std::memcmp(magic, png_magic, 4) == 0) return decode_png(path);
    if (magic[0] == 0xff && magic[1] == 0xd8) return decode_jpeg(path);
    throw IoError("unsupported image format (expected PNG or JPEG): " + path);
}

void save_png(const std::string& path, const Tensor<float>& image) {
    Shape s = image.shape;
    if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
    if (s.size() != 3 || s[0] != 3) throw InvalidArgument("save_png: expected [1,3,H,W] or [3,H,W] image");
    const int H = s[1], W = s[2];
    const int64_t hw = static_cast<int64_t>(H) * W;
    std::vector<unsigned char> buf(static_cast<size_t>(3) * hw);
    for (int64_t i = 0; i < hw; ++i)
        for (int c = 0; c < 3; ++c) {
            float v = image.data[static_cast<size_t>(c * hw + i)];
            v = std::min(1.0f, std::max(0.0f, v));
            buf[static_cast<size_t>(3 * i + c)] = static_cast<unsigned char>(std::lround(v * 255.0f));
        }

    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(W);
    img.height = static_cast<png_uint_32>(H);
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
        throw IoError("cannot write PNG '" + path + "': " + img.message);
}

}  // namespace aesfa
