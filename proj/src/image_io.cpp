#include "hsc/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <png.h>

#include "hsc/errors.hpp"

namespace hsc {

namespace {

std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext;
}

// ---- PNM (P2/P3/P5/P6) ----

int pnm_next_int(std::istream& is, const std::string& path) {
    int c;
    for (;;) {
        c = is.peek();
        if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(c)) {
            is.get();
        } else {
            break;
        }
    }
    int v;
    if (!(is >> v)) throw format_error(path + ": malformed PNM header");
    return v;
}

Image read_pnm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error(path + ": cannot open");
    char p, kind;
    is.get(p);
    is.get(kind);
    if (p != 'P' || (kind != '2' && kind != '3' && kind != '5' && kind != '6'))
        throw format_error(path + ": not a supported PNM type");
    const bool color = (kind == '3' || kind == '6');
    const bool binary = (kind == '5' || kind == '6');
    const int w = pnm_next_int(is, path);
    const int h = pnm_next_int(is, path);
    const int maxval = pnm_next_int(is, path);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
        throw format_error(path + ": bad PNM dimensions");

    Image img;
    img.channels = color ? 3 : 1;
    img.height = h;
    img.width = w;
    img.pixels.resize(static_cast<size_t>(img.channels) * h * w);
    const float inv = 1.0f / static_cast<float>(maxval);
    const size_t count = static_cast<size_t>(img.channels) * h * w;

    if (binary) {
        is.get(); // single whitespace after maxval
        const int bytes = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> raw(count * bytes);
        if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
            throw format_error(path + ": truncated PNM payload");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < img.channels; ++c) {
                    const size_t i = ((static_cast<size_t>(y) * w) + x) * img.channels + c;
                    const int v = bytes == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];
                    img.at(c, y, x) = static_cast<float>(v) * inv;
                }
    } else {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < img.channels; ++c)
                    img.at(c, y, x) = static_cast<float>(pnm_next_int(is, path)) * inv;
    }
    return img;
}

void write_pnm(const std::string& path, const Image& img, bool color) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw format_error(path + ": cannot open for writing");
    os << (color ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < (color ? 3 : 1); ++c) {
                const float v = std::clamp(img.at(std::min(c, img.channels - 1), y, x), 0.0f, 1.0f);
                os.put(static_cast<char>(std::lround(v * 255.0f)));
            }
    if (!os) throw format_error(path + ": write failed");
}

// ---- PNG ----

struct PngReadCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

Image read_png(const std::string& path) {
    PngReadCloser ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    if (!ctx.fp) throw format_error(path + ": cannot open");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, ctx.fp) != 8 || png_sig_cmp(sig, 0, 8))
        throw format_error(path + ": not a PNG file");
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw format_error(path + ": libpng init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw format_error(path + ": libpng init failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw format_error(path + ": PNG decode error");
    png_init_io(ctx.png, ctx.fp);
    png_set_sig_bytes(ctx.png, 8);
    png_read_info(ctx.png, ctx.info);

    const png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
    const png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
    const int color_type = png_get_color_type(ctx.png, ctx.info);
    const int bit_depth = png_get_bit_depth(ctx.png, ctx.info);

    if (bit_depth == 16) png_set_strip_16(ctx.png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
    if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
    png_set_strip_alpha(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    const int channels = png_get_channels(ctx.png, ctx.info);
    if (channels != 1 && channels != 3)
        throw format_error(path + ": unsupported PNG channel count " + std::to_string(channels));

    std::vector<unsigned char> row(static_cast<size_t>(w) * channels);
    Image img;
    img.channels = channels;
    img.height = static_cast<int>(h);
    img.width = static_cast<int>(w);
    img.pixels.resize(static_cast<size_t>(channels) * h * w);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(ctx.png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, static_cast<int>(y), static_cast<int>(x)) =
                    static_cast<float>(row[x * channels + c]) / 255.0f;
    }
    png_read_end(ctx.png, nullptr);
    return img;
}

struct PngWriteCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngWriteCloser() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

void write_png(const std::string& path, const Image& img) {
    PngWriteCloser ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw format_error(path + ": cannot open for writing");
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw format_error(path + ": libpng init failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw format_error(path + ": PNG encode error");
    png_init_io(ctx.png, ctx.fp);
    const int channels = img.channels >= 3 ? 3 : 1;
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<unsigned char> row(static_cast<size_t>(img.width) * channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < channels; ++c) {
                const float v = std::clamp(img.at(std::min(c, img.channels - 1), y, x), 0.0f, 1.0f);
                row[static_cast<size_t>(x) * channels + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        png_write_row(ctx.png, row.data());
    }
    png_write_end(ctx.png, nullptr);
}

} // namespace

Image read_image(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == "png") return read_png(path);
    if (ext == "ppm" || ext == "pgm" || ext == "pnm") return read_pnm(path);
    // Fall back to content sniffing.
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error(path + ": cannot open");
    char head[2] = {0, 0};
    is.read(head, 2);
    is.close();
    if (head[0] == 'P') return read_pnm(path);
    if (static_cast<unsigned char>(head[0]) == 0x89 && head[1] == 'P') return read_png(path);
    throw format_error(path + ": unrecognized image format");
}

void write_image(const std::string& path, const Image& img) {
    const std::string ext = lower_ext(path);
    if (ext == "png")
        write_png(path, img);
    else if (ext == "ppm")
        write_pnm(path, img, true);
    else if (ext == "pgm")
        write_pnm(path, img, false);
    else
        throw param_error(path + ": unsupported output extension (use .png/.ppm/.pgm)");
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw param_error("resize_bilinear: target dims must be >= 1");
    Image out;
    out.channels = img.channels;
    out.height = out_h;
    out.width = out_w;
    out.pixels.resize(static_cast<size_t>(img.channels) * out_h * out_w);
    const float sy = static_cast<float>(img.height) / out_h;
    const float sx = static_cast<float>(img.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const float fy = (y + 0.5f) * sy - 0.5f;
        const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const float wy = std::clamp(fy - y0, 0.0f, 1.0f);
        for (int x = 0; x < out_w; ++x) {
            const float fx = (x + 0.5f) * sx - 0.5f;
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const float wx = std::clamp(fx - x0, 0.0f, 1.0f);
            for (int c = 0; c < img.channels; ++c) {
                const float top = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
                const float bot = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
                out.at(c, y, x) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

Image convert_channels(const Image& img, int target_channels) {
    if (target_channels == img.channels) return img;
    Image out;
    out.channels = target_channels;
    out.height = img.height;
    out.width = img.width;
    out.pixels.resize(static_cast<size_t>(target_channels) * img.height * img.width);
    if (img.channels == 3 && target_channels == 1) {
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out.at(0, y, x) = 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) +
                                  0.114f * img.at(2, y, x);
    } else if (img.channels == 1 && target_channels == 3) {
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(0, y, x);
    } else {
        throw param_error("convert_channels: unsupported conversion " +
                          std::to_string(img.channels) + " -> " +
                          std::to_string(target_channels));
    }
    return out;
}

bool has_image_extension(const std::string& path) {
    const std::string ext = lower_ext(path);
    return ext == "png" || ext == "ppm" || ext == "pgm" || ext == "pnm";
}

} // namespace hsc
