#include "hmdcap/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <png.h>

#include "hmdcap/error.hpp"

namespace hmdcap {

Image::Image(int rows, int cols, int channels, std::uint8_t fill)
    : rows_(rows), cols_(cols), channels_(channels)
{
    if (rows < 0 || cols < 0 || (channels != 1 && channels != 3)) {
        throw std::invalid_argument("Image: invalid dimensions");
    }
    data_.assign(static_cast<std::size_t>(rows) * cols * channels, fill);
}

Image crop(const Image& image, int row0, int col0, int rows, int cols)
{
    if (row0 < 0 || col0 < 0 || row0 + rows > image.rows() || col0 + cols > image.cols()) {
        throw std::out_of_range("crop window outside image");
    }
    Image out(rows, cols, image.channels());
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            for (int ch = 0; ch < image.channels(); ++ch) {
                out.at(r, c, ch) = image.at(row0 + r, col0 + c, ch);
            }
        }
    }
    return out;
}

Image mirror_horizontal(const Image& image)
{
    Image out(image.rows(), image.cols(), image.channels());
    for (int r = 0; r < image.rows(); ++r) {
        for (int c = 0; c < image.cols(); ++c) {
            for (int ch = 0; ch < image.channels(); ++ch) {
                out.at(r, image.cols() - 1 - c, ch) = image.at(r, c, ch);
            }
        }
    }
    return out;
}

namespace {

// Overlap weights of each destination cell with source cells along one axis.
struct AxisWeights {
    std::vector<int> first;
    std::vector<std::vector<double>> weights;
};

AxisWeights area_weights(int src, int dst)
{
    AxisWeights w;
    w.first.resize(dst);
    w.weights.resize(dst);
    const double ratio = static_cast<double>(src) / dst;
    for (int d = 0; d < dst; ++d) {
        const double lo = d * ratio;
        const double hi = (d + 1) * ratio;
        const int s0 = static_cast<int>(std::floor(lo));
        const int s1 = std::min(src, static_cast<int>(std::ceil(hi)));
        w.first[d] = s0;
        for (int s = s0; s < s1; ++s) {
            const double overlap = std::min<double>(hi, s + 1) - std::max<double>(lo, s);
            w.weights[d].push_back(overlap / ratio);
        }
    }
    return w;
}

} // namespace

Image resize_area(const Image& image, int rows, int cols)
{
    if (rows <= 0 || cols <= 0) {
        throw std::invalid_argument("resize_area: empty target");
    }
    const AxisWeights wr = area_weights(image.rows(), rows);
    const AxisWeights wc = area_weights(image.cols(), cols);
    Image out(rows, cols, image.channels());
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            for (int ch = 0; ch < image.channels(); ++ch) {
                double acc = 0.0;
                for (std::size_t i = 0; i < wr.weights[r].size(); ++i) {
                    for (std::size_t j = 0; j < wc.weights[c].size(); ++j) {
                        acc += wr.weights[r][i] * wc.weights[c][j] *
                               image.at(wr.first[r] + static_cast<int>(i), wc.first[c] + static_cast<int>(j), ch);
                    }
                }
                out.at(r, c, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
            }
        }
    }
    return out;
}

Image to_grayscale(const Image& image)
{
    if (image.channels() == 1) {
        return image;
    }
    Image out(image.rows(), image.cols(), 1);
    for (int r = 0; r < image.rows(); ++r) {
        for (int c = 0; c < image.cols(); ++c) {
            const double y = 0.299 * image.at(r, c, 0) + 0.587 * image.at(r, c, 1) + 0.114 * image.at(r, c, 2);
            out.at(r, c) = static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
        }
    }
    return out;
}

void write_pnm(const Image& image, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path.string());
    }
    out << (image.channels() == 1 ? "P5" : "P6") << '\n' << image.cols() << ' ' << image.rows() << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.data().data()), static_cast<std::streamsize>(image.data().size()));
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

namespace {

std::string next_token(std::istream& in)
{
    std::string token;
    while (in) {
        const int ch = in.peek();
        if (ch == '#') {
            std::string comment;
            std::getline(in, comment);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            break;
        }
    }
    in >> token;
    return token;
}

} // namespace

Image read_pnm(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open: " + path.string());
    }
    const std::string magic = next_token(in);
    if (magic != "P5" && magic != "P6") {
        throw DataError("not a binary PGM/PPM: " + path.string());
    }
    const int cols = std::stoi(next_token(in));
    const int rows = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (maxval != 255) {
        throw DataError("only 8-bit PNM supported: " + path.string());
    }
    in.get(); // single whitespace after maxval
    Image image(rows, cols, magic == "P5" ? 1 : 3);
    in.read(reinterpret_cast<char*>(image.data().data()), static_cast<std::streamsize>(image.data().size()));
    if (!in) {
        throw DataError("truncated PNM: " + path.string());
    }
    return image;
}

void write_png(const Image& image, const std::filesystem::path& path)
{
    std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!file) {
        throw DataError("cannot open for writing: " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("PNG encode failed: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, image.cols(), image.rows(), 8,
                 image.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(image.cols()) * image.channels();
    for (int r = 0; r < image.rows(); ++r) {
        png_write_row(png, const_cast<png_bytep>(image.data().data() + r * stride));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path)
{
    std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!file) {
        throw DataError("cannot open: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("libpng initialisation failed");
    }
    Image image;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("PNG decode failed: " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) != 8 || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("unsupported PNG layout: " + path.string());
    }
    image = Image(static_cast<int>(png_get_image_height(png, info)), static_cast<int>(png_get_image_width(png, info)),
                  color == PNG_COLOR_TYPE_GRAY ? 1 : 3);
    const std::size_t stride = static_cast<std::size_t>(image.cols()) * image.channels();
    for (int r = 0; r < image.rows(); ++r) {
        png_read_row(png, image.data().data() + r * stride, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void write_image(const Image& image, const std::filesystem::path& path)
{
    if (path.extension() == ".png") {
        write_png(image, path);
    } else {
        write_pnm(image, path);
    }
}

Image read_image(const std::filesystem::path& path)
{
    return path.extension() == ".png" ? read_png(path) : read_pnm(path);
}

} // namespace hmdcap
