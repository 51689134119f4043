#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace hmdcap {

/// 8-bit raster, row-major, origin top-left, channels interleaved.
/// Pixel (row, col) has its centre at image-plane coordinates (x = col, y = row).
class Image {
public:
    Image() = default;
    Image(int rows, int cols, int channels = 1, std::uint8_t fill = 0);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int channels() const { return channels_; }
    bool empty() const { return data_.empty(); }

    std::uint8_t& at(int row, int col, int ch = 0) { return data_[index(row, col, ch)]; }
    std::uint8_t at(int row, int col, int ch = 0) const { return data_[index(row, col, ch)]; }

    std::span<std::uint8_t> data() { return data_; }
    std::span<const std::uint8_t> data() const { return data_; }

    bool operator==(const Image&) const = default;

private:
    std::size_t index(int row, int col, int ch) const
    {
        return (static_cast<std::size_t>(row) * cols_ + col) * channels_ + ch;
    }

    int rows_ = 0;
    int cols_ = 0;
    int channels_ = 1;
    std::vector<std::uint8_t> data_;
};

/// Copies the window [row0, row0+rows) x [col0, col0+cols); the window must lie inside the image.
Image crop(const Image& image, int row0, int col0, int rows, int cols);

/// Left-right mirror.
Image mirror_horizontal(const Image& image);

/// Area-averaging resample to rows x cols (exact fractional pixel coverage).
Image resize_area(const Image& image, int rows, int cols);

/// ITU-R 601 luma of an RGB image; grayscale input is returned unchanged.
Image to_grayscale(const Image& image);

/// Binary PGM (P5, maxval 255) for 1 channel; binary PPM (P6) for 3 channels.
void write_pnm(const Image& image, const std::filesystem::path& path);
Image read_pnm(const std::filesystem::path& path);

/// 8-bit PNG via libpng (gray or RGB).
void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

/// Dispatches on the extension (.pgm/.ppm or .png).
void write_image(const Image& image, const std::filesystem::path& path);
Image read_image(const std::filesystem::path& path);

} // namespace hmdcap
