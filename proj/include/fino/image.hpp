// Images in [0, 1] and their file formats: binary PGM (P5) / PPM (P6) with
// maxval 255, and the raw tensor dump for lossless float storage.
#ifndef FINO_IMAGE_HPP
#define FINO_IMAGE_HPP

#include "fino/tensor.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace fino {

/// C x H x W pixels, row-major per channel. Clean images lie in [0, 1];
/// noisy ones may leave that range and are never clipped in memory.
struct Image {
    Index channels = 0;
    Index height = 0;
    Index width = 0;
    Eigen::ArrayXd pixels;

    Image() = default;
    Image(Index c, Index h, Index w) : channels(c), height(h), width(w), pixels(Eigen::ArrayXd::Zero(c * h * w)) {}

    Index size() const { return pixels.size(); }
    Index plane() const { return height * width; }
    double& at(Index c, Index y, Index x) { return pixels[(c * height + y) * width + x]; }
    double at(Index c, Index y, Index x) const { return pixels[(c * height + y) * width + x]; }
    bool same_shape(const Image& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    /// 1 x C x H x W leaf tensor.
    template <typename Scalar>
    Tensor<Scalar> to_tensor() const {
        return Tensor<Scalar>({1, channels, height, width}, pixels.cast<Scalar>());
    }

    /// Item `index` of an N x C x H x W tensor.
    template <typename Scalar>
    static Image from_tensor(const Tensor<Scalar>& t, Index index = 0) {
        if (t.rank() != 4 || index < 0 || index >= t.dim(0)) {
            throw std::invalid_argument("Image::from_tensor: need item " + std::to_string(index) +
                                        " of an N x C x H x W tensor, got " + to_string(t.shape()));
        }
        Image img(t.dim(1), t.dim(2), t.dim(3));
        img.pixels = t.value().segment(index * img.size(), img.size()).template cast<double>();
        return img;
    }
};

/// Stacks equally shaped images into an N x C x H x W tensor.
template <typename Scalar>
Tensor<Scalar> stack_images(const std::vector<Image>& images) {
    if (images.empty()) {
        throw std::invalid_argument("stack_images: empty list");
    }
    const Image& first = images.front();
    Array<Scalar> values(static_cast<Index>(images.size()) * first.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (!images[i].same_shape(first)) {
            throw std::invalid_argument("stack_images: image " + std::to_string(i) + " differs in shape");
        }
        values.segment(static_cast<Index>(i) * first.size(), first.size()) = images[i].pixels.cast<Scalar>();
    }
    return Tensor<Scalar>({static_cast<Index>(images.size()), first.channels, first.height, first.width},
                          std::move(values));
}

/// 8-bit code for a [0, 1] value: round(v * 255) clamped to [0, 255].
unsigned char quantize_8bit(double v);

/// Chooses the decoder from the file's magic bytes (P5, P6 or FNT1).
Image load_image(const std::string& path);

/// Chooses the encoder from the extension: .pgm/.ppm/.pnm are 8-bit (P5 for
/// one channel, P6 for three), .fnt is the lossless float dump.
void save_image(const Image& image, const std::string& path);

Image decode_pnm(const std::string& bytes);
std::string encode_pnm(const Image& image);

}  // namespace fino

#endif  // FINO_IMAGE_HPP
