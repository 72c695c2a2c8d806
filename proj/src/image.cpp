#include "fino/image.hpp"

#include "fino/tensor_io.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fino {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open " + path);
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

bool has_suffix(const std::string& s, const std::string& suffix) {
    if (s.size() < suffix.size()) return false;
    for (std::size_t i = 0; i < suffix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[s.size() - suffix.size() + i])) != suffix[i]) return false;
    }
    return true;
}

// Header tokenizer for PNM: whitespace separated, '#' comments to end of line.
class PnmHeader {
public:
    explicit PnmHeader(const std::string& bytes) : bytes_(bytes) {}

    long next_int(const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
        if (start == pos_ || pos_ - start > 9) {
            throw std::runtime_error(std::string("PNM: expected ") + what + " at byte " + std::to_string(start));
        }
        return std::stol(bytes_.substr(start, pos_ - start));
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_offset() {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            throw std::runtime_error("PNM: missing whitespace before raster at byte " + std::to_string(pos_));
        }
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 2;
};

}  // namespace

unsigned char quantize_8bit(double v) {
    const double code = std::round(v * 255.0);
    if (!(code > 0.0)) return 0;  // also maps NaN to 0
    if (code > 255.0) return 255;
    return static_cast<unsigned char>(code);
}

Image decode_pnm(const std::string& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw std::runtime_error("PNM: unsupported magic at byte 0 (need P5 or P6)");
    }
    const Index channels = bytes[1] == '6' ? 3 : 1;
    PnmHeader header(bytes);
    const long width = header.next_int("width");
    const long height = header.next_int("height");
    const long maxval = header.next_int("maxval");
    if (width <= 0 || height <= 0) {
        throw std::runtime_error("PNM: non-positive image size " + std::to_string(width) + "x" +
                                 std::to_string(height));
    }
    if (maxval != 255) {
        throw std::runtime_error("PNM: maxval " + std::to_string(maxval) + " is not supported (only 255)");
    }
    const std::size_t offset = header.raster_offset();
    const std::size_t expected = static_cast<std::size_t>(channels * width * height);
    if (bytes.size() - offset < expected) {
        throw std::runtime_error("PNM: raster truncated, " + std::to_string(bytes.size() - offset) + " of " +
                                 std::to_string(expected) + " bytes present after byte " + std::to_string(offset));
    }
    Image img(channels, height, width);
    for (Index y = 0; y < height; ++y) {
        for (Index x = 0; x < width; ++x) {
            for (Index c = 0; c < channels; ++c) {
                const auto code = static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>((y * width + x) * channels + c)]);
                img.at(c, y, x) = code / 255.0;
            }
        }
    }
    return img;
}

std::string encode_pnm(const Image& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw std::invalid_argument("PNM output needs 1 or 3 channels, image has " + std::to_string(image.channels));
    }
    std::string out = (image.channels == 3 ? "P6\n" : "P5\n") + std::to_string(image.width) + " " +
                      std::to_string(image.height) + "\n255\n";
    const std::size_t header = out.size();
    out.resize(header + static_cast<std::size_t>(image.size()));
    for (Index y = 0; y < image.height; ++y) {
        for (Index x = 0; x < image.width; ++x) {
            for (Index c = 0; c < image.channels; ++c) {
                out[header + static_cast<std::size_t>((y * image.width + x) * image.channels + c)] =
                    static_cast<char>(quantize_8bit(image.at(c, y, x)));
            }
        }
    }
    return out;
}

Image load_image(const std::string& path) {
    const std::string bytes = read_file(path);
    try {
        if (bytes.compare(0, 4, "FNT1") == 0) {
            std::istringstream is(bytes);
            auto t = read_tensor<double>(is);
            if (t.rank() != 3) {
                throw std::runtime_error("raw image dump must be C x H x W, got " + to_string(t.shape()));
            }
            Image img(t.dim(0), t.dim(1), t.dim(2));
            img.pixels = t.value();
            return img;
        }
        return decode_pnm(bytes);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void save_image(const Image& image, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    if (has_suffix(path, ".fnt")) {
        write_tensor(os, Tensor<double>({image.channels, image.height, image.width}, image.pixels));
    } else if (has_suffix(path, ".pgm") || has_suffix(path, ".ppm") || has_suffix(path, ".pnm")) {
        const std::string bytes = encode_pnm(image);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    } else {
        throw std::invalid_argument(path + ": unsupported image extension (use .pgm, .ppm, .pnm or .fnt)");
    }
    if (!os) {
        throw std::runtime_error("failed writing " + path);
    }
}

}  // namespace fino
