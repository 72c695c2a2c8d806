#include "fino/image.hpp"

#include "fino/toy_data.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace fino;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "fino_image_test";
    std::filesystem::create_directories(dir);
    return dir;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream os(p, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(ImageTest, QuantizationLaw) {
    EXPECT_EQ(quantize_8bit(128.0 / 255.0), 128);
    EXPECT_EQ(quantize_8bit(-0.3), 0);
    EXPECT_EQ(quantize_8bit(1.7), 255);
    EXPECT_EQ(quantize_8bit(0.5), 128);
    EXPECT_EQ(quantize_8bit(std::nan("")), 0);
}

TEST(ImageTest, DecodesEightBitCodes) {
    auto img = decode_pnm(std::string("P5\n# comment\n2 1\n255\n") + char(128) + char(255));
    ASSERT_EQ(img.channels, 1);
    EXPECT_NEAR(img.at(0, 0, 0), 0.50196, 1e-5);
    EXPECT_EQ(img.at(0, 0, 0), 128.0 / 255.0);
    EXPECT_EQ(img.at(0, 0, 1), 1.0);
}

TEST(ImageTest, PpmIsInterleaved) {
    auto img = decode_pnm(std::string("P6 1 1 255\n") + char(10) + char(20) + char(30));
    ASSERT_EQ(img.channels, 3);
    EXPECT_EQ(img.at(0, 0, 0), 10 / 255.0);
    EXPECT_EQ(img.at(1, 0, 0), 20 / 255.0);
    EXPECT_EQ(img.at(2, 0, 0), 30 / 255.0);
}

TEST(ImageTest, RejectsUnsupportedPnm) {
    EXPECT_THROW(decode_pnm("P6\n1 1\n65535\n\x01\x02\x03\x04\x05\x06"), std::runtime_error);
    EXPECT_THROW(decode_pnm("P6\n1 1\n15\n\x01\x02\x03"), std::runtime_error);
    EXPECT_THROW(decode_pnm("P3\n1 1\n255\n1 2 3"), std::runtime_error);
    EXPECT_THROW(decode_pnm("P5\n2 2\n255\n\x01"), std::runtime_error);
    try {
        decode_pnm("P5\n2 2\n255\n\x01");
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
    }
}

TEST(ImageTest, PnmRoundTripFollowsQuantization) {
    auto images = make_toy_dataset(2, 16, 3, 3);
    Image img = images[0];
    img.pixels += 0.3;  // leave [0, 1] to exercise the clamp
    auto path = temp_dir() / "rt.ppm";
    save_image(img, path.string());
    auto back = load_image(path.string());
    ASSERT_TRUE(back.same_shape(img));
    for (Index i = 0; i < img.size(); ++i) {
        EXPECT_EQ(back.pixels[i], quantize_8bit(img.pixels[i]) / 255.0);
    }
    // a second pass is lossless
    save_image(back, path.string());
    EXPECT_TRUE((load_image(path.string()).pixels == back.pixels).all());
}

TEST(ImageTest, RawFloatRoundTripIsBitExact) {
    Image img(2, 3, 5);
    for (Index i = 0; i < img.size(); ++i) img.pixels[i] = std::sin(0.37 * i) * 1.5;
    auto path = temp_dir() / "rt.fnt";
    save_image(img, path.string());
    auto back = load_image(path.string());
    ASSERT_TRUE(back.same_shape(img));
    EXPECT_TRUE((back.pixels == img.pixels).all());
}

TEST(ImageTest, FileErrorsCarryThePath) {
    auto path = temp_dir() / "bad.pgm";
    write_bytes(path, "P5\n4 4\n1023\n");
    try {
        load_image(path.string());
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("bad.pgm"), std::string::npos);
    }
    EXPECT_THROW(load_image((temp_dir() / "missing.pgm").string()), std::runtime_error);
    EXPECT_THROW(save_image(Image(1, 2, 2), (temp_dir() / "x.png").string()), std::invalid_argument);
    EXPECT_THROW(save_image(Image(2, 2, 2), (temp_dir() / "x.pgm").string()), std::invalid_argument);
}

TEST(ImageTest, TensorConversion) {
    Image a(1, 2, 2), b(1, 2, 2);
    a.pixels << 1, 2, 3, 4;
    b.pixels << 5, 6, 7, 8;
    auto t = stack_images<double>({a, b});
    EXPECT_EQ(t.shape(), (Shape{2, 1, 2, 2}));
    EXPECT_TRUE((Image::from_tensor(t, 1).pixels == b.pixels).all());
    EXPECT_THROW(Image::from_tensor(t, 2), std::invalid_argument);
    EXPECT_THROW(stack_images<double>({a, Image(1, 2, 3)}), std::invalid_argument);
}

TEST(ToyDataTest, ValuesInRangeAndDeterministic) {
    auto a = make_toy_dataset(6, 32, 9);
    auto b = make_toy_dataset(6, 32, 9);
    auto c = make_toy_dataset(6, 32, 10);
    ASSERT_EQ(a.size(), 6u);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].channels, 1);
        EXPECT_GE(a[i].pixels.minCoeff(), 0.0);
        EXPECT_LE(a[i].pixels.maxCoeff(), 1.0);
        EXPECT_TRUE((a[i].pixels == b[i].pixels).all());
        differs = differs || (a[i].pixels != c[i].pixels).any();
    }
    EXPECT_TRUE(differs);
}

TEST(ToyDataTest, ImagesHaveStructure) {
    for (const auto& img : make_toy_dataset(4, 32, 1, 3)) {
        EXPECT_EQ(img.channels, 3);
        EXPECT_GT(img.pixels.maxCoeff() - img.pixels.minCoeff(), 0.1);
    }
}
