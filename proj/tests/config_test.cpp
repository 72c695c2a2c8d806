#include "fino/config.hpp"

#include <gtest/gtest.h>

using namespace fino;

TEST(KeyValuesTest, ParsesCommentsAndWhitespace) {
    auto kv = KeyValues::parse("# header\n steps = 10 \n\nsigma=25 # trailing\n");
    EXPECT_EQ(kv.get("steps"), "10");
    EXPECT_EQ(kv.get("sigma"), "25");
    EXPECT_EQ(kv.get_or("missing", "x"), "x");
    EXPECT_THROW(kv.get("missing"), std::runtime_error);
}

TEST(KeyValuesTest, RejectsMalformedLines) {
    EXPECT_THROW(KeyValues::parse("novalue\n"), std::runtime_error);
    EXPECT_THROW(KeyValues::parse("=3\n"), std::runtime_error);
    try {
        KeyValues::parse("a=1\na=2\n", "cfg.txt");
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("cfg.txt:2"), std::string::npos) << e.what();
    }
}

TEST(KeyValuesTest, TracksUnusedKeys) {
    auto kv = KeyValues::parse("a=1\nb=2\n");
    kv.get("a");
    EXPECT_EQ(kv.unused_keys(), std::vector<std::string>{"b"});
}

TEST(ParseTest, Scalars) {
    EXPECT_EQ(parse_double("2.5", "x"), 2.5);
    EXPECT_EQ(parse_int("-3", "x"), -3);
    EXPECT_EQ(parse_u64("18446744073709551615", "x"), UINT64_MAX);
    EXPECT_TRUE(parse_bool("yes", "x"));
    EXPECT_FALSE(parse_bool("false", "x"));
    EXPECT_EQ(parse_range("0, 55", "x"), std::make_pair(0.0, 55.0));
    EXPECT_THROW(parse_double("2.5x", "x"), std::runtime_error);
    EXPECT_THROW(parse_int("1.5", "x"), std::runtime_error);
    EXPECT_THROW(parse_bool("maybe", "x"), std::runtime_error);
    EXPECT_THROW(parse_range("5", "x"), std::runtime_error);
}

TEST(TrainConfigTest, DefaultsAreDeskScale) {
    TrainConfig c;
    EXPECT_EQ(c.flow.num_blocks, 2);
    EXPECT_EQ(c.flow.layers_per_block, 4);
    EXPECT_EQ(c.lr, 4e-4);
    EXPECT_EQ(c.weights.alpha, 1.0);
    EXPECT_EQ(c.weights.beta, 1.0);
    EXPECT_EQ(c.weights.gamma, 0.1);
    EXPECT_EQ(c.steps, 2000);
    EXPECT_EQ(c.patch_size % c.flow.spatial_multiple(), 0);
    EXPECT_NO_THROW(c.validate());
}

TEST(TrainConfigTest, NoiseLevelsUseEightBitScale) {
    auto c = TrainConfig::from_key_values(KeyValues::parse("sigma=50\nmode=blind\nsigma_range=5,55\n"));
    EXPECT_DOUBLE_EQ(c.sigma, 50.0 / 255.0);
    EXPECT_DOUBLE_EQ(c.sigma_low, 5.0 / 255.0);
    EXPECT_DOUBLE_EQ(c.sigma_high, 55.0 / 255.0);
    EXPECT_EQ(c.mode, NoiseMode::blind);
}

TEST(TrainConfigTest, RealModeDropsNoiseTerm) {
    auto c = TrainConfig::from_key_values(KeyValues::parse("mode=real\n"));
    EXPECT_FALSE(c.weights.use_noise);
    EXPECT_TRUE(c.weights.use_rec);
}

TEST(TrainConfigTest, RejectsUnknownKeysAndBadValues) {
    try {
        TrainConfig::from_key_values(KeyValues::parse("steps=5\nstesp=6\n"));
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("stesp"), std::string::npos);
    }
    EXPECT_THROW(TrainConfig::from_key_values(KeyValues::parse("patch_size=30\n")), std::invalid_argument);
    EXPECT_THROW(TrainConfig::from_key_values(KeyValues::parse("mode=odd\n")), std::runtime_error);
    EXPECT_THROW(TrainConfig::from_key_values(KeyValues::parse("gamma=-1\n")), std::invalid_argument);
    EXPECT_THROW(TrainConfig::from_key_values(KeyValues::parse("dtype=f16\n")), std::runtime_error);
}

TEST(TrainConfigTest, KeyValueRoundTrip) {
    auto c = TrainConfig::from_key_values(
        KeyValues::parse("steps=123\nsigma=15\nlayers=3\nuse_cnt=false\nseed=99\nlr=1e-3\ndtype=f32\n"));
    auto back = TrainConfig::from_key_values(c.to_key_values());
    EXPECT_EQ(back.steps, 123);
    EXPECT_EQ(back.sigma, c.sigma);
    EXPECT_EQ(back.flow.layers_per_block, 3);
    EXPECT_FALSE(back.weights.use_cnt);
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.lr, 1e-3);
    EXPECT_TRUE(back.use_f32);
}
