#include "fino/trainer.hpp"

#include "fino/audit.hpp"
#include "fino/toy_data.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace fino;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.flow.num_blocks = 1;
    c.flow.layers_per_block = 1;
    c.flow.hidden_width = 4;
    c.patch_size = 8;
    c.batch_size = 2;
    c.steps = 10;
    c.eval_every = 5;
    c.toy_size = 8;
    return c;
}

std::vector<Image> tiny_data(Index n = 4) { return make_toy_dataset(n, 12, 5); }

std::string temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "fino_trainer_test";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

std::string read_all(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

bool same_parameters(const FlowModel<double>& a, const FlowModel<double>& b) {
    auto pa = a.parameters(), pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if ((pa[i].value() != pb[i].value()).any()) return false;
    }
    return true;
}

}  // namespace

TEST(ObjectiveTest, RegressionOnlyFirstLossMatchesWaveletDecode) {
    auto cfg = tiny_config();
    cfg.flow.num_blocks = 2;
    cfg.weights.use_rec = cfg.weights.use_cnt = cfg.weights.use_noise = false;
    Trainer<double> t(cfg, tiny_data());
    const auto batch = t.make_batch(0);
    const auto z_r = t.make_z_r(0);
    const auto f = compute_objective(t.model(), batch, z_r, cfg.weights);

    // identity couplings: the flow is two Haar squeezes
    const auto zy = haar_forward(haar_forward(batch.y));
    const Index clean = cfg.flow.clean_channels();
    const auto decoded = haar_inverse(haar_inverse(channel_concat(channel_slice(zy, 0, clean), z_r)));
    const double expected = (decoded.value() - batch.x.value()).abs().mean();
    EXPECT_NEAR(f.total.item(), expected, 1e-14);
    EXPECT_GT(f.total.item(), 0.0);
    EXPECT_FALSE(f.parts.rec.defined());
    EXPECT_FALSE(f.parts.noise.defined());
}

TEST(ObjectiveTest, NoiseFreeBatchZeroesAlignmentTerms) {
    auto cfg = tiny_config();
    cfg.sigma = 0.0;
    Trainer<double> t(cfg, tiny_data());
    t.model().initialize(InitMode::random, 4);
    const auto batch = t.make_batch(0);
    EXPECT_TRUE((batch.x.value() == batch.y.value()).all());
    const auto f = compute_objective(t.model(), batch, t.make_z_r(0), cfg.weights);
    EXPECT_EQ(f.parts.cnt.item(), 0.0);
    EXPECT_LT(f.parts.rec.item(), 1e-12);
    EXPECT_NEAR(f.total.item(), f.parts.reg.item() + cfg.weights.alpha * f.parts.rec.item() + 0.1 * f.parts.noise.item(),
                1e-15);
}

TEST(ObjectiveTest, EveryParameterReceivesGradient) {
    auto cfg = tiny_config();
    Trainer<double> t(cfg, tiny_data());
    t.model().initialize(InitMode::random, 8);
    auto params = t.model().parameters();
    train_step(t.model(), t.optimizer(), t.make_batch(0), t.make_z_r(0), cfg.weights);
    for (const auto& p : params) {
        ASSERT_TRUE(p.has_grad()) << p.name();
        EXPECT_GT(p.grad().abs().maxCoeff(), 0.0) << p.name();
    }
}

TEST(ObjectiveTest, DisabledNoiseTermHasNoGradientPath) {
    auto cfg = tiny_config();
    Trainer<double> t(cfg, tiny_data());
    t.model().initialize(InitMode::random, 8);
    const auto batch = t.make_batch(0);
    const auto z_r = t.make_z_r(0);
    auto grads_for = [&](const LossWeights& w) {
        t.model().zero_grad();
        backward(compute_objective(t.model(), batch, z_r, w).total);
        std::vector<Array<double>> out;
        for (const auto& p : t.model().parameters()) out.push_back(p.grad());
        return out;
    };
    LossWeights off = cfg.weights;
    off.use_noise = false;
    LossWeights zero = cfg.weights;
    zero.gamma = 0.0;
    const auto a = grads_for(off), b = grads_for(zero);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_LT((a[i] - b[i]).abs().maxCoeff(), 1e-15);
    }
}

TEST(ObjectiveTest, FullObjectiveGradientAudit) {
    GradCheckOptions opt;
    opt.flow.num_blocks = 1;
    opt.flow.layers_per_block = 1;
    opt.flow.hidden_width = 3;
    const auto r = gradcheck_audit(opt);
    EXPECT_LT(r.worst_relative, 1e-5) << r.worst_parameter << "[" << r.worst_index << "]";
    EXPECT_EQ(r.checked, FlowModel<double>(opt.flow).parameter_count());
}

TEST(TrainStepTest, NonFiniteBatchLeavesModelUntouched) {
    auto cfg = tiny_config();
    Trainer<double> t(cfg, tiny_data());
    auto batch = t.make_batch(0);
    batch.y.mutable_value()[0] = std::numeric_limits<double>::infinity();
    const FlowModel<double> before = t.model();
    const auto r = train_step(t.model(), t.optimizer(), batch, t.make_z_r(0), cfg.weights);
    EXPECT_FALSE(r.ok);
    EXPECT_NE(r.diagnostic.find("aborted"), std::string::npos);
    EXPECT_TRUE(same_parameters(before, t.model()));
    EXPECT_EQ(t.optimizer().step_count, 0);
}

TEST(TrainerTest, ZeroStepsReturnsInitialModel) {
    auto cfg = tiny_config();
    cfg.steps = 0;
    auto result = train<double>(tiny_data(), cfg);
    EXPECT_TRUE(result.log.empty());
    Trainer<double> fresh(cfg, tiny_data());
    EXPECT_TRUE(same_parameters(result.model, fresh.model()));
}

TEST(TrainerTest, IdenticalRunsProduceIdenticalLogs) {
    auto cfg = tiny_config();
    const auto hold = make_toy_dataset(2, 8, 77);
    auto a = train<double>(tiny_data(), cfg, hold);
    auto b = train<double>(tiny_data(), cfg, hold);
    ASSERT_EQ(a.log.size(), 10u);
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        auto ra = a.log[i], rb = b.log[i];
        ra.wall_ms = rb.wall_ms = 0.0;
        EXPECT_EQ(to_csv(ra), to_csv(rb));
        EXPECT_EQ(ra.step, static_cast<Index>(i));
    }
    EXPECT_TRUE(a.log[4].eval_psnr.has_value());
    EXPECT_FALSE(a.log[3].eval_psnr.has_value());
    EXPECT_TRUE(same_parameters(a.model, b.model));
}

TEST(TrainerTest, LossesAreFiniteAndLogged) {
    auto cfg = tiny_config();
    auto r = train<double>(tiny_data(), cfg);
    for (const auto& rec : r.log) {
        EXPECT_TRUE(std::isfinite(rec.total_loss));
        EXPECT_TRUE(std::isfinite(rec.l_noise));
    }
    EXPECT_EQ(log_header(), "step,total_loss,l_reg,l_rec,l_cnt,l_noise,eval_psnr,wall_ms");
}

TEST(TrainerTest, BlindModeSigmasCoverRange) {
    auto cfg = tiny_config();
    cfg.mode = NoiseMode::blind;
    cfg.batch_size = 4;
    Trainer<double> t(cfg, tiny_data());
    double lo = 1.0, hi = 0.0;
    for (Index s = 0; s < 500; ++s) {
        for (double v : t.make_batch(s).sigma) {
            ASSERT_GT(v, 0.0);
            ASSERT_LE(v, 55.0 / 255.0);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    EXPECT_LT(lo, 2.0 / 255.0);
    EXPECT_GT(hi, 53.0 / 255.0);
}

TEST(CheckpointTest, RoundTripIsBitExact) {
    auto cfg = tiny_config();
    Trainer<double> t(cfg, tiny_data());
    t.run(3);
    const auto path = temp_path("rt.ckpt");
    t.save(path);
    auto ck = load_checkpoint<double>(path, &cfg.flow);
    EXPECT_EQ(ck.step, 3);
    EXPECT_TRUE(same_parameters(ck.model, t.model()));
    ASSERT_EQ(ck.adam.first_moment.size(), t.optimizer().first_moment.size());
    for (std::size_t i = 0; i < ck.adam.first_moment.size(); ++i) {
        EXPECT_TRUE((ck.adam.first_moment[i] == t.optimizer().first_moment[i]).all());
        EXPECT_TRUE((ck.adam.second_moment[i] == t.optimizer().second_moment[i]).all());
    }
    EXPECT_EQ(ck.adam.step_count, 3);
    // saving the loaded state reproduces the file byte for byte
    const auto again = temp_path("rt2.ckpt");
    save_checkpoint(again, ck.model, ck.adam, ck.step, cfg.to_key_values());
    EXPECT_EQ(read_all(path), read_all(again));
}

TEST(CheckpointTest, ResumeMatchesContinuousRun) {
    auto cfg = tiny_config();
    Trainer<double> continuous(cfg, tiny_data());
    auto full = continuous.run(10);

    Trainer<double> first(cfg, tiny_data());
    auto head = first.run(5);
    const auto path = temp_path("resume.ckpt");
    first.save(path);
    Trainer<double> second(cfg, tiny_data());
    second.resume(path);
    auto tail = second.run(10);

    ASSERT_EQ(head.size() + tail.size(), full.size());
    for (std::size_t i = 0; i < full.size(); ++i) {
        const auto& r = i < head.size() ? head[i] : tail[i - head.size()];
        EXPECT_EQ(r.total_loss, full[i].total_loss) << i;
    }
    EXPECT_TRUE(same_parameters(continuous.model(), second.model()));
}

TEST(CheckpointTest, RejectsMismatchAndCorruption) {
    auto cfg = tiny_config();
    Trainer<double> t(cfg, tiny_data());
    const auto path = temp_path("m.ckpt");
    t.save(path);
    FlowConfig other = cfg.flow;
    other.layers_per_block = 2;
    EXPECT_THROW(load_checkpoint<double>(path, &other), std::runtime_error);
    other = cfg.flow;
    other.num_blocks = 2;
    EXPECT_THROW(load_checkpoint<double>(path, &other), std::runtime_error);

    std::string text = read_all(path);
    auto write = [&](const std::string& name, const std::string& bytes) {
        const auto p = temp_path(name);
        std::ofstream(p, std::ios::binary) << bytes;
        return p;
    };
    std::string versioned = text;
    versioned.replace(versioned.find("format_version=1"), 16, "format_version=9");
    EXPECT_THROW(load_checkpoint<double>(write("v.ckpt", versioned)), std::runtime_error);
    std::string no_end = text.substr(0, text.find("end_manifest"));
    EXPECT_THROW(load_checkpoint<double>(write("e.ckpt", no_end)), std::runtime_error);
    EXPECT_THROW(load_checkpoint<double>(write("t.ckpt", text.substr(0, text.size() - 100))), std::runtime_error);
    EXPECT_THROW(load_checkpoint<double>(write("b.ckpt", "hello\n")), std::runtime_error);
    EXPECT_THROW(load_checkpoint<double>(temp_path("missing.ckpt")), std::runtime_error);
}

TEST(CheckpointTest, FloatModelsLoadIntoDouble) {
    auto cfg = tiny_config();
    Trainer<float> t(cfg, tiny_data());
    t.run(2);
    const auto path = temp_path("f.ckpt");
    t.save(path);
    auto ck = load_checkpoint<double>(path);
    auto pf = t.model().parameters();
    auto pd = ck.model.parameters();
    for (std::size_t i = 0; i < pf.size(); ++i) {
        EXPECT_TRUE((pf[i].value().cast<double>() == pd[i].value()).all());
    }
}
