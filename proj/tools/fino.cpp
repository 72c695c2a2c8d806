// Command line front end: training, inference, evaluation, noise synthesis
// and the audits. Exit status: 0 success, 1 runtime failure, 2 usage error.
#include "fino/audit.hpp"
#include "fino/dataset.hpp"
#include "fino/denoise.hpp"
#include "fino/eval_report.hpp"
#include "fino/metrics.hpp"
#include "fino/noise.hpp"
#include "fino/toy_data.hpp"
#include "fino/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace fino;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --sigma / --sigma-range / --variant, all on the 0-255 scale.
struct NoiseFlags {
    double sigma = 25.0;
    std::string sigma_range;
    std::string variant;
    std::uint64_t seed = 0;

    void add_to(CLI::App* app) {
        auto* s = app->add_option("--sigma", sigma, "uniform AWGN level (0-255 scale)")->capture_default_str();
        auto* r = app->add_option("--sigma-range", sigma_range, "blind mode: per-image level drawn from (lo,hi]");
        auto* v = app->add_option("--variant", variant, "spatially variant level map in [lo,hi]");
        s->excludes(r)->excludes(v);
        r->excludes(v);
        app->add_option("--seed", seed, "noise seed")->capture_default_str();
    }

    /// Spec for image `index`; each image gets its own derived seed.
    NoiseSpec spec(std::size_t index) const {
        const std::uint64_t s = derive_seed(seed, index);
        if (!sigma_range.empty()) {
            const auto [lo, hi] = parse_range(sigma_range, "--sigma-range");
            return NoiseSpec::blind(sigma_from_8bit(lo), sigma_from_8bit(hi), s);
        }
        if (!variant.empty()) {
            const auto [lo, hi] = parse_range(variant, "--variant");
            return NoiseSpec::variant(sigma_from_8bit(lo), sigma_from_8bit(hi), s);
        }
        return NoiseSpec::uniform(sigma_from_8bit(sigma), s);
    }

    std::vector<std::pair<std::string, std::string>> echo() const {
        if (!sigma_range.empty()) return {{"noise", "blind"}, {"sigma_range", sigma_range}};
        if (!variant.empty()) return {{"noise", "variant"}, {"variant", variant}};
        std::ostringstream os;
        os << sigma;
        return {{"noise", "uniform"}, {"sigma", os.str()}};
    }
};

DenoiseMode parse_mode(const std::string& m) {
    if (m == "zero") return DenoiseMode::zero;
    if (m == "sample") return DenoiseMode::sample;
    if (m == "average") return DenoiseMode::average;
    throw UsageError("--mode must be zero, sample or average");
}

bool checkpoint_is_f32(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path);
    std::string line;
    while (std::getline(is, line) && line != "end_manifest") {
        if (line == "dtype=f32") return true;
    }
    return false;
}

std::vector<std::string> inputs_of(const std::string& path) {
    if (fs::is_directory(path)) return list_images(path);
    if (!fs::exists(path)) throw std::runtime_error(path + ": no such file or directory");
    return {path};
}

Image clamp01(Image img) {
    img.pixels = img.pixels.min(1.0).max(0.0);
    return img;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string resume;
    std::optional<Index> steps;
};

template <typename Scalar>
int run_train(const TrainConfig& cfg, const TrainArgs& args) {
    const auto data = load_training_data(cfg);
    Trainer<Scalar> trainer(cfg, data.train, data.holdout);
    if (!data.train_noisy.empty()) trainer.set_noisy_partners(data.train_noisy);
    trainer.set_diagnostics(&std::cerr);
    if (!args.resume.empty()) trainer.resume(args.resume);

    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!cfg.log_path.empty()) {
        const bool append = !args.resume.empty() && fs::exists(cfg.log_path);
        log_file.open(cfg.log_path, append ? std::ios::app : std::ios::trunc);
        if (!log_file) throw std::runtime_error("cannot open log " + cfg.log_path);
        log = &log_file;
        if (!append) *log << log_header() << "\n";
    } else {
        *log << log_header() << "\n";
    }
    trainer.run(args.steps, [&](const TrainLogRecord& r) { *log << to_csv(r) << "\n" << std::flush; });
    if (!cfg.checkpoint_path.empty()) trainer.save(cfg.checkpoint_path);
    std::cerr << "trained to step " << trainer.step() << "; held-out psnr "
              << format_metric(trainer.evaluate()) << " dB (noisy " << format_metric(trainer.noisy_baseline())
              << " dB)\n";
    return 0;
}

int cmd_train(const TrainArgs& args) {
    auto cfg = TrainConfig::from_key_values(KeyValues::load(args.config));
    return cfg.use_f32 ? run_train<float>(cfg, args) : run_train<double>(cfg, args);
}

// ---------------------------------------------------------------------------

struct DenoiseArgs {
    std::string checkpoint, input, output, mode = "zero";
    std::uint64_t seed = 0;
    Index samples = 8;
};

template <typename Scalar>
int run_denoise(const DenoiseArgs& a) {
    const auto ck = load_checkpoint<Scalar>(a.checkpoint);
    const DenoiseOptions opt{parse_mode(a.mode), a.seed, a.samples};
    const bool many = fs::is_directory(a.input);
    if (many) fs::create_directories(a.output);
    for (const auto& path : inputs_of(a.input)) {
        bool padded = false;
        const Image out = denoise(ck.model, load_image(path), opt, &padded);
        const std::string target = many ? (fs::path(a.output) / fs::path(path).filename()).string() : a.output;
        save_image(clamp01(out), target);
        if (padded) std::cerr << path << ": reflect-padded to a multiple of " << ck.model.config().spatial_multiple()
                              << " and cropped back\n";
        std::cout << target << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, clean, denoised, output, mode = "zero";
    NoiseFlags noise;
    std::uint64_t denoise_seed = 0;
};

template <typename Scalar>
EvalReport eval_checkpoint(const EvalArgs& a, const std::vector<std::string>& files) {
    const auto ck = load_checkpoint<Scalar>(a.checkpoint);
    const DenoiseOptions opt{parse_mode(a.mode), a.denoise_seed, 8};
    EvalReport report;
    report.seed = a.noise.seed;
    report.config = a.noise.echo();
    report.config.emplace_back("checkpoint", a.checkpoint);
    report.config.emplace_back("mode", a.mode);
    for (std::size_t i = 0; i < files.size(); ++i) {
        const Image clean = load_image(files[i]);
        const auto noisy = synthesize_noise(clean, a.noise.spec(i));
        bool padded = false;
        const Image out = denoise(ck.model, noisy.noisy, opt, &padded);
        if (padded) report.config.emplace_back("padded", files[i]);
        report.rows.push_back({files[i], psnr(noisy.noisy, clean), psnr(out, clean), ssim(out, clean)});
    }
    return report;
}

EvalReport eval_directories(const EvalArgs& a, const std::vector<std::string>& files) {
    EvalReport report;
    report.domain = "files-as-stored";
    report.config.emplace_back("denoised", a.denoised);
    for (const auto& path : files) {
        const auto partner = fs::path(a.denoised) / fs::path(path).filename();
        const Image clean = load_image(path);
        const Image den = load_image(partner.string());
        if (!den.same_shape(clean)) throw std::runtime_error(partner.string() + ": shape differs from " + path);
        report.rows.push_back({path, std::numeric_limits<double>::quiet_NaN(), psnr(den, clean), ssim(den, clean)});
    }
    return report;
}

int cmd_eval(const EvalArgs& a) {
    if (a.checkpoint.empty() == a.denoised.empty()) {
        throw UsageError("eval needs exactly one of --checkpoint or --denoised");
    }
    const auto files = list_images(a.clean);
    if (files.empty()) throw std::runtime_error(a.clean + ": no images");
    EvalReport report;
    if (!a.denoised.empty()) {
        report = eval_directories(a, files);
    } else {
        report = checkpoint_is_f32(a.checkpoint) ? eval_checkpoint<float>(a, files) : eval_checkpoint<double>(a, files);
    }
    if (a.output.empty()) {
        std::cout << report.to_csv();
    } else {
        std::ofstream os(a.output);
        if (!os) throw std::runtime_error("cannot open " + a.output + " for writing");
        os << report.to_csv();
    }
    std::cerr << "mean denoised psnr " << format_metric(report.mean_denoised_psnr()) << " dB, ssim "
              << format_metric(report.mean_ssim(), 6) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct NoisegenArgs {
    std::string input, output;
    NoiseFlags noise;
    bool raw = false;
};

int cmd_noisegen(const NoisegenArgs& a) {
    const auto files = inputs_of(a.input);
    fs::create_directories(a.output);
    for (std::size_t i = 0; i < files.size(); ++i) {
        const Image clean = load_image(files[i]);
        const auto noisy = synthesize_noise(clean, a.noise.spec(i));
        fs::path target = fs::path(a.output) / fs::path(files[i]).filename();
        if (a.raw) target.replace_extension(".fnt");
        save_image(noisy.noisy, target.string());
        std::cout << target.string() << " sigma=" << std::setprecision(6) << noisy.sigma * 255.0 << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct RoundtripArgs {
    FlowConfig flow;
    Index inputs = 20, size = 32;
    std::uint64_t seed = 0;
    double tolerance = 1e-9;
    std::string checkpoint, input;
};

int cmd_roundtrip(const RoundtripArgs& a) {
    double worst = 0.0;
    if (!a.checkpoint.empty() || !a.input.empty()) {
        if (a.input.empty()) throw UsageError("--checkpoint needs --input");
        FlowModel<double> model;
        if (a.checkpoint.empty()) {
            FlowConfig cfg = a.flow;
            cfg.input_channels = load_image(inputs_of(a.input).front()).channels;
            model = FlowModel<double>(cfg);
            model.initialize(InitMode::random, a.seed);
        } else {
            model = load_checkpoint<double>(a.checkpoint).model;
        }
        for (const auto& path : inputs_of(a.input)) {
            const double e = roundtrip_error(model, load_image(path));
            std::cout << path << " max_abs_error " << std::setprecision(6) << e << "\n";
            worst = std::max(worst, e);
        }
    } else {
        const auto r = roundtrip_audit(a.flow, a.seed, a.inputs, a.size);
        worst = r.max_error;
        std::cout << "inputs " << r.inputs << " blocks " << a.flow.num_blocks << " layers "
                  << a.flow.layers_per_block << " seconds " << std::setprecision(3) << r.seconds << "\n";
    }
    std::cout << "max_abs_error " << std::setprecision(6) << worst << "\n";
    if (!(worst < a.tolerance)) {
        std::cerr << "round-trip error exceeds " << a.tolerance << "\n";
        return 1;
    }
    return 0;
}

int cmd_gradcheck(const GradCheckOptions& opt, double tolerance) {
    const auto r = gradcheck_audit(opt, tolerance);
    std::cout << "checked " << r.checked << " entries in " << std::setprecision(3) << r.seconds << " s\n"
              << "one_sided " << r.one_sided << "\n"
              << "worst_relative_error " << std::setprecision(6) << r.worst_relative << " at " << r.worst_parameter
              << "[" << r.worst_index << "]\n";
    return r.worst_relative < tolerance ? 0 : 1;
}

int cmd_selftest(std::uint64_t seed) {
    bool ok = true;
    for (const auto& c : run_selftest(seed)) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " " << c.detail << "\n";
        ok = ok && c.passed;
    }
    return ok ? 0 : 1;
}

struct ToyArgs {
    std::string output;
    Index count = 16, size = 32, channels = 1;
    std::uint64_t seed = 2024;
};

int cmd_toydata(const ToyArgs& a) {
    fs::create_directories(a.output);
    const auto images = make_toy_dataset(a.count, a.size, a.seed, a.channels);
    for (std::size_t i = 0; i < images.size(); ++i) {
        std::ostringstream name;
        name << "toy_" << std::setw(3) << std::setfill('0') << i << (a.channels == 3 ? ".ppm" : ".pgm");
        const auto target = (fs::path(a.output) / name.str()).string();
        save_image(images[i], target);
        std::cout << target << "\n";
    }
    return 0;
}

void add_flow_options(CLI::App* app, FlowConfig& flow) {
    app->add_option("--blocks", flow.num_blocks, "flow blocks B")->capture_default_str();
    app->add_option("--layers", flow.layers_per_block, "coupling layers per block K")->capture_default_str();
    app->add_option("--width", flow.hidden_width, "subnet hidden width")->capture_default_str();
    app->add_option("--channels", flow.input_channels, "image channels")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Flow-based joint image and noise model for denoising"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "train a model from a key=value config file");
    train_cmd->add_option("config", train.config, "config file")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--resume", train.resume, "continue from this checkpoint");
    train_cmd->add_option("--until", train.steps, "stop at this step instead of the configured total");

    DenoiseArgs den;
    auto* den_cmd = app.add_subcommand("denoise", "denoise an image or a directory of images");
    den_cmd->add_option("--checkpoint", den.checkpoint, "model checkpoint")->required();
    den_cmd->add_option("--input", den.input, "noisy image or directory")->required();
    den_cmd->add_option("--output", den.output, "output image or directory")->required();
    den_cmd->add_option("--mode", den.mode, "zero, sample or average")->capture_default_str();
    den_cmd->add_option("--seed", den.seed, "seed of the sampled noise code")->capture_default_str();
    den_cmd->add_option("--samples", den.samples, "draws averaged in average mode")->capture_default_str();

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM report over a directory of clean images");
    eval_cmd->add_option("--clean", ev.clean, "directory of clean references")->required();
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "synthesize noise, denoise and score");
    eval_cmd->add_option("--denoised", ev.denoised, "score an existing directory of results instead");
    eval_cmd->add_option("--mode", ev.mode, "denoise mode")->capture_default_str();
    eval_cmd->add_option("--denoise-seed", ev.denoise_seed, "seed for sample/average modes")->capture_default_str();
    eval_cmd->add_option("--output", ev.output, "write the CSV report here instead of stdout");
    ev.noise.add_to(eval_cmd);

    NoisegenArgs gen;
    auto* gen_cmd = app.add_subcommand("noisegen", "write noisy versions of clean images");
    gen_cmd->add_option("--input", gen.input, "clean image or directory")->required();
    gen_cmd->add_option("--output", gen.output, "output directory")->required();
    gen_cmd->add_flag("--raw", gen.raw, "write unclipped float images (.fnt)");
    gen.noise.add_to(gen_cmd);

    RoundtripArgs rt;
    auto* rt_cmd = app.add_subcommand("roundtrip", "invertibility audit: max |inverse(forward(x)) - x|");
    add_flow_options(rt_cmd, rt.flow);
    rt_cmd->add_option("--inputs", rt.inputs, "random inputs")->capture_default_str();
    rt_cmd->add_option("--size", rt.size, "random input extent")->capture_default_str();
    rt_cmd->add_option("--seed", rt.seed, "seed")->capture_default_str();
    rt_cmd->add_option("--tolerance", rt.tolerance, "failure threshold")->capture_default_str();
    rt_cmd->add_option("--checkpoint", rt.checkpoint, "audit a trained model");
    rt_cmd->add_option("--input", rt.input, "audit on image files instead of random inputs");

    GradCheckOptions gc;
    gc.flow.num_blocks = 1;
    gc.flow.layers_per_block = 2;
    gc.flow.hidden_width = 4;
    double gc_tolerance = 1e-5;
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference audit of every parameter gradient");
    add_flow_options(gc_cmd, gc.flow);
    gc_cmd->add_option("--size", gc.size, "input extent")->capture_default_str();
    gc_cmd->add_option("--batch", gc.batch, "batch size")->capture_default_str();
    gc_cmd->add_option("--step", gc.step, "finite-difference step")->capture_default_str();
    gc_cmd->add_option("--seed", gc.seed, "seed")->capture_default_str();
    gc_cmd->add_option("--tolerance", gc_tolerance, "failure threshold")->capture_default_str();

    ToyArgs toy;
    auto* toy_cmd = app.add_subcommand("toydata", "write the synthetic toy corpus as 8-bit images");
    toy_cmd->add_option("--output", toy.output, "output directory")->required();
    toy_cmd->add_option("--count", toy.count, "number of images")->capture_default_str();
    toy_cmd->add_option("--size", toy.size, "image extent")->capture_default_str();
    toy_cmd->add_option("--channels", toy.channels, "1 or 3")->capture_default_str()->check(CLI::IsMember({1, 3}));
    toy_cmd->add_option("--seed", toy.seed, "seed")->capture_default_str();

    std::uint64_t st_seed = 1;
    auto* st_cmd = app.add_subcommand("selftest", "run the property suite");
    st_cmd->add_option("--seed", st_seed, "seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const CLI::App* failing = &app;
        for (auto* sub : app.get_subcommands()) failing = sub;
        std::cerr << failing->help();
        return 2;
    }

    try {
        if (*train_cmd) return cmd_train(train);
        if (*den_cmd) return checkpoint_is_f32(den.checkpoint) ? run_denoise<float>(den) : run_denoise<double>(den);
        if (*eval_cmd) return cmd_eval(ev);
        if (*gen_cmd) return cmd_noisegen(gen);
        if (*rt_cmd) {
            rt.flow.validate();
            return cmd_roundtrip(rt);
        }
        if (*gc_cmd) {
            gc.flow.validate();
            return cmd_gradcheck(gc, gc_tolerance);
        }
        if (*toy_cmd) return cmd_toydata(toy);
        if (*st_cmd) return cmd_selftest(st_seed);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
