#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include "flamesift/checkpoint.hpp"
#include "flamesift/dataflow.hpp"
#include "flamesift/errors.hpp"
#include "flamesift/instability.hpp"
#include "flamesift/io_util.hpp"
#include "flamesift/log.hpp"
#include "flamesift/parallel.hpp"
#include "flamesift/pgm.hpp"
#include "flamesift/synth.hpp"
#include "flamesift/training.hpp"

using namespace flamesift;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Common {
    std::uint64_t seed = 1;
    std::string out;
    std::size_t workers = 1;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
    cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    auto* out = cmd->add_option("--out", c.out, "Output directory");
    if (out_required) out->required();
    cmd->add_option("--workers", c.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

fs::path ensure_dir(const std::string& dir) {
    const fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
    return p;
}

NetworkConfig resolve_config(const std::string& preset, const std::string& config_file, std::uint64_t seed) {
    NetworkConfig cfg;
    if (!config_file.empty()) {
        const auto bytes = io::read_file(config_file);
        cfg = NetworkConfig::parse(std::string(bytes.begin(), bytes.end()));
    } else {
        cfg = preset_config(preset, seed);
    }
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

/// Datasets (.fsds or manifest) or a single PGM frame.
FrameDataset load_frames(const std::string& path) {
    if (fs::path(path).extension() == ".pgm") {
        const pgm::Image img = pgm::read(path);
        FrameDataset ds;
        ds.frames.push_back(Frame{img.height, img.width, img.pixels, Label::unlabeled, 0, "pgm"});
        return ds;
    }
    return load_dataset(path);
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    Common common;
    std::size_t frames = 2000;
    std::string schedule;
    double noise = 4.0;
    std::size_t height = 64;
    std::size_t width = 64;
    double burst_mean = 5.0;
    double burst_gap = 200.0;
    std::string condition;
    bool no_pgm = false;
};

int run_synth(const SynthArgs& a) {
    SynthParams p;
    p.seed = a.common.seed;
    p.frames = a.frames;
    p.schedule = parse_schedule(a.schedule.empty() ? "stable:0,unstable:" + std::to_string(a.frames / 2) : a.schedule);
    p.noise = a.noise;
    p.height = a.height;
    p.width = a.width;
    p.burst_mean = a.burst_mean;
    p.burst_gap = a.burst_gap;
    p.validate();

    const fs::path out = ensure_dir(a.common.out);
    FrameDataset ds = synth_generate(p);
    ds.condition = a.condition;
    save_packed(ds, out / "dataset.fsds");
    if (!a.no_pgm) save_manifest_dataset(ds, out);
    std::cout << "wrote " << ds.frames.size() << " frames (" << ds.count(Label::stable) << " stable, "
              << ds.count(Label::unstable) << " unstable) to " << out.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    Common common;
    std::string data;
    std::string preset = "desk";
    std::string config;
    double lr = 1e-4;
    double momentum = 0.975;
    std::size_t batch = 128;
    std::size_t epochs = 100;
    double l2 = 1e-4;
    double l1 = 1e-4;
    double valid_fraction = 0.1;
    std::size_t patience = 10;
    std::uint64_t shuffle_seed = 1;
};

int run_train(const TrainArgs& a) {
    if (a.epochs == 0) throw ConfigError("--epochs must be >= 1");
    const NetworkConfig net = resolve_config(a.preset, a.config, a.common.seed);

    TrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.momentum = a.momentum;
    cfg.batch_size = a.batch;
    cfg.max_epochs = a.epochs;
    cfg.loss = {a.l2, a.l1};
    cfg.validation_fraction = a.valid_fraction;
    cfg.early_stop.patience = a.patience;
    cfg.shuffle_seed = a.shuffle_seed;
    cfg.workers = a.common.workers;
    cfg.validate();

    Model model = Model::build(net);
    std::cout << "flamesift train\n"
              << "  learning_rate " << fmt("%g", cfg.learning_rate) << "\n"
              << "  momentum " << fmt("%g", cfg.momentum) << "\n"
              << "  batch_size " << cfg.batch_size << "\n"
              << "  max_epochs " << cfg.max_epochs << "\n"
              << "  l2_coeff " << fmt("%g", cfg.loss.l2_coeff) << "\n"
              << "  l1_coeff " << fmt("%g", cfg.loss.l1_coeff) << "\n"
              << "  validation_fraction " << fmt("%g", cfg.validation_fraction) << "\n"
              << "  patience " << cfg.early_stop.patience << "\n"
              << "  seed " << a.common.seed << " shuffle_seed " << cfg.shuffle_seed << "\n"
              << "  parameters " << model.parameter_count() << "\n"
              << std::flush;

    const FrameDataset ds = load_frames(a.data);
    if (ds.count(Label::unlabeled) > 0) throw ConfigError("training data contains unlabeled frames");
    if (ds.count(Label::stable) == 0 || ds.count(Label::unstable) == 0) {
        throw ConfigError("selective training requires both classes (got " + std::to_string(ds.count(Label::stable)) +
                          " stable, " + std::to_string(ds.count(Label::unstable)) + " unstable)");
    }
    std::cout << "  frames " << ds.frames.size() << " (" << ds.count(Label::stable) << " stable, "
              << ds.count(Label::unstable) << " unstable)" << std::endl;

    const fs::path out = ensure_dir(a.common.out);
    const auto samples = make_training_samples(ds, model.input_shape());
    cfg.on_epoch = [](const EpochRecord& r) {
        std::cout << "epoch " << r.epoch << " train_loss " << fmt("%.6g", r.train_loss) << " valid_loss "
                  << fmt("%.6g", r.valid_loss) << " penalty " << fmt("%.6g", r.penalty) << std::endl;
    };
    const TrainResult result = train(std::move(model), samples, cfg);

    save_checkpoint(result.best, out / "checkpoint.fsck",
                    TrainingMeta{static_cast<std::uint32_t>(result.best_epoch), result.best_valid_loss});
    io::write_text_atomic(out / "loss_history.csv", history_csv(result.history));
    std::cout << "best epoch " << result.best_epoch << " valid_loss " << fmt("%.6g", result.best_valid_loss)
              << (result.stopped_early ? " (stopped early)" : "") << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
    Common common;
    std::string checkpoint;
    std::string data;
    std::string preset;
    std::string config;
};

int run_infer(const InferArgs& a) {
    const Checkpoint cp = load_checkpoint(a.checkpoint);
    if (!a.preset.empty() || !a.config.empty()) {
        const NetworkConfig want = resolve_config(a.preset.empty() ? "desk" : a.preset, a.config, cp.model.config().seed);
        if (!(want.layers == cp.model.config().layers) || want.input != cp.model.config().input) {
            const auto have = cp.model.shapes();
            const auto need = want.shape_chain();
            throw ShapeError("checkpoint network (input " + have.front().to_string() + ", " +
                             std::to_string(cp.model.layer_count()) + " layers) does not match the requested config (input " +
                             need.front().to_string() + ", " + std::to_string(want.layers.size()) + " layers)");
        }
    }
    const FrameDataset ds = load_frames(a.data);
    const fs::path out = ensure_dir(a.common.out);
    const Model& model = cp.model;

    std::vector<std::string> rows(ds.frames.size());
    std::vector<pgm::Image> images(ds.frames.size());
    parallel_for(ds.frames.size(), a.common.workers, [&](std::size_t i) {
        const Frame fitted = fit_to(ds.frames[i], model.input_shape());
        const Tensor y = forward(model, normalize(fitted));
        const Frame recon = denormalize(y, fitted);
        images[i] = pgm::Image{recon.width, recon.height, recon.pixels};
        double energy = 0.0, in_mean = 0.0, out_mean = 0.0;
        for (double v : y.data()) energy += v * v;
        for (auto p : fitted.pixels) in_mean += p;
        for (auto p : images[i].pixels) out_mean += p;
        const double n = static_cast<double>(y.size());
        char buf[200];
        std::snprintf(buf, sizeof buf, "%zu,%s,%.6f,%.6f,%.10g,%.10g\n", i, to_string(ds.frames[i].label), in_mean / n,
                      out_mean / n, energy / n, output_measure(fitted, y));
        rows[i] = buf;
    });
    std::string csv = "frame_index,label,input_mean,output_mean,output_energy,eta\n";
    char name[64];
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
        std::snprintf(name, sizeof name, "recon_%06zu.pgm", i);
        pgm::write(out / name, images[i]);
        csv += rows[i];
    }
    io::write_text_atomic(out / "infer.csv", csv);
    std::cout << "reconstructed " << ds.frames.size() << " frames into " << out.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
    Common common;
    std::string checkpoint;
    std::string data;
    double threshold = 0.5;
    std::size_t sustain = 30;
    double window = 0.05;
};

int run_analyze(const AnalyzeArgs& a) {
    const Checkpoint cp = load_checkpoint(a.checkpoint);
    const FrameDataset ds = load_frames(a.data);
    if (ds.frames.empty()) throw ConfigError("sequence " + a.data + " holds no frames");
    AnalysisConfig cfg;
    cfg.threshold = a.threshold;
    cfg.sustain = a.sustain;
    cfg.window_fraction = a.window;
    cfg.workers = a.common.workers;
    const InstabilityTrace trace = analyze_sequence(cp.model, ds.frames, cfg);
    const std::string summary = trace_summary(trace);
    if (!a.common.out.empty()) {
        const fs::path out = ensure_dir(a.common.out);
        io::write_text_atomic(out / "trace.csv", trace_csv(trace));
        io::write_text_atomic(out / "summary.txt", summary);
    }
    if (trace.smoothing_degenerate) log::info("smoothing window holds two points or fewer; trace left unsmoothed");
    std::cout << "frames " << trace.raw.size() << ", threshold " << fmt("%g", cfg.threshold) << ", sustain "
              << cfg.sustain << ", window " << fmt("%g", cfg.window_fraction) << "\n"
              << summary;
    return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
    Common common;
    std::string checkpoint;
    std::size_t frames = 500;
    std::size_t threads = 0;
};

struct Timing {
    double forward = 0.0;
    double measure = 0.0;
    double total = 0.0;
};

Timing time_single(const Model& model, std::span<const Frame> frames) {
    using clock = std::chrono::steady_clock;
    Timing t;
    const auto start = clock::now();
    double sink = 0.0;
    for (const Frame& f : frames) {
        const auto a = clock::now();
        const Frame fitted = fit_to(f, model.input_shape());
        const Tensor y = forward(model, normalize(fitted));
        const auto b = clock::now();
        sink += output_measure(fitted, y);
        const auto c = clock::now();
        t.forward += std::chrono::duration<double>(b - a).count();
        t.measure += std::chrono::duration<double>(c - b).count();
    }
    t.total = std::chrono::duration<double>(clock::now() - start).count();
    if (sink < 0.0) std::cout << "";
    return t;
}

double time_parallel(const Model& model, std::span<const Frame> frames, std::size_t workers) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<double> raw(frames.size());
    parallel_for(frames.size(), workers, [&](std::size_t i) { raw[i] = frame_measure(model, frames[i]); });
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int run_bench(const BenchArgs& a) {
    if (a.frames == 0) throw ConfigError("--frames must be >= 1");
    const Checkpoint cp = load_checkpoint(a.checkpoint);
    const Shape in = cp.model.input_shape();
    SynthParams p;
    p.seed = a.common.seed;
    p.frames = 2 * a.frames;
    p.height = in.height;
    p.width = in.width;
    p.schedule = {{0, Regime::stable, 1.0}, {a.frames, Regime::unstable, 1.0}};
    const FrameDataset ds = synth_generate(p);
    std::vector<Frame> mixed;  // alternate classes so both halves see the same mix
    for (std::size_t i = 0; i < a.frames; ++i) {
        mixed.push_back(ds.frames[i]);
        mixed.push_back(ds.frames[a.frames + i]);
    }
    const std::span<const Frame> all(mixed);

    time_single(cp.model, all.first(std::min<std::size_t>(all.size(), 8)));  // warm-up
    // Best of three per size; a single pass is at the mercy of scheduler noise.
    auto best_of = [&](std::span<const Frame> frames) {
        Timing best = time_single(cp.model, frames);
        for (int rep = 1; rep < 3; ++rep) {
            const Timing t = time_single(cp.model, frames);
            if (t.total < best.total) best = t;
        }
        return best;
    };
    const Timing t1 = best_of(all.first(a.frames));
    const Timing t2 = best_of(all);
    const std::size_t multi = a.threads ? a.threads : std::max<std::size_t>(a.common.workers, std::max(2u, std::thread::hardware_concurrency()));
    const double tm = time_parallel(cp.model, all, multi);

    const double ratio = t2.total / t1.total;
    const auto n1 = static_cast<double>(a.frames), n2 = 2.0 * n1;
    std::ostringstream rep;
    rep << "frames " << a.frames << ": " << fmt("%.4f", t1.total) << " s, " << fmt("%.1f", n1 / t1.total)
        << " frames/s (forward " << fmt("%.4f", t1.forward) << " s, measure " << fmt("%.4f", t1.measure) << " s)\n"
        << "frames " << 2 * a.frames << ": " << fmt("%.4f", t2.total) << " s, " << fmt("%.1f", n2 / t2.total)
        << " frames/s (forward " << fmt("%.4f", t2.forward) << " s, measure " << fmt("%.4f", t2.measure) << " s)\n"
        << "linearity: time(2N) / time(N) = " << fmt("%.3f", ratio) << "\n"
        << "single worker: " << fmt("%.1f", n2 / t2.total) << " frames/s\n"
        << "multi worker (" << multi << "): " << fmt("%.1f", n2 / tm) << " frames/s\n"
        << "stage share: forward " << fmt("%.1f", 100.0 * t2.forward / (t2.forward + t2.measure)) << "%, measure "
        << fmt("%.1f", 100.0 * t2.measure / (t2.forward + t2.measure)) << "%\n"
        << "reference: 21841 frames in 35.5 s on a GPU (" << fmt("%.0f", 21841.0 / 35.5) << " frames/s)\n";
    std::cout << rep.str();
    if (!a.common.out.empty()) {
        const fs::path out = ensure_dir(a.common.out);
        std::ostringstream csv;
        csv << "frames,workers,total_s,forward_s,measure_s,frames_per_s\n"
            << a.frames << ",1," << t1.total << "," << t1.forward << "," << t1.measure << "," << n1 / t1.total << "\n"
            << 2 * a.frames << ",1," << t2.total << "," << t2.forward << "," << t2.measure << "," << n2 / t2.total << "\n"
            << 2 * a.frames << "," << multi << "," << tm << ",,," << n2 / tm << "\n";
        io::write_text_atomic(out / "bench.csv", csv.str());
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flamesift: selective autoencoder for flame instability analysis"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "flamesift 1.0");

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic flame sequence");
    add_common(synth, sa.common, true);
    synth->add_option("--frames", sa.frames, "Frame count")->capture_default_str();
    synth->add_option("--schedule", sa.schedule, "regime:start[:intensity],... (default stable:0,unstable:frames/2)");
    synth->add_option("--noise", sa.noise, "Gaussian pixel noise, grey levels")->capture_default_str();
    synth->add_option("--height", sa.height)->capture_default_str();
    synth->add_option("--width", sa.width)->capture_default_str();
    synth->add_option("--burst-mean", sa.burst_mean, "Mean intermittent burst length")->capture_default_str();
    synth->add_option("--burst-gap", sa.burst_gap, "Mean quiet frames between bursts")->capture_default_str();
    synth->add_option("--condition", sa.condition, "Run name stored with the dataset");
    synth->add_flag("--no-pgm", sa.no_pgm, "Only write the packed dataset");

    TrainArgs ta;
    auto* trn = app.add_subcommand("train", "Train a selective autoencoder");
    add_common(trn, ta.common, true);
    trn->add_option("--data", ta.data, "Dataset (.fsds or manifest)")->required();
    trn->add_option("--preset", ta.preset, "Architecture preset")->check(CLI::IsMember({"desk", "paperlike"}))->capture_default_str();
    trn->add_option("--config", ta.config, "Network descriptor file (overrides --preset)");
    trn->add_option("--lr", ta.lr, "Learning rate")->capture_default_str();
    trn->add_option("--momentum", ta.momentum, "Nesterov momentum")->capture_default_str();
    trn->add_option("--batch", ta.batch, "Mini-batch size")->capture_default_str();
    trn->add_option("--epochs", ta.epochs, "Maximum epochs")->capture_default_str();
    trn->add_option("--l2", ta.l2, "Group l2 coefficient")->capture_default_str();
    trn->add_option("--l1", ta.l1, "l1 coefficient")->capture_default_str();
    trn->add_option("--valid-fraction", ta.valid_fraction, "Held-out validation fraction")->capture_default_str();
    trn->add_option("--patience", ta.patience, "Initial early-stopping patience")->capture_default_str();
    trn->add_option("--shuffle-seed", ta.shuffle_seed, "Seed for split and batch order")->capture_default_str();

    InferArgs ia;
    auto* inf = app.add_subcommand("infer", "Reconstruct frames through a trained model");
    add_common(inf, ia.common, true);
    inf->add_option("--checkpoint", ia.checkpoint)->required();
    inf->add_option("--data", ia.data, "Dataset or single .pgm frame")->required();
    inf->add_option("--preset", ia.preset, "Expected architecture")->check(CLI::IsMember({"desk", "paperlike"}));
    inf->add_option("--config", ia.config, "Expected network descriptor");

    AnalyzeArgs aa;
    auto* ana = app.add_subcommand("analyze", "Instability trace of a frame sequence");
    add_common(ana, aa.common, false);
    ana->add_option("--checkpoint", aa.checkpoint)->required();
    ana->add_option("--data", aa.data, "Frame sequence (.fsds or manifest)")->required();
    ana->add_option("--threshold", aa.threshold)->capture_default_str();
    ana->add_option("--sustain", aa.sustain, "Frames above threshold for an onset")->capture_default_str()->check(CLI::PositiveNumber);
    ana->add_option("--window", aa.window, "Smoothing window fraction")->capture_default_str();

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "Forward + measure throughput");
    add_common(bench, ba.common, false);
    bench->add_option("--checkpoint", ba.checkpoint)->required();
    bench->add_option("--frames", ba.frames, "N; timed at N and 2N")->capture_default_str();
    bench->add_option("--threads", ba.threads, "Workers for the multi-worker pass (default: all cores)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*synth) return run_synth(sa);
        if (*trn) return run_train(ta);
        if (*inf) return run_infer(ia);
        if (*ana) return run_analyze(aa);
        if (*bench) return run_bench(ba);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}
