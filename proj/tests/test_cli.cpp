#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "flamesift/checkpoint.hpp"
#include "flamesift/dataflow.hpp"
#include "flamesift/io_util.hpp"
#include "flamesift/synth.hpp"

using namespace flamesift;
namespace fs = std::filesystem;

namespace {

std::string g_cli;
fs::path g_root;

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run run(const std::string& args) {
    const fs::path o = g_root / "stdout.txt", e = g_root / "stderr.txt";
    const std::string cmd = g_cli + " " + args + " > " + o.string() + " 2> " + e.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
}

std::string path(const std::string& rel) { return (g_root / rel).string(); }

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

bool has_tmp_files(const fs::path& dir) {
    if (!fs::exists(dir)) return false;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.path().extension() == ".tmp") return true;
    return false;
}

void write_checkpoint(const Model& m, const std::string& rel) {
    fs::create_directories(fs::path(path(rel)).parent_path());
    save_checkpoint(m, path(rel));
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run("").code == 2);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("synth --out " + path("x") + " --bogus-flag").code == 2);
    CHECK(run("synth").code == 2);  // --out missing
    CHECK(run("--help").code == 0);
}

TEST_CASE("synth") {
    const Run r = run("synth --seed 7 --frames 2000 --schedule stable:0,unstable:1000 --out " + path("synth_a"));
    REQUIRE(r.code == 0);
    const FrameDataset ds = load_dataset(path("synth_a/dataset.fsds"));
    CHECK(ds.frames.size() == 2000);
    CHECK(ds.count(Label::stable) == 1000);
    CHECK(ds.count(Label::unstable) == 1000);
    CHECK(load_manifest(path("synth_a/manifest.csv")).frames.size() == 2000);

    REQUIRE(run("synth --seed 7 --frames 2000 --schedule stable:0,unstable:1000 --out " + path("synth_b")).code == 0);
    CHECK(slurp(path("synth_a/dataset.fsds")) == slurp(path("synth_b/dataset.fsds")));
    CHECK(slurp(path("synth_a/manifest.csv")) == slurp(path("synth_b/manifest.csv")));
    CHECK(slurp(path("synth_a/frames/frame_001234.pgm")) == slurp(path("synth_b/frames/frame_001234.pgm")));

    const Run bad = run("synth --frames 100 --schedule stable:0,unstable:150 --out " + path("synth_bad"));
    CHECK(bad.code == 2);
    CHECK(contains(bad.err, "150"));
    CHECK(!fs::exists(path("synth_bad/dataset.fsds")));
    CHECK(run("synth --frames 100 --schedule stable:0,sideways:10 --out " + path("synth_bad")).code == 2);
}

TEST_CASE("train") {
    REQUIRE(run("synth --seed 3 --frames 240 --out " + path("train_data") + " --no-pgm").code == 0);
    REQUIRE(run("synth --seed 3 --frames 40 --schedule stable:0 --out " + path("one_class") + " --no-pgm").code == 0);

    SUBCASE("defaults are echoed in the run header") {
        const Run r = run("train --data " + path("one_class/dataset.fsds") + " --out " + path("train_header"));
        CHECK(contains(r.out, "learning_rate 0.0001\n"));
        CHECK(contains(r.out, "momentum 0.975\n"));
        CHECK(contains(r.out, "batch_size 128\n"));
        CHECK(contains(r.out, "max_epochs 100\n"));
        CHECK(contains(r.out, "l2_coeff 0.0001\n"));
        CHECK(contains(r.out, "l1_coeff 0.0001\n"));
        CHECK(contains(r.out, "parameters 1291017\n"));
    }
    SUBCASE("single-class data is rejected without output") {
        const Run r = run("train --data " + path("one_class/dataset.fsds") + " --out " + path("train_single"));
        CHECK(r.code == 2);
        CHECK(contains(r.err, "selective training requires both classes"));
        CHECK(!fs::exists(path("train_single/checkpoint.fsck")));
        CHECK(!has_tmp_files(path("train_single")));
    }
    SUBCASE("zero epochs and bad values") {
        CHECK(run("train --epochs 0 --data " + path("train_data/dataset.fsds") + " --out " + path("t0")).code == 2);
        CHECK(run("train --momentum 1.5 --data " + path("train_data/dataset.fsds") + " --out " + path("t0")).code == 2);
        CHECK(run("train --preset huge --data " + path("train_data/dataset.fsds") + " --out " + path("t0")).code == 2);
        CHECK(run("train --data " + path("missing.fsds") + " --out " + path("t0")).code == 1);
    }
    SUBCASE("desk smoke run improves on its first epoch") {
        const std::string args = "train --data " + path("train_data/dataset.fsds") +
                                 " --lr 0.01 --batch 16 --epochs 4 --seed 2 --out ";
        const Run r = run(args + path("train_smoke"));
        REQUIRE(r.code == 0);
        std::istringstream csv(slurp(path("train_smoke/loss_history.csv")));
        std::string line;
        std::getline(csv, line);
        CHECK(line == "epoch,train_loss,valid_loss,penalty");
        std::vector<double> valid;
        while (std::getline(csv, line)) {
            std::stringstream ss(line);
            std::string f;
            for (int i = 0; i < 3; ++i) std::getline(ss, f, ',');
            valid.push_back(std::stod(f));
        }
        REQUIRE(valid.size() == 4);
        const Checkpoint cp = load_checkpoint(path("train_smoke/checkpoint.fsck"));
        CHECK(cp.meta.best_valid_loss < valid.front());
        CHECK(cp.model.parameter_count() == 1291017);

        // Same flags and seeds: identical bytes, independent of worker count.
        REQUIRE(run(args + path("train_smoke2") + " --workers 3").code == 0);
        CHECK(slurp(path("train_smoke/checkpoint.fsck")) == slurp(path("train_smoke2/checkpoint.fsck")));
        CHECK(slurp(path("train_smoke/loss_history.csv")) == slurp(path("train_smoke2/loss_history.csv")));
    }
}

TEST_CASE("infer") {
    REQUIRE(run("synth --seed 5 --frames 12 --out " + path("infer_data")).code == 0);
    write_checkpoint(Model::build(desk_config(9)), "models/random.fsck");

    const Run r = run("infer --checkpoint " + path("models/random.fsck") + " --data " + path("infer_data/manifest.csv") +
                      " --out " + path("infer_out"));
    REQUIRE(r.code == 0);
    CHECK(fs::exists(path("infer_out/recon_000011.pgm")));
    const std::string csv = slurp(path("infer_out/infer.csv"));
    CHECK(csv.rfind("frame_index,label,input_mean,output_mean,output_energy,eta\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);

    const Run single = run("infer --checkpoint " + path("models/random.fsck") + " --data " +
                           path("infer_data/frames/frame_000003.pgm") + " --out " + path("infer_single"));
    CHECK(single.code == 0);
    CHECK(fs::exists(path("infer_single/recon_000000.pgm")));

    const Run mismatch = run("infer --preset paperlike --checkpoint " + path("models/random.fsck") + " --data " +
                             path("infer_data/manifest.csv") + " --out " + path("infer_mismatch"));
    CHECK(mismatch.code == 1);
    CHECK(contains(mismatch.err, "does not match"));

    fs::create_directories(path("models"));
    std::ofstream(path("models/garbage.fsck")) << "not a checkpoint";
    CHECK(run("infer --checkpoint " + path("models/garbage.fsck") + " --data " + path("infer_data/manifest.csv") +
              " --out " + path("infer_bad"))
              .code == 1);
    CHECK(run("infer --checkpoint " + path("models/none.fsck") + " --data " + path("infer_data/manifest.csv") +
              " --out " + path("infer_bad"))
              .code == 1);
}

TEST_CASE("analyze") {
    REQUIRE(run("synth --seed 8 --frames 200 --schedule stable:0 --out " + path("calm") + " --no-pgm").code == 0);
    write_checkpoint(Model::zeros(desk_config()), "models/zero.fsck");
    write_checkpoint(Model::build(desk_config(4)), "models/random4.fsck");

    const std::string base = "analyze --checkpoint " + path("models/zero.fsck") + " --data " + path("calm/dataset.fsds");
    const Run calm = run(base + " --out " + path("an_calm"));
    REQUIRE(calm.code == 0);
    CHECK(contains(calm.out, "no onset detected"));
    const std::string trace = slurp(path("an_calm/trace.csv"));
    CHECK(trace.rfind("frame_index,raw,smoothed,soft_label,event\n", 0) == 0);

    const Run low = run(base + " --threshold 0 --out " + path("an_low"));
    REQUIRE(low.code == 0);
    CHECK(contains(low.out, "onset: frame 0"));
    CHECK(slurp(path("an_low/trace.csv")) != trace);

    const std::string rnd = "analyze --checkpoint " + path("models/random4.fsck") + " --data " + path("calm/dataset.fsds");
    REQUIRE(run(rnd + " --out " + path("an_r1")).code == 0);
    REQUIRE(run(rnd + " --workers 4 --out " + path("an_r2")).code == 0);
    CHECK(slurp(path("an_r1/trace.csv")) == slurp(path("an_r2/trace.csv")));

    FrameDataset empty;
    save_packed(empty, path("empty.fsds"));
    CHECK(run("analyze --checkpoint " + path("models/zero.fsck") + " --data " + path("empty.fsds")).code == 2);
    CHECK(run(base + " --sustain 0").code == 2);
}

TEST_CASE("bench") {
    write_checkpoint(Model::build(desk_config(6)), "models/bench.fsck");
    CHECK(run("bench --frames 0 --checkpoint " + path("models/bench.fsck")).code == 2);
    const Run r = run("bench --frames 20 --threads 2 --checkpoint " + path("models/bench.fsck") + " --out " + path("bench"));
    REQUIRE(r.code == 0);
    CHECK(contains(r.out, "frames/s"));
    CHECK(contains(r.out, "forward"));
    CHECK(contains(r.out, "measure"));
    CHECK(contains(r.out, "linearity"));
    CHECK(contains(r.out, "multi worker (2)"));
    CHECK(fs::exists(path("bench/bench.csv")));
}

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: test_cli <path-to-flamesift> [doctest options]\n");
        return 2;
    }
    g_cli = fs::absolute(argv[1]).string();
    g_root = fs::temp_directory_path() / "flamesift_cli_test";
    fs::remove_all(g_root);
    fs::create_directories(g_root);
    doctest::Context ctx;
    ctx.applyCommandLine(argc - 1, argv + 1);
    const int rc = ctx.run();
    if (rc == 0) fs::remove_all(g_root);
    return rc;
}
