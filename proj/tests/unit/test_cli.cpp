#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

#include "bavit/checkpoint.hpp"
#include "bavit/image_io.hpp"
#include "bavit/label_io.hpp"
#include "bavit/postproc.hpp"
#include "support.hpp"

using namespace bavit;
using nlohmann::json;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
};

/// Runs the CLI with a shell-quoted argument string; stdout and stderr are captured together.
RunResult cli(const testing::TempDir& dir, const std::string& args, const std::string& env = "") {
    const auto log = dir / "cli.log";
    const std::string cmd = env + (env.empty() ? "" : " ") + "'" BAVIT_CLI_PATH "' " + args + " > '" +
                            log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(log);
    return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

/// Synth corpus + 0/1-epoch model shared by several cases.
struct Fixture {
    testing::TempDir dir{"cli"};
    std::filesystem::path data = dir / "data";
    std::filesystem::path ckpt = dir / "m.ckpt";
    Fixture() {
        REQUIRE(cli(dir, "synth --n 12 --size 32 --patch 8 --seed 3 --out " + q(data)).code == 0);
        REQUIRE(cli(dir, "train --quiet --data " + q(data) +
                             " --patch 8 --dim 16 --heads 2 --depth 1 --epochs 2 --batch 4 --seed 1 --out " + q(ckpt))
                    .code == 0);
    }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage and data errors map to exit codes") {
    testing::TempDir dir("cli_codes");
    CHECK(cli(dir, "").code == 1);
    CHECK(cli(dir, "frobnicate").code == 1);
    CHECK(cli(dir, "train --data x").code == 1);
    CHECK(cli(dir, "annotate --images x --out y").code == 1);
    CHECK(cli(dir, "prune-report --sparsities 2").code == 1);
    CHECK(cli(dir, "eval --ckpt " + q(dir / "none.ckpt") + " --data " + q(dir.path())).code == 2);
    write_file(dir / "bad.json", "{\"images\": [");
    const auto r = cli(dir, "annotate --boxes " + q(dir / "bad.json") + " --images " + q(dir.path()) + " --out " +
                                q(dir / "o"));
    CHECK(r.code == 2);
    CHECK(r.out.find("byte offset") != std::string::npos);
}

TEST_CASE("help lists every flag with defaults") {
    testing::TempDir dir("cli_help");
    const auto r = cli(dir, "train --help");
    CHECK(r.code == 0);
    for (const char* flag : {"--depth", "--dim", "--epochs", "--lr", "--step-size", "--gamma", "--batch", "--seed"}) {
        CHECK_MESSAGE(r.out.find(flag) != std::string::npos, flag);
    }
    CHECK(r.out.find("[100]") != std::string::npos);
    CHECK(r.out.find("[0.001]") != std::string::npos);
}

TEST_CASE("annotate") {
    testing::TempDir dir("cli_annotate");
    std::filesystem::create_directories(dir / "empty_masks");
    auto r = cli(dir, "annotate --masks " + q(dir / "empty_masks") + " --images " + q(dir.path()) + " --out " +
                          q(dir / "empty_out"));
    CHECK(r.code == 0);
    const auto empty = json::parse(read_file(dir / "empty_out/manifest.json"));
    CHECK(empty["samples"].empty());
    CHECK(empty["errors"].empty());

    write_ppm(dir / "img/a.ppm", testing::noise_image(384, 384, 1));
    write_file(dir / "ann.json", R"({"images":[{"id":1,"file":"a.ppm","width":384,"height":384},
        {"id":2,"file":"lost.ppm","width":384,"height":384}],
        "boxes":[{"image_id":1,"x":0,"y":0,"w":32,"h":32}]})");
    const std::string args = "annotate --boxes " + q(dir / "ann.json") + " --images " + q(dir / "img") +
                             " --tau 0.5 --mode coverage --out ";
    REQUIRE(cli(dir, args + q(dir / "o1")).code == 0);
    REQUIRE(cli(dir, args + q(dir / "o2")).code == 0);
    const auto labels = read_label_map(dir / "o1/labels/a.txt", 16);
    const std::vector<BoundingBox> box{{0, 0, 32, 32}};
    CHECK(labels == label_from_boxes(PatchGrid::square(384, 16), box, 0.5, OverlapMode::patch_coverage));
    CHECK(labels.fg_count() == 4);
    for (const char* f : {"labels/a.txt", "images/a.ppm", "manifest.json"}) {
        CHECK(read_file(dir / (std::string("o1/") + f)) == read_file(dir / (std::string("o2/") + f)));
    }
    const auto manifest = json::parse(read_file(dir / "o1/manifest.json"));
    REQUIRE(manifest["errors"].size() == 1);
    CHECK(manifest["errors"][0]["id"] == "2");
}

TEST_CASE("synth") {
    testing::TempDir dir("cli_synth");
    REQUIRE(cli(dir, "synth --n 10 --size 64 --patch 16 --seed 5 --out " + q(dir / "a")).code == 0);
    REQUIRE(cli(dir, "synth --n 10 --size 64 --patch 16 --seed 5 --out " + q(dir / "b")).code == 0);
    const auto stems = sorted_stems(dir / "a/images", ".ppm");
    REQUIRE(stems.size() == 10);
    CHECK(sorted_stems(dir / "a/labels", ".txt").size() == 10);
    for (const auto& s : stems) {
        for (const std::string sub : {"images/" + s + ".ppm", "labels/" + s + ".txt", "masks/" + s + ".pgm"}) {
            CHECK(read_file(dir / ("a/" + sub)) == read_file(dir / ("b/" + sub)));
        }
        const auto mask = read_pgm(dir / ("a/masks/" + s + ".pgm"));
        CHECK(read_label_map(dir / ("a/labels/" + s + ".txt"), 16) ==
              label_from_mask(PatchGrid::square(64, 16), mask));
    }
}

TEST_CASE("train with zero epochs writes the initial model") {
    testing::TempDir dir("cli_train0");
    REQUIRE(cli(dir, "synth --n 4 --size 32 --patch 8 --out " + q(dir / "d")).code == 0);
    REQUIRE(cli(dir, "train --data " + q(dir / "d") + " --patch 8 --dim 16 --heads 2 --epochs 0 --seed 7 --out " +
                         q(dir / "m.ckpt"))
                .code == 0);
    const auto ck = load_checkpoint(dir / "m.ckpt");
    const auto init = init_params<float>(ck.config, 7);
    CHECK(ck.optim.step == 0);
    CHECK(encode_checkpoint(ck) == encode_checkpoint({ck.config, init, OptimState::create(ck.config), ck.schedule}));
    CHECK(json::parse(read_file(dir / "m.ckpt.report.json"))["epochs"].empty());
}

TEST_CASE("train reruns and option precedence") {
    testing::TempDir dir("cli_train");
    REQUIRE(cli(dir, "synth --n 8 --size 32 --patch 8 --out " + q(dir / "d")).code == 0);
    const std::string base = "train --quiet --data " + q(dir / "d") + " --patch 8 --dim 16 --heads 2 --depth 1 --batch 4 ";
    REQUIRE(cli(dir, base + "--epochs 2 --seed 3 --out " + q(dir / "a.ckpt")).code == 0);
    REQUIRE(cli(dir, base + "--epochs 2 --seed 3 --out " + q(dir / "b.ckpt")).code == 0);
    CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));
    CHECK(read_file(dir / "a.ckpt.report.json") == read_file(dir / "b.ckpt.report.json"));

    // config file < flags < environment
    write_file(dir / "cfg.toml", "[train]\nepochs = 1\nseed = 3\n");
    REQUIRE(cli(dir, base + "--config " + q(dir / "cfg.toml") + " --out " + q(dir / "c.ckpt")).code == 0);
    CHECK(load_checkpoint(dir / "c.ckpt").optim.epoch == 1);
    REQUIRE(cli(dir, base + "--config " + q(dir / "cfg.toml") + " --epochs 2 --out " + q(dir / "d.ckpt")).code == 0);
    CHECK(read_file(dir / "d.ckpt") == read_file(dir / "a.ckpt"));
    REQUIRE(cli(dir, base + "--epochs 1 --seed 99 --out " + q(dir / "e.ckpt"), "BAVIT_EPOCHS=2 BAVIT_SEED=3").code == 0);
    CHECK(read_file(dir / "e.ckpt") == read_file(dir / "a.ckpt"));
}

TEST_CASE("eval") {
    Fixture fx;
    const auto ck = load_checkpoint(fx.ckpt);

    // A dataset whose labels are the model's own predictions scores 1.0.
    auto self = testing::TempDir("cli_self");
    for (const auto& s : sorted_stems(fx.data / "images", ".ppm")) {
        const auto img = read_ppm(fx.data / ("images/" + s + ".ppm"));
        write_ppm(self / ("images/" + s + ".ppm"), img);
        write_label_map(self / ("labels/" + s + ".txt"), predict_labels(ck.params, ck.config, to_float(img)));
    }
    auto r = cli(fx.dir, "eval --ckpt " + q(fx.ckpt) + " --data " + q(self.path()) + " --json " + q(fx.dir / "p.json"));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("accuracy 1.000000") != std::string::npos);
    CHECK(json::parse(read_file(fx.dir / "p.json"))["accuracy"] == 1.0);

    REQUIRE(cli(fx.dir, "eval --ckpt " + q(fx.ckpt) + " --data " + q(fx.data) + " --json " + q(fx.dir / "a.json")).code == 0);
    REQUIRE(cli(fx.dir, "eval --cca --ckpt " + q(fx.ckpt) + " --data " + q(fx.data) + " --json " + q(fx.dir / "b.json")).code ==
            0);
    const auto plain = json::parse(read_file(fx.dir / "a.json"));
    const auto smoothed = json::parse(read_file(fx.dir / "b.json"));
    for (const char* cls : {"fg", "bg"}) {
        CHECK(plain[cls].contains("precision"));
        CHECK(plain[cls].contains("recall"));
    }
    CHECK(smoothed["fg"]["recall"].get<double>() >= plain["fg"]["recall"].get<double>());
    CHECK(smoothed["cca"] == true);
}

TEST_CASE("prune-report text and json agree") {
    testing::TempDir dir("cli_prune");
    const auto text = cli(dir, "prune-report --json " + q(dir / "rows.json"));
    REQUIRE(text.code == 0);
    const auto rows = json::parse(read_file(dir / "rows.json"));
    REQUIRE(rows.size() == 11);

    std::istringstream in(text.out);
    std::string line;
    std::getline(in, line);  // header
    std::size_t i = 0;
    while (std::getline(in, line) && i < rows.size()) {
        std::istringstream cols(line);
        std::string sp;
        std::string red;
        std::int64_t bavit = 0;
        std::int64_t det = 0;
        std::int64_t pruned = 0;
        std::int64_t combined = 0;
        cols >> sp >> bavit >> det >> pruned >> combined >> red;
        const auto& row = rows[i++];
        CHECK(std::stod(sp) == doctest::Approx(row["sparsity"].get<double>() * 100).epsilon(1e-4));
        CHECK(bavit == row["bavit_tokens"]);
        CHECK(det == row["detector_tokens"]);
        CHECK(pruned == row["pruned_detector_tokens"]);
        CHECK(combined == row["combined_tokens"]);
        CHECK(std::abs(std::stod(red) - row["reduction_pct"].get<double>()) < 5e-4);
    }
    CHECK(i == rows.size());

    REQUIRE(cli(dir, "prune-report --sparsities 0 --bavit-layers 0 --format json").code == 0);
    const auto zero = json::parse(read_file(dir / "cli.log"));
    CHECK(zero[0]["reduction_pct"] == 0.0);
}

TEST_CASE("viz") {
    Fixture fx;
    const auto image = fx.data / "images/synth_000000.ppm";
    auto r = cli(fx.dir, "viz --ckpt " + q(fx.ckpt) + " --image " + q(image) + " --theta 1.0 --out " + q(fx.dir / "v1"));
    REQUIRE(r.code == 0);
    CHECK(read_ppm(fx.dir / "v1/synth_000000_sparse_0.0.ppm") == read_ppm(image));
    CHECK(std::filesystem::exists(fx.dir / "v1/synth_000000_overlay.ppm"));

    auto parse_sparsity = [](const std::filesystem::path& dir) {
        const auto names = sorted_stems(dir, ".ppm");
        for (const auto& n : names) {
            const auto pos = n.find("_sparse_");
            if (pos != std::string::npos) return std::stod(n.substr(pos + 8));
        }
        return -1.0;
    };
    REQUIRE(cli(fx.dir, "viz --ckpt " + q(fx.ckpt) + " --image " + q(image) + " --theta 0.5 --out " + q(fx.dir / "v2")).code == 0);
    REQUIRE(cli(fx.dir, "viz --cca --ckpt " + q(fx.ckpt) + " --image " + q(image) + " --theta 0.5 --out " + q(fx.dir / "v3")).code ==
            0);
    const double plain = parse_sparsity(fx.dir / "v2");
    const double smoothed = parse_sparsity(fx.dir / "v3");
    REQUIRE(plain >= 0.0);
    REQUIRE(smoothed >= 0.0);
    CHECK(smoothed <= plain);  // FG count can only grow, so sparsity can only drop
}

}  // TEST_SUITE
