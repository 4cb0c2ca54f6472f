// bavit: patch annotation, synthetic data, classifier training/evaluation,
// pruning reports and visualisation.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
// Option precedence (lowest to highest): --config file, command-line flags,
// environment variables BAVIT_<FLAG> (e.g. BAVIT_EPOCHS=5, BAVIT_SEED=3).
// --config may appear before or after the subcommand name.

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bavit/checkpoint.hpp"
#include "bavit/data.hpp"
#include "bavit/error.hpp"
#include "bavit/image_io.hpp"
#include "bavit/label_io.hpp"
#include "bavit/net.hpp"
#include "bavit/postproc.hpp"
#include "bavit/prune.hpp"
#include "bavit/train.hpp"
#include "bavit/viz.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- annotate ---------------------------------------------------------------

struct AnnotateArgs {
    std::string boxes;
    std::string masks;
    std::string images;
    int size = 384;
    int patch = 16;
    double tau = bavit::kDefaultBoxThreshold;
    std::string mode = "coverage";
    double min_fraction = bavit::kDefaultMaskFraction;
    std::string out;
};

int run_annotate(const AnnotateArgs& a) {
    if (a.boxes.empty() == a.masks.empty()) throw UsageError("annotate: exactly one of --boxes/--masks is required");
    const bavit::PatchGrid grid = bavit::PatchGrid::square(a.size, a.patch);
    std::unique_ptr<bavit::SampleSource> source;
    if (!a.boxes.empty()) {
        source = std::make_unique<bavit::DetectionDataset>(a.boxes, a.images, grid, a.tau,
                                                           bavit::parse_overlap_mode(a.mode));
    } else {
        source = std::make_unique<bavit::MaskDataset>(a.masks, a.images, grid, a.min_fraction);
    }
    const fs::path out(a.out);
    fs::create_directories(out / "labels");
    fs::create_directories(out / "images");
    json samples = json::array();
    json errors = json::array();
    while (auto outcome = source->next()) {
        if (!outcome->ok()) {
            std::cerr << "warning: " << outcome->error << "\n";
            errors.push_back({{"id", outcome->source_id}, {"error", outcome->error}});
            continue;
        }
        const auto& s = *outcome->sample;
        bavit::write_label_map(out / "labels" / (s.source_id + ".txt"), s.label_map);
        bavit::write_ppm(out / "images" / (s.source_id + ".ppm"), bavit::to_rgb(s.image));
        samples.push_back({{"id", outcome->source_id},
                           {"labels", "labels/" + s.source_id + ".txt"},
                           {"image", "images/" + s.source_id + ".ppm"},
                           {"fg_tokens", s.label_map.fg_count()}});
    }
    const json manifest{{"grid", {{"image_size", a.size}, {"patch_size", a.patch}, {"rows", grid.rows()}, {"cols", grid.cols()}}},
                        {"source", a.boxes.empty() ? "masks" : "boxes"},
                        {"tau", a.tau},
                        {"mode", a.mode},
                        {"min_fraction", a.min_fraction},
                        {"samples", samples},
                        {"errors", errors}};
    bavit::write_file(out / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "annotated " << samples.size() << " images (" << errors.size() << " errors) -> " << out.string() << "\n";
    return kOk;
}

// ---- import-coco ------------------------------------------------------------

int run_import_coco(const std::string& in, const std::string& out) {
    const auto set = bavit::import_coco(bavit::read_file(in));
    bavit::write_file(out, bavit::serialize_annotations(set));
    std::size_t n = 0;
    for (const auto& [id, list] : set.boxes) n += list.size();
    std::cout << "imported " << set.images.size() << " images, " << n << " boxes -> " << out << "\n";
    return kOk;
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
    int n = 100;
    int size = 128;
    int patch = 16;
    std::uint64_t seed = 1;
    int min_shapes = 1;
    int max_shapes = 4;
    std::string out;
};

int run_synth(const SynthArgs& a) {
    if (a.n < 1) throw UsageError("synth: --n must be >= 1");
    bavit::SynthSpec spec;
    spec.image_size = a.size;
    spec.patch_size = a.patch;
    spec.rng_seed = a.seed;
    spec.min_shapes = a.min_shapes;
    spec.max_shapes = a.max_shapes;
    bavit::SyntheticSource source(spec, a.n);
    const fs::path out(a.out);
    json samples = json::array();
    while (auto item = source.next_with_raster()) {
        const auto& s = item->sample;
        bavit::write_ppm(out / "images" / (s.source_id + ".ppm"), bavit::to_rgb(s.image));
        bavit::write_pgm(out / "masks" / (s.source_id + ".pgm"), item->shape_raster);
        bavit::write_label_map(out / "labels" / (s.source_id + ".txt"), s.label_map);
        samples.push_back({{"id", s.source_id}, {"fg_tokens", s.label_map.fg_count()}});
    }
    const json manifest{{"generator", {{"image_size", a.size}, {"patch_size", a.patch}, {"seed", a.seed},
                                       {"min_shapes", a.min_shapes}, {"max_shapes", a.max_shapes}}},
                        {"samples", samples}};
    bavit::write_file(out / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << a.n << " synthetic samples -> " << out.string() << "\n";
    return kOk;
}

// ---- train / eval -----------------------------------------------------------

std::vector<bavit::AnnotatedSample> load_corpus(const std::string& dir, int patch) {
    bavit::LabeledDirDataset dataset(dir, patch);
    auto collected = bavit::collect(dataset);
    for (const auto& f : collected.failures) std::cerr << "warning: " << f.error << "\n";
    if (collected.samples.empty()) throw bavit::DataError("no usable samples in " + dir);
    return std::move(collected.samples);
}

struct TrainArgs {
    std::string data;
    std::string val;
    std::string resume;
    int patch = 16;
    int depth = 2;
    int dim = 192;
    int heads = 3;
    int mlp_ratio = 4;
    int epochs = 100;
    double lr = 1e-3;
    int step_size = 30;
    double gamma = 0.1;
    int batch = 32;
    std::uint64_t seed = 0;
    double clip = 1.0;
    std::string out;
    std::string report;
    bool quiet = false;
};

int run_train(const TrainArgs& a) {
    const auto samples = load_corpus(a.data, a.patch);
    std::vector<bavit::AnnotatedSample> val;
    if (!a.val.empty()) val = load_corpus(a.val, a.patch);

    bavit::TrainOptions options;
    options.epochs = a.epochs;
    options.schedule = {a.lr, a.step_size, a.gamma};
    options.batch_size = a.batch;
    options.seed = a.seed;
    options.clip_norm = a.clip;

    std::optional<bavit::Checkpoint> resumed;
    bavit::ModelConfig config;
    if (!a.resume.empty()) {
        resumed = bavit::load_checkpoint(a.resume);
        config = resumed->config;
        options.schedule = resumed->schedule;
    } else {
        config.image_size = samples.front().label_map.grid().image_width();
        config.patch_size = a.patch;
        config.embed_dim = a.dim;
        config.depth = a.depth;
        config.heads = a.heads;
        config.mlp_ratio = a.mlp_ratio;
    }
    options.on_epoch = [&](const bavit::EpochStats& e, const bavit::ModelParams<float>& params) {
        if (!a.quiet) {
            std::fprintf(stderr, "epoch %3d  lr %.2e  loss %.5f  train_acc %.4f", e.epoch, e.lr, e.loss, e.accuracy);
            if (!val.empty()) std::fprintf(stderr, "  val_acc %.4f", bavit::evaluate(params, config, val));
            std::fprintf(stderr, "  (%.1fs)\n", e.wall_seconds);
        }
        return true;
    };
    std::optional<bavit::Trainer> trainer;
    if (resumed) {
        trainer.emplace(config, options, std::move(resumed->params), std::move(resumed->optim));
    } else {
        trainer.emplace(config, options);
    }

    const std::string report_path = a.report.empty() ? a.out + ".report.json" : a.report;
    auto save = [&](const bavit::ModelParams<float>& params, const bavit::OptimState& state,
                    const bavit::TrainReport& report) {
        bavit::save_checkpoint(a.out, {config, params, state, options.schedule});
        bavit::write_file(report_path, report.to_json());
    };
    try {
        const auto report = trainer->run(samples);
        save(trainer->params(), trainer->state(), report);
    } catch (const bavit::DivergenceError& e) {
        save(e.last_good_params(), e.last_good_state(), e.report());
        std::cerr << "error: " << e.what() << " (last good state saved to " << a.out << ")\n";
        return kNumeric;
    }

    std::cout << "params " << bavit::count_params(config) << ", epochs " << trainer->state().epoch << " -> " << a.out
              << "\n";
    return kOk;
}

struct EvalArgs {
    std::string ckpt;
    std::string data;
    bool cca = false;
    int cca_steps = 3;
    int cca_threshold = 2;
    std::string json_path;
};

int run_eval(const EvalArgs& a) {
    const auto ck = bavit::load_checkpoint(a.ckpt);
    const auto samples = load_corpus(a.data, ck.config.patch_size);
    std::optional<bavit::CcaConfig> cca;
    if (a.cca) {
        cca.emplace();
        cca->steps = a.cca_steps;
        cca->threshold = a.cca_threshold;
    }
    const auto report = bavit::evaluate_report(ck.params, ck.config, samples, 32, cca);
    std::printf("accuracy %.6f  (%lld tokens, fg precision %.4f recall %.4f, bg precision %.4f recall %.4f%s)\n",
                report.accuracy(), static_cast<long long>(report.tokens), report.fg_precision(), report.fg_recall(),
                report.bg_precision(), report.bg_recall(), a.cca ? ", cca" : "");
    if (!a.json_path.empty()) {
        json j = json::parse(report.to_json());
        j["cca"] = a.cca;
        if (a.cca) j["cca_steps"] = a.cca_steps;
        const std::string text = j.dump(2) + "\n";
        if (a.json_path == "-") {
            std::cout << text;
        } else {
            bavit::write_file(a.json_path, text);
        }
    }
    return kOk;
}

// ---- prune-report -----------------------------------------------------------

struct PruneArgs {
    std::vector<double> sparsities = {0.46, 0.43, 0.40, 0.39, 0.37, 0.35, 0.32, 0.29, 0.05, 0.02, 0.0};
    std::int64_t detector_tokens = 1024;
    std::int64_t detector_layers = 12;
    std::int64_t bavit_tokens = 576;
    std::int64_t bavit_layers = 2;
    std::string format = "text";
    std::string json_path;
};

int run_prune_report(const PruneArgs& a) {
    const bavit::TokenBudget budget{a.detector_tokens, a.detector_layers, a.bavit_tokens, a.bavit_layers};
    for (double s : a.sparsities) {
        if (!(s >= 0.0 && s <= 1.0)) throw UsageError("prune-report: sparsities must be in [0,1]");
    }
    const auto rows = bavit::table2_report(a.sparsities, budget);
    if (a.format == "json") {
        std::cout << bavit::prune_rows_json(rows);
    } else {
        std::cout << bavit::format_prune_table(rows);
    }
    if (!a.json_path.empty()) bavit::write_file(a.json_path, bavit::prune_rows_json(rows));
    return kOk;
}

// ---- viz ----------------------------------------------------------------------

struct VizArgs {
    std::string ckpt;
    std::string image;
    double theta = 0.5;
    bool cca = false;
    int cca_steps = 3;
    double alpha = 0.45;
    bool grid = false;
    std::string out;
};

int run_viz(const VizArgs& a) {
    const auto ck = bavit::load_checkpoint(a.ckpt);
    const bavit::ModelConfig& config = ck.config;
    bavit::RgbImage raw = bavit::read_ppm(a.image);
    bavit::FloatImage input = bavit::resize_bilinear(bavit::to_float(raw), config.image_size, config.image_size);
    if (raw.width != config.image_size || raw.height != config.image_size) raw = bavit::to_rgb(input);

    bavit::Batch batch = bavit::pack_batch({bavit::AnnotatedSample{input, bavit::TokenLabelMap(config.grid()), "viz"}},
                                           std::vector<std::size_t>{0});
    const auto probs = bavit::predict_probs(ck.params, config, batch);
    bavit::PruneMask mask = bavit::mask_from_probs(probs, config.grid(), a.theta);
    if (a.cca) {
        bavit::CcaConfig cc;
        cc.steps = a.cca_steps;
        mask = bavit::PruneMask::from_labels(bavit::cca(mask.as_labels(), cc));
    }
    bavit::RenderSpec spec;
    spec.alpha = a.alpha;
    spec.grid_lines = a.grid;
    const std::string stem = fs::path(a.image).stem().string();
    const fs::path out(a.out);
    const fs::path overlay_path = out / (stem + "_overlay.ppm");
    const fs::path sparse_path = out / bavit::sparse_filename(stem, mask.sparsity());
    bavit::write_ppm(overlay_path, bavit::render_overlay(raw, mask.as_labels(), spec));
    bavit::write_ppm(sparse_path, bavit::render_sparse(raw, mask, spec));
    std::printf("sparsity %.4f  fg_tokens %d/%d\n%s\n%s\n", mask.sparsity(), mask.kept_count(),
                config.tokens(), overlay_path.string().c_str(), sparse_path.string().c_str());
    return kOk;
}

// ---- model-info -------------------------------------------------------------

int run_model_info(const bavit::ModelConfig& c) {
    const auto f = bavit::flop_breakdown(c);
    const json j{{"config", {{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"embed_dim", c.embed_dim},
                             {"depth", c.depth}, {"heads", c.heads}, {"mlp_ratio", c.mlp_ratio}, {"tokens", c.tokens()}}},
                 {"params", bavit::count_params(c)},
                 {"flops", {{"total", f.total()}, {"matmul", f.matmul_total()}, {"elementwise", f.elementwise},
                            {"patch_embed", f.patch_embed}, {"qkv", f.qkv}, {"attention_scores", f.attention_scores},
                            {"attention_values", f.attention_values}, {"projection", f.projection}, {"mlp", f.mlp},
                            {"head", f.head}}}};
    std::cout << j.dump(2) << "\n";
    return kOk;
}

// ---- environment overrides ----------------------------------------------------

std::string env_name(const std::string& long_name) {
    std::string out = "BAVIT_";
    for (char ch : long_name) out.push_back(ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    return out;
}

/// Moves "--config FILE" / "--config=FILE" ahead of the subcommand name.
void hoist_config(std::vector<std::string>& args) {
    for (std::size_t i = 2; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            std::vector<std::string> moved{args[i], args[i + 1]};
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
            args.insert(args.begin() + 1, moved.begin(), moved.end());
            return;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            std::string moved = args[i];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            args.insert(args.begin() + 1, moved);
            return;
        }
    }
}

/// Appends "--flag=value" for every BAVIT_<FLAG> variable so that, with
/// take-last semantics, the environment wins over the command line.
std::vector<std::string> with_env_overrides(CLI::App& app, std::vector<std::string> args) {
    hoist_config(args);
    CLI::App* sub = nullptr;
    for (std::size_t i = 1; i < args.size() && sub == nullptr; ++i) {
        for (CLI::App* candidate : app.get_subcommands({})) {
            if (candidate->get_name() == args[i]) sub = candidate;
        }
    }
    if (sub == nullptr) return args;
    for (const CLI::Option* opt : sub->get_options()) {
        const auto& names = opt->get_lnames();
        if (names.empty() || names.front() == "help") continue;
        if (const char* value = std::getenv(env_name(names.front()).c_str())) {
            args.push_back("--" + names.front() + "=" + value);
        }
    }
    return args;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Background-aware token classification and pruning toolkit"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_config("--config", "", "TOML-style key = value file; [subcommand] sections");
    app.require_subcommand(1);

    AnnotateArgs annotate;
    auto* cmd_annotate = app.add_subcommand("annotate", "Per-patch FG/BG labels from boxes or masks");
    auto* opt_boxes = cmd_annotate->add_option("--boxes", annotate.boxes, "Annotation JSON file");
    auto* opt_masks = cmd_annotate->add_option("--masks", annotate.masks, "Directory of PGM masks");
    opt_boxes->excludes(opt_masks);
    cmd_annotate->add_option("--images", annotate.images, "Directory of PPM images")->required();
    cmd_annotate->add_option("--size", annotate.size, "Grid image size (square)")->capture_default_str();
    cmd_annotate->add_option("--patch", annotate.patch, "Patch size")->capture_default_str();
    cmd_annotate->add_option("--tau", annotate.tau, "Box overlap threshold (>=)")->capture_default_str();
    cmd_annotate->add_option("--mode", annotate.mode, "Overlap mode: coverage | jaccard")
        ->check(CLI::IsMember({"coverage", "patch_coverage", "jaccard"}))
        ->capture_default_str();
    cmd_annotate->add_option("--min-fraction", annotate.min_fraction, "Mask FG fraction threshold (>)")
        ->capture_default_str();
    cmd_annotate->add_option("--out", annotate.out, "Output directory")->required();

    std::string coco_in;
    std::string coco_out;
    auto* cmd_import = app.add_subcommand("import-coco", "Convert a COCO instances file to the annotation schema");
    cmd_import->add_option("--in", coco_in, "COCO JSON")->required();
    cmd_import->add_option("--out", coco_out, "Output annotation JSON")->required();

    SynthArgs synth;
    auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic shapes corpus");
    cmd_synth->add_option("--n", synth.n, "Number of images")->capture_default_str();
    cmd_synth->add_option("--size", synth.size, "Image size")->capture_default_str();
    cmd_synth->add_option("--patch", synth.patch, "Patch size")->capture_default_str();
    cmd_synth->add_option("--seed", synth.seed, "RNG seed")->capture_default_str();
    cmd_synth->add_option("--min-shapes", synth.min_shapes, "Minimum shapes per image")->capture_default_str();
    cmd_synth->add_option("--max-shapes", synth.max_shapes, "Maximum shapes per image")->capture_default_str();
    cmd_synth->add_option("--out", synth.out, "Output directory")->required();

    TrainArgs tr;
    auto* cmd_train = app.add_subcommand("train", "Train the token classifier");
    cmd_train->add_option("--data", tr.data, "Corpus directory (images/, labels/)")->required();
    cmd_train->add_option("--val", tr.val, "Validation corpus directory");
    cmd_train->add_option("--resume", tr.resume, "Continue from a checkpoint (its config and schedule win)");
    cmd_train->add_option("--patch", tr.patch, "Patch size")->capture_default_str();
    cmd_train->add_option("--depth", tr.depth, "Encoder layers")->capture_default_str();
    cmd_train->add_option("--dim", tr.dim, "Embedding size")->capture_default_str();
    cmd_train->add_option("--heads", tr.heads, "Attention heads")->capture_default_str();
    cmd_train->add_option("--mlp-ratio", tr.mlp_ratio, "MLP hidden/embedding ratio")->capture_default_str();
    cmd_train->add_option("--epochs", tr.epochs, "Total epochs")->capture_default_str();
    cmd_train->add_option("--lr", tr.lr, "Base learning rate")->capture_default_str();
    cmd_train->add_option("--step-size", tr.step_size, "Epochs per LR decay")->capture_default_str();
    cmd_train->add_option("--gamma", tr.gamma, "LR decay factor")->capture_default_str();
    cmd_train->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
    cmd_train->add_option("--seed", tr.seed, "Init and shuffle seed")->capture_default_str();
    cmd_train->add_option("--clip", tr.clip, "Global gradient-norm clip (<=0 disables)")->capture_default_str();
    cmd_train->add_option("--out", tr.out, "Checkpoint path")->required();
    cmd_train->add_option("--report", tr.report, "Report JSON path (default <out>.report.json)");
    cmd_train->add_flag("--quiet", tr.quiet, "No per-epoch log");

    EvalArgs ev;
    auto* cmd_eval = app.add_subcommand("eval", "Token accuracy of a checkpoint");
    cmd_eval->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
    cmd_eval->add_option("--data", ev.data, "Corpus directory")->required();
    cmd_eval->add_flag("--cca", ev.cca, "Apply neighbourhood post-processing to predictions");
    cmd_eval->add_option("--cca-steps", ev.cca_steps, "Post-processing steps")->capture_default_str();
    cmd_eval->add_option("--cca-threshold", ev.cca_threshold, "Neighbour count threshold (>)")->capture_default_str();
    cmd_eval->add_option("--json", ev.json_path, "Write JSON report to this path ('-' for stdout)");

    PruneArgs pr;
    auto* cmd_prune = app.add_subcommand("prune-report", "Layer-weighted token accounting per sparsity");
    cmd_prune->add_option("--sparsities", pr.sparsities, "Comma-separated sparsities in [0,1]")
        ->delimiter(',')
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
        ->capture_default_str();
    cmd_prune->add_option("--detector-tokens", pr.detector_tokens, "Detector tokens per layer")->capture_default_str();
    cmd_prune->add_option("--detector-layers", pr.detector_layers, "Detector layers")->capture_default_str();
    cmd_prune->add_option("--bavit-tokens", pr.bavit_tokens, "Classifier tokens per layer")->capture_default_str();
    cmd_prune->add_option("--bavit-layers", pr.bavit_layers, "Classifier layers")->capture_default_str();
    cmd_prune->add_option("--format", pr.format, "stdout format: text | json")
        ->check(CLI::IsMember({"text", "json"}))
        ->capture_default_str();
    cmd_prune->add_option("--json", pr.json_path, "Also write JSON rows to this path");

    VizArgs vz;
    auto* cmd_viz = app.add_subcommand("viz", "Overlay and sparse renderings for one image");
    cmd_viz->add_option("--ckpt", vz.ckpt, "Checkpoint")->required();
    cmd_viz->add_option("--image", vz.image, "Input PPM")->required();
    cmd_viz->add_option("--theta", vz.theta, "Prune tokens with P(BG) > theta")->capture_default_str();
    cmd_viz->add_flag("--cca", vz.cca, "Apply neighbourhood post-processing before rendering");
    cmd_viz->add_option("--cca-steps", vz.cca_steps, "Post-processing steps")->capture_default_str();
    cmd_viz->add_option("--alpha", vz.alpha, "Overlay tint opacity")->capture_default_str();
    cmd_viz->add_flag("--grid", vz.grid, "Draw patch grid lines on the overlay");
    cmd_viz->add_option("--out", vz.out, "Output directory")->required();

    bavit::ModelConfig info = bavit::ModelConfig::small();
    auto* cmd_info = app.add_subcommand("model-info", "Parameter and FLOP counts for a configuration");
    cmd_info->add_option("--size", info.image_size, "Image size")->capture_default_str();
    cmd_info->add_option("--patch", info.patch_size, "Patch size")->capture_default_str();
    cmd_info->add_option("--dim", info.embed_dim, "Embedding size")->capture_default_str();
    cmd_info->add_option("--depth", info.depth, "Encoder layers")->capture_default_str();
    cmd_info->add_option("--heads", info.heads, "Attention heads")->capture_default_str();
    cmd_info->add_option("--mlp-ratio", info.mlp_ratio, "MLP ratio")->capture_default_str();

    std::vector<std::string> args(argv, argv + argc);
    args = with_env_overrides(app, std::move(args));
    std::vector<const char*> cargs;
    for (const auto& s : args) cargs.push_back(s.c_str());

    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*cmd_annotate) return run_annotate(annotate);
        if (*cmd_import) return run_import_coco(coco_in, coco_out);
        if (*cmd_synth) return run_synth(synth);
        if (*cmd_train) return run_train(tr);
        if (*cmd_eval) return run_eval(ev);
        if (*cmd_prune) return run_prune_report(pr);
        if (*cmd_viz) return run_viz(vz);
        if (*cmd_info) return run_model_info(info);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const bavit::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumeric;
    } catch (const bavit::Error& e) {
        std::cerr << "error: " << e.what();
        if (const auto* de = dynamic_cast<const bavit::DataError*>(&e); de && de->byte_offset()) {
            std::cerr << " (byte offset " << *de->byte_offset() << ")";
        }
        std::cerr << "\n";
        return kData;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }
    return kUsage;
}
