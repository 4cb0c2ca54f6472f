#include "bavit/data.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>

#include <json.hpp>

#include "bavit/error.hpp"
#include "bavit/label_io.hpp"

namespace bavit {

using nlohmann::json;

CollectedSamples collect(SampleSource& source) {
    CollectedSamples out;
    while (auto outcome = source.next()) {
        if (outcome->ok()) {
            out.samples.push_back(std::move(*outcome->sample));
        } else {
            out.failures.push_back(std::move(*outcome));
        }
    }
    return out;
}

namespace {

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("annotation JSON: ") + e.what(), e.byte);
    }
}

template <typename T>
T field(const json& obj, const char* key, const char* context) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw DataError(std::string(context) + ": missing field '" + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw DataError(std::string(context) + ": field '" + key + "' has the wrong type");
    }
}

const json& array_field(const json& root, const char* key) {
    const auto it = root.find(key);
    if (it == root.end() || !it->is_array()) {
        throw DataError(std::string("annotation JSON: top-level '") + key + "' must be an array");
    }
    return *it;
}

}  // namespace

AnnotationSet parse_annotations(const std::string& json_text) {
    const json root = parse_json(json_text);
    if (!root.is_object()) throw DataError("annotation JSON: top level must be an object");
    AnnotationSet set;
    for (const auto& img : array_field(root, "images")) {
        set.images.push_back({field<std::int64_t>(img, "id", "images[]"), field<std::string>(img, "file", "images[]"),
                              field<int>(img, "width", "images[]"), field<int>(img, "height", "images[]")});
        set.boxes.try_emplace(set.images.back().id);
    }
    if (root.contains("boxes")) {
        for (const auto& box : array_field(root, "boxes")) {
            set.boxes[field<std::int64_t>(box, "image_id", "boxes[]")].push_back(
                {field<double>(box, "x", "boxes[]"), field<double>(box, "y", "boxes[]"),
                 field<double>(box, "w", "boxes[]"), field<double>(box, "h", "boxes[]")});
        }
    }
    return set;
}

std::string serialize_annotations(const AnnotationSet& set) {
    json images = json::array();
    json boxes = json::array();
    for (const auto& img : set.images) {
        images.push_back({{"id", img.id}, {"file", img.file}, {"width", img.width}, {"height", img.height}});
    }
    for (const auto& [id, list] : set.boxes) {
        for (const auto& b : list) boxes.push_back({{"image_id", id}, {"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}});
    }
    return json{{"images", images}, {"boxes", boxes}}.dump(1) + "\n";
}

AnnotationSet import_coco(const std::string& coco_json_text) {
    const json root = parse_json(coco_json_text);
    if (!root.is_object()) throw DataError("COCO JSON: top level must be an object");
    AnnotationSet set;
    for (const auto& img : array_field(root, "images")) {
        set.images.push_back({field<std::int64_t>(img, "id", "images[]"),
                              field<std::string>(img, "file_name", "images[]"), field<int>(img, "width", "images[]"),
                              field<int>(img, "height", "images[]")});
        set.boxes.try_emplace(set.images.back().id);
    }
    if (root.contains("annotations")) {
        for (const auto& ann : array_field(root, "annotations")) {
            const auto bbox = field<std::vector<double>>(ann, "bbox", "annotations[]");
            if (bbox.size() != 4) throw DataError("annotations[]: bbox must have 4 numbers");
            set.boxes[field<std::int64_t>(ann, "image_id", "annotations[]")].push_back(
                {bbox[0], bbox[1], bbox[2], bbox[3]});
        }
    }
    return set;
}

BoundingBox scale_box(const BoxAnnotation& box, double sx, double sy) {
    return {static_cast<int>(std::lround(box.x * sx)), static_cast<int>(std::lround(box.y * sy)),
            static_cast<int>(std::lround((box.x + box.w) * sx)), static_cast<int>(std::lround((box.y + box.h) * sy))};
}

// ---- detection --------------------------------------------------------------

DetectionDataset::DetectionDataset(const std::filesystem::path& annotation_file, std::filesystem::path image_dir,
                                   PatchGrid grid, double tau, OverlapMode mode)
    : DetectionDataset(
          [&] {
              try {
                  return parse_annotations(read_file(annotation_file));
              } catch (const DataError& e) {
                  throw DataError(annotation_file.string() + ": " + e.what(), e.byte_offset());
              }
          }(),
          std::move(image_dir), grid, tau, mode) {}

DetectionDataset::DetectionDataset(AnnotationSet annotations, std::filesystem::path image_dir, PatchGrid grid,
                                   double tau, OverlapMode mode)
    : annotations_(std::move(annotations)), image_dir_(std::move(image_dir)), grid_(grid), tau_(tau), mode_(mode) {}

std::optional<LoadOutcome> DetectionDataset::next() {
    if (cursor_ >= annotations_.images.size()) return std::nullopt;
    const ImageEntry& entry = annotations_.images[cursor_++];
    LoadOutcome outcome;
    outcome.source_id = std::to_string(entry.id);
    try {
        const RgbImage raw = read_ppm(image_dir_ / entry.file);
        if ((entry.width > 0 && entry.width != raw.width) || (entry.height > 0 && entry.height != raw.height)) {
            throw DataError("declared size " + std::to_string(entry.width) + "x" + std::to_string(entry.height) +
                            " differs from file size " + std::to_string(raw.width) + "x" +
                            std::to_string(raw.height));
        }
        const double sx = static_cast<double>(grid_.image_width()) / raw.width;
        const double sy = static_cast<double>(grid_.image_height()) / raw.height;
        std::vector<BoundingBox> boxes;
        for (const auto& b : annotations_.boxes[entry.id]) {
            const BoundingBox scaled = scale_box(b, sx, sy);
            if (scaled.valid()) boxes.push_back(scaled);  // sub-pixel boxes vanish after scaling
        }
        AnnotatedSample sample;
        sample.image = resize_bilinear(to_float(raw), grid_.image_width(), grid_.image_height());
        sample.label_map = label_from_boxes(grid_, boxes, tau_, mode_);
        sample.source_id = std::filesystem::path(entry.file).stem().string();
        outcome.sample = std::move(sample);
    } catch (const Error& e) {
        outcome.error = "image " + outcome.source_id + ": " + e.what();
    }
    return outcome;
}

// ---- masks ------------------------------------------------------------------

std::vector<std::string> sorted_stems(const std::filesystem::path& dir, const std::string& extension) {
    if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<std::string> stems;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == extension) {
            stems.push_back(entry.path().stem().string());
        }
    }
    std::sort(stems.begin(), stems.end());
    return stems;
}

MaskDataset::MaskDataset(std::filesystem::path mask_dir, std::filesystem::path image_dir, PatchGrid grid,
                         double min_fraction)
    : mask_dir_(std::move(mask_dir)),
      image_dir_(std::move(image_dir)),
      grid_(grid),
      min_fraction_(min_fraction),
      stems_(sorted_stems(image_dir_, ".ppm")) {}

std::optional<LoadOutcome> MaskDataset::next() {
    if (cursor_ >= stems_.size()) return std::nullopt;
    const std::string& stem = stems_[cursor_++];
    LoadOutcome outcome;
    outcome.source_id = stem;
    const auto mask_path = mask_dir_ / (stem + ".pgm");
    if (!std::filesystem::exists(mask_path)) {
        outcome.error = "image " + stem + ": missing mask " + mask_path.string();
        return outcome;
    }
    RgbImage raw;
    SegMask mask;
    try {
        raw = read_ppm(image_dir_ / (stem + ".ppm"));
        mask = read_pgm(mask_path);
    } catch (const DataError& e) {
        outcome.error = "image " + stem + ": " + e.what();
        return outcome;
    }
    if (mask.width != raw.width || mask.height != raw.height) {
        throw DataError("mask " + mask_path.string() + " is " + std::to_string(mask.width) + "x" +
                        std::to_string(mask.height) + " but its image is " + std::to_string(raw.width) + "x" +
                        std::to_string(raw.height));
    }
    AnnotatedSample sample;
    sample.image = resize_bilinear(to_float(raw), grid_.image_width(), grid_.image_height());
    sample.label_map =
        label_from_mask(grid_, resize_nearest(mask, grid_.image_width(), grid_.image_height()), min_fraction_);
    sample.source_id = stem;
    outcome.sample = std::move(sample);
    return outcome;
}

// ---- labeled corpus directory ------------------------------------------------

LabeledDirDataset::LabeledDirDataset(std::filesystem::path root, int patch_size)
    : root_(std::move(root)), patch_size_(patch_size), stems_(sorted_stems(root_ / "images", ".ppm")) {}

std::optional<LoadOutcome> LabeledDirDataset::next() {
    if (cursor_ >= stems_.size()) return std::nullopt;
    const std::string& stem = stems_[cursor_++];
    LoadOutcome outcome;
    outcome.source_id = stem;
    try {
        const RgbImage raw = read_ppm(root_ / "images" / (stem + ".ppm"));
        TokenLabelMap labels = read_label_map(root_ / "labels" / (stem + ".txt"), patch_size_);
        if (labels.grid().image_width() != raw.width || labels.grid().image_height() != raw.height) {
            throw GeometryError("label grid does not match image size");
        }
        outcome.sample = AnnotatedSample{to_float(raw), std::move(labels), stem};
    } catch (const Error& e) {
        outcome.error = "image " + stem + ": " + e.what();
    }
    return outcome;
}

// ---- synthetic ----------------------------------------------------------------

namespace {

struct Shape {
    bool ellipse = false;
    double cx = 0, cy = 0, rx = 0, ry = 0;
    float color[3] = {0, 0, 0};

    bool contains(double px, double py) const {
        const double dx = (px - cx) / rx;
        const double dy = (py - cy) / ry;
        return ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
    }
};

}  // namespace

SyntheticSource::SyntheticSource(SynthSpec spec, int count)
    : spec_(spec), grid_(PatchGrid::square(spec.image_size, spec.patch_size)), count_(count), rng_(spec.rng_seed) {
    if (spec.min_shapes < 0 || spec.max_shapes < spec.min_shapes) {
        throw std::invalid_argument("synthetic: invalid shapes-per-image range");
    }
    if (!spec.rectangles && !spec.ellipses && spec.max_shapes > 0) {
        throw std::invalid_argument("synthetic: no shape kinds enabled");
    }
}

std::optional<LoadOutcome> SyntheticSource::next() {
    auto item = next_with_raster();
    if (!item) return std::nullopt;
    LoadOutcome outcome;
    outcome.source_id = item->sample.source_id;
    outcome.sample = std::move(item->sample);
    return outcome;
}

std::optional<SynthSample> SyntheticSource::next_with_raster() {
    if (produced_ >= count_) return std::nullopt;
    const int n = spec_.image_size;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%06d", produced_++);

    // Background: dark low-saturation base with a low-frequency ripple and pixel noise.
    const double base = rng_.uniform(0.08, 0.26);
    double tint[3];
    for (double& t : tint) t = rng_.uniform(-0.04, 0.04);
    const double fx = rng_.uniform(0.5, 3.0) * 2 * 3.14159265358979 / n;
    const double fy = rng_.uniform(0.5, 3.0) * 2 * 3.14159265358979 / n;
    const double phase = rng_.uniform(0.0, 6.283);

    std::vector<Shape> shapes(static_cast<std::size_t>(rng_.uniform_int(spec_.min_shapes, spec_.max_shapes)));
    for (auto& s : shapes) {
        s.ellipse = spec_.rectangles && spec_.ellipses ? rng_.uniform() < 0.5 : spec_.ellipses;
        s.cx = rng_.uniform(0.0, n);
        s.cy = rng_.uniform(0.0, n);
        s.rx = rng_.uniform(n / 16.0, n / 5.0);
        s.ry = rng_.uniform(n / 16.0, n / 5.0);
        for (float& c : s.color) c = static_cast<float>(rng_.uniform(0.55, 1.0));
    }

    SynthSample out;
    out.shape_raster = SegMask(n, n);
    FloatImage image(n, n);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            float* px = image.at(x, y);
            const double ripple = 0.04 * std::sin(fx * x + phase) * std::cos(fy * y);
            for (int ch = 0; ch < 3; ++ch) {
                px[ch] = static_cast<float>(std::clamp(base + tint[ch] + ripple + rng_.uniform(-0.06, 0.06), 0.0, 1.0));
            }
            // later shapes paint over earlier ones
            for (std::size_t i = shapes.size(); i-- > 0;) {
                if (shapes[i].contains(x + 0.5, y + 0.5)) {
                    out.shape_raster.at(x, y) = static_cast<std::uint8_t>(i + 1);
                    for (int ch = 0; ch < 3; ++ch) {
                        px[ch] = std::clamp(shapes[i].color[ch] + static_cast<float>(rng_.uniform(-0.03, 0.03)),
                                            0.0f, 1.0f);
                    }
                    break;
                }
            }
        }
    }
    out.sample.image = std::move(image);
    out.sample.label_map = label_from_mask(grid_, out.shape_raster, kDefaultMaskFraction);
    out.sample.source_id = id;
    return out;
}

std::vector<SynthSample> generate_synthetic(const SynthSpec& spec, int count) {
    if (count < 1) throw std::invalid_argument("generate_synthetic: count must be >= 1");
    SyntheticSource source(spec, count);
    std::vector<SynthSample> out;
    out.reserve(static_cast<std::size_t>(count));
    while (auto s = source.next_with_raster()) out.push_back(std::move(*s));
    return out;
}

// ---- batching -------------------------------------------------------------------

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.next_u64() % i;
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

Batch pack_batch(const std::vector<AnnotatedSample>& samples, std::span<const std::size_t> indices) {
    if (indices.empty()) throw std::invalid_argument("pack_batch: empty batch");
    Batch batch;
    batch.grid = samples.at(indices[0]).label_map.grid();
    batch.size = static_cast<int>(indices.size());
    batch.images.reserve(batch.image_stride() * indices.size());
    batch.labels.reserve(static_cast<std::size_t>(batch.grid.token_count()) * indices.size());
    for (std::size_t idx : indices) {
        const AnnotatedSample& s = samples.at(idx);
        if (!(s.label_map.grid() == batch.grid) || s.image.width != batch.grid.image_width() ||
            s.image.height != batch.grid.image_height()) {
            throw GeometryError("pack_batch: sample " + s.source_id + " has a different grid geometry");
        }
        batch.images.insert(batch.images.end(), s.image.values.begin(), s.image.values.end());
        batch.labels.insert(batch.labels.end(), s.label_map.labels().begin(), s.label_map.labels().end());
        batch.source_ids.push_back(s.source_id);
    }
    return batch;
}

std::vector<Batch> make_batches(const std::vector<AnnotatedSample>& samples, int batch_size,
                                std::uint64_t shuffle_seed) {
    if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
    const auto order = shuffled_order(samples.size(), shuffle_seed);
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t len = std::min(order.size() - start, static_cast<std::size_t>(batch_size));
        batches.push_back(pack_batch(samples, std::span(order).subspan(start, len)));
    }
    return batches;
}

}  // namespace bavit
