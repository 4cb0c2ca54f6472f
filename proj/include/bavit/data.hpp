#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bavit/image_io.hpp"
#include "bavit/patch_labeling.hpp"
#include "bavit/rng.hpp"

namespace bavit {

struct AnnotatedSample {
    FloatImage image;  // values in [0,1], sized to label_map.grid()
    TokenLabelMap label_map;
    std::string source_id;
};

/// B images sharing one grid; images are B x H x W x 3, labels B x M.
struct Batch {
    PatchGrid grid;
    int size = 0;
    std::vector<float> images;
    std::vector<std::uint8_t> labels;
    std::vector<std::string> source_ids;

    std::size_t image_stride() const {
        return static_cast<std::size_t>(grid.image_width()) * grid.image_height() * 3;
    }
    int tokens() const { return grid.token_count(); }
};

/// Result of loading one sample: either a sample or a per-sample error message.
/// For detection data source_id is the annotation image id and the sample's own
/// id is the image file stem.
struct LoadOutcome {
    std::string source_id;
    std::optional<AnnotatedSample> sample;
    std::string error;

    bool ok() const { return sample.has_value(); }
};

/// Pull-style sample stream.
class SampleSource {
public:
    virtual ~SampleSource() = default;
    /// Returns std::nullopt when exhausted.
    virtual std::optional<LoadOutcome> next() = 0;
};

struct CollectedSamples {
    std::vector<AnnotatedSample> samples;
    std::vector<LoadOutcome> failures;
};

CollectedSamples collect(SampleSource& source);

// ---- detection annotations ------------------------------------------------

/// COCO-convention box: top-left corner plus size, in source-image pixels.
struct BoxAnnotation {
    double x = 0;
    double y = 0;
    double w = 0;
    double h = 0;
};

struct ImageEntry {
    std::int64_t id = 0;
    std::string file;
    int width = 0;
    int height = 0;
};

struct AnnotationSet {
    std::vector<ImageEntry> images;
    std::map<std::int64_t, std::vector<BoxAnnotation>> boxes;
};

/// Parses the annotation JSON schema
///   {"images": [{"id", "file", "width", "height"}], "boxes": [{"image_id", "x", "y", "w", "h"}]}.
/// Throws DataError carrying the byte offset on malformed JSON.
AnnotationSet parse_annotations(const std::string& json_text);
std::string serialize_annotations(const AnnotationSet& set);

/// Reads only images[].{id,file_name,width,height} and annotations[].{image_id,bbox}
/// from a COCO instances file.
AnnotationSet import_coco(const std::string& coco_json_text);

/// Scales a source-space box by (sx, sy) and rounds to the integer pixel model.
BoundingBox scale_box(const BoxAnnotation& box, double sx, double sy);

class DetectionDataset final : public SampleSource {
public:
    /// Parses the annotation file eagerly (fatal on malformed JSON); images load lazily.
    DetectionDataset(const std::filesystem::path& annotation_file, std::filesystem::path image_dir,
                     PatchGrid grid, double tau = kDefaultBoxThreshold,
                     OverlapMode mode = OverlapMode::patch_coverage);
    DetectionDataset(AnnotationSet annotations, std::filesystem::path image_dir, PatchGrid grid,
                     double tau = kDefaultBoxThreshold, OverlapMode mode = OverlapMode::patch_coverage);

    std::optional<LoadOutcome> next() override;
    std::size_t size() const { return annotations_.images.size(); }

private:
    AnnotationSet annotations_;
    std::filesystem::path image_dir_;
    PatchGrid grid_;
    double tau_;
    OverlapMode mode_;
    std::size_t cursor_ = 0;
};

/// Pairs <image_dir>/<stem>.ppm with <mask_dir>/<stem>.pgm, in sorted stem order.
class MaskDataset final : public SampleSource {
public:
    MaskDataset(std::filesystem::path mask_dir, std::filesystem::path image_dir, PatchGrid grid,
                double min_fraction = kDefaultMaskFraction);

    std::optional<LoadOutcome> next() override;
    std::size_t size() const { return stems_.size(); }

private:
    std::filesystem::path mask_dir_;
    std::filesystem::path image_dir_;
    PatchGrid grid_;
    double min_fraction_;
    std::vector<std::string> stems_;
    std::size_t cursor_ = 0;
};

/// A corpus directory as written by the synth/annotate tools:
/// images/<stem>.ppm and labels/<stem>.txt. Images must already match the grid.
class LabeledDirDataset final : public SampleSource {
public:
    LabeledDirDataset(std::filesystem::path root, int patch_size);

    std::optional<LoadOutcome> next() override;
    std::size_t size() const { return stems_.size(); }

private:
    std::filesystem::path root_;
    int patch_size_;
    std::vector<std::string> stems_;
    std::size_t cursor_ = 0;
};

std::vector<std::string> sorted_stems(const std::filesystem::path& dir, const std::string& extension);

// ---- synthetic corpus -----------------------------------------------------

struct SynthSpec {
    int image_size = 128;
    int patch_size = 16;
    int min_shapes = 1;
    int max_shapes = 4;
    bool rectangles = true;
    bool ellipses = true;
    std::uint64_t rng_seed = 1;
};

struct SynthSample {
    AnnotatedSample sample;
    SegMask shape_raster;  // shape index + 1 per pixel, 0 = background
};

/// Solid rectangles/ellipses over a dark textured background. Labels come from
/// label_from_mask on the exact shape raster at 10%.
class SyntheticSource final : public SampleSource {
public:
    SyntheticSource(SynthSpec spec, int count);

    std::optional<LoadOutcome> next() override;
    /// Same stream as next(), keeping the shape raster.
    std::optional<SynthSample> next_with_raster();

private:
    SynthSpec spec_;
    PatchGrid grid_;
    int count_;
    int produced_ = 0;
    Rng rng_;
};

std::vector<SynthSample> generate_synthetic(const SynthSpec& spec, int count);

// ---- batching ---------------------------------------------------------------

/// Deterministic Fisher-Yates permutation of [0, n).
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed);

/// Shuffles per seed and packs consecutive samples; the last batch may be partial.
std::vector<Batch> make_batches(const std::vector<AnnotatedSample>& samples, int batch_size,
                                std::uint64_t shuffle_seed);
/// Packs samples in the given order.
Batch pack_batch(const std::vector<AnnotatedSample>& samples, std::span<const std::size_t> indices);

}  // namespace bavit
