#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "bavit/data.hpp"
#include "bavit/image_io.hpp"
#include "bavit/rng.hpp"

namespace bavit::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("bavit_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline RgbImage noise_image(int w, int h, std::uint64_t seed) {
    Rng rng(seed);
    RgbImage img(w, h);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    return img;
}

inline std::vector<AnnotatedSample> synth_samples(int n, std::uint64_t seed, int size = 32, int patch = 8) {
    SynthSpec spec;
    spec.image_size = size;
    spec.patch_size = patch;
    spec.rng_seed = seed;
    std::vector<AnnotatedSample> out;
    for (auto& s : generate_synthetic(spec, n)) out.push_back(std::move(s.sample));
    return out;
}

}  // namespace bavit::testing
