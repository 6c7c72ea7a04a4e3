#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace asdn {

/// Failure while reading or writing an HSI bundle. `field()` names the
/// offending file or header key.
class IngestError : public std::runtime_error {
public:
    enum class Kind { MissingFile, BadHeader, SizeMismatch, NonFinite, BadLabel, Io };

    IngestError(Kind kind, std::string field, const std::string& what);

    Kind kind() const noexcept { return kind_; }
    const std::string& field() const noexcept { return field_; }

private:
    Kind kind_;
    std::string field_;
};

/// Hyperspectral cube with per-pixel class labels (0 = unlabeled, 1..C).
///
/// Samples are stored band-major: sample (b, r, c) lives at
/// ((b * height + r) * width + c). Labels are row-major (r * width + c).
struct LabeledCube {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t bands = 0;
    std::vector<double> data;
    std::vector<std::int32_t> labels;

    std::size_t pixels() const noexcept { return height * width; }

    /// Number of classes C, i.e. the largest label.
    int classes() const;

    double at(std::size_t band, std::size_t row, std::size_t col) const {
        return data[(band * height + row) * width + col];
    }

    /// Throws IngestError if extents, finiteness or labels are inconsistent.
    void validate() const;

    bool operator==(const LabeledCube&) const = default;
};

/// Reads header.json, data.bin and labels.bin from a bundle directory.
LabeledCube load_bundle(const std::filesystem::path& dir);

/// Writes a bundle directory (created if absent). Rejects invalid cubes.
void save_bundle(const LabeledCube& cube, const std::filesystem::path& dir);

/// Small-matrix import: one pixel per row, bands as columns, last column the
/// integer label. Produces a cube of height = rows and width = 1.
LabeledCube load_csv(const std::filesystem::path& file);

/// Per-class dictionary / train / test partition of labeled flat pixel ids.
/// Index k of each outer vector holds class k + 1.
struct Split {
    std::vector<std::vector<std::size_t>> dictionary_ids;
    std::vector<std::vector<std::size_t>> train_ids;
    std::vector<std::vector<std::size_t>> test_ids;
    std::uint64_t seed = 0;

    int classes() const { return static_cast<int>(dictionary_ids.size()); }

    std::vector<std::size_t> all_dictionary() const;
    std::vector<std::size_t> all_train() const;
    std::vector<std::size_t> all_test() const;

    bool operator==(const Split&) const = default;
};

/// Random per-class split. Per class with n labeled pixels:
/// dictionary = max(1, round(dict_frac * n)), train = round(train_frac *
/// (n - dictionary)), the rest test. Each class's labeled ids (ascending)
/// are Fisher-Yates shuffled by one SplitMix64 stream seeded with `seed`,
/// classes visited in order 1..C.
Split make_split(const LabeledCube& cube, double dict_frac, double train_frac,
                 std::uint64_t seed);

/// Same as make_split with explicit per-class dictionary and train counts.
Split make_split_counts(const LabeledCube& cube, std::span<const std::size_t> dict_counts,
                        std::span<const std::size_t> train_counts, std::uint64_t seed);

struct PixelBatch {
    Eigen::MatrixXd spectra;  // bands x n
    std::vector<int> labels;
};

/// Gathers the spectra of `ids` as columns, optionally scaled to unit norm.
PixelBatch extract_pixels(const LabeledCube& cube, std::span<const std::size_t> ids,
                          bool normalize);

}  // namespace asdn
