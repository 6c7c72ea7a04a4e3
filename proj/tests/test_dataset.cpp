#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "asdn/dataset.hpp"
#include "asdn/rng.hpp"
#include "test_util.hpp"

using namespace asdn;
using asdn::testing::TempDir;

namespace {

LabeledCube random_cube(std::size_t h, std::size_t w, std::size_t b, int classes, std::uint64_t seed) {
    SplitMix64 rng(seed);
    LabeledCube c;
    c.height = h;
    c.width = w;
    c.bands = b;
    c.data.resize(h * w * b);
    for (double& v : c.data) v = rng.normal();
    c.labels.resize(h * w);
    for (auto& l : c.labels) l = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(classes) + 1));
    c.labels[0] = classes;  // make sure the top class is present
    return c;
}

// Labeled cube with `per_class[k]` pixels of class k + 1, all other pixels unlabeled.
LabeledCube class_cube(const std::vector<std::size_t>& per_class) {
    std::size_t total = 0;
    for (auto n : per_class) total += n;
    LabeledCube c;
    c.height = total + 3;
    c.width = 1;
    c.bands = 2;
    c.data.assign(c.pixels() * c.bands, 1.0);
    c.labels.assign(c.pixels(), 0);
    std::size_t p = 2;
    for (std::size_t k = 0; k < per_class.size(); ++k) {
        for (std::size_t i = 0; i < per_class[k]; ++i) c.labels[p++] = static_cast<std::int32_t>(k + 1);
    }
    return c;
}

std::vector<char> read_bytes(const std::filesystem::path& f) {
    std::ifstream in(f, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Bundle, ZeroCubeRoundTrip) {
    TempDir dir;
    LabeledCube c;
    c.height = 2;
    c.width = 2;
    c.bands = 3;
    c.data.assign(12, 0.0);
    c.labels = {0, 1, 2, 1};
    save_bundle(c, dir.path());
    const LabeledCube back = load_bundle(dir.path());
    EXPECT_EQ(back, c);
    EXPECT_EQ(back.classes(), 2);
}

TEST(Bundle, RandomCubesAreBitIdentical) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        TempDir dir;
        const LabeledCube c = random_cube(4, 5, 6, 3, seed);
        save_bundle(c, dir.path());
        const LabeledCube back = load_bundle(dir.path());
        ASSERT_EQ(back.data.size(), c.data.size());
        EXPECT_EQ(std::memcmp(back.data.data(), c.data.data(), c.data.size() * sizeof(double)), 0);
        EXPECT_EQ(back.labels, c.labels);
    }
}

TEST(Bundle, SingleElementEncoding) {
    TempDir dir;
    LabeledCube c;
    c.height = c.width = c.bands = 1;
    c.data = {7.5};
    c.labels = {1};
    save_bundle(c, dir.path());
    const auto bytes = read_bytes(dir / "data.bin");
    ASSERT_EQ(bytes.size(), 8u);
    // 7.5 = 0x401E000000000000, little-endian.
    const unsigned char expected[8] = {0, 0, 0, 0, 0, 0, 0x1E, 0x40};
    EXPECT_EQ(std::memcmp(bytes.data(), expected, 8), 0);
}

TEST(Bundle, ShortDataFileIsSizeMismatch) {
    TempDir dir;
    save_bundle(random_cube(2, 2, 3, 2, 4), dir.path());
    const auto full = std::filesystem::file_size(dir / "data.bin");
    std::filesystem::resize_file(dir / "data.bin", full - 1);
    try {
        (void)load_bundle(dir.path());
        FAIL() << "expected IngestError";
    } catch (const IngestError& e) {
        EXPECT_EQ(e.kind(), IngestError::Kind::SizeMismatch);
        EXPECT_EQ(e.field(), "data.bin");
    }
}

TEST(Bundle, MissingFilesAndBadHeader) {
    TempDir dir;
    EXPECT_THROW((void)load_bundle(dir / "absent"), IngestError);
    save_bundle(random_cube(2, 2, 2, 1, 9), dir.path());
    std::ofstream(dir / "header.json") << "{\"height\": 2}";
    try {
        (void)load_bundle(dir.path());
        FAIL() << "expected IngestError";
    } catch (const IngestError& e) {
        EXPECT_EQ(e.kind(), IngestError::Kind::BadHeader);
    }
}

TEST(Bundle, RejectsDegenerateAndInvalidCubes) {
    TempDir dir;
    LabeledCube c;
    c.height = 2;
    c.width = 2;
    c.bands = 0;
    c.labels.assign(4, 1);
    EXPECT_THROW(save_bundle(c, dir.path()), IngestError);

    LabeledCube nan_cube = random_cube(2, 2, 2, 1, 3);
    nan_cube.data[3] = std::nan("");
    EXPECT_THROW(save_bundle(nan_cube, dir.path()), IngestError);

    LabeledCube neg = random_cube(2, 2, 2, 1, 3);
    neg.labels[1] = -2;
    EXPECT_THROW(save_bundle(neg, dir.path()), IngestError);
}

TEST(Bundle, CsvImport) {
    TempDir dir;
    std::ofstream(dir / "px.csv") << "3,4,1\n0.5,0.25,2\n1,1,0\n";
    const LabeledCube c = load_csv(dir / "px.csv");
    EXPECT_EQ(c.height, 3u);
    EXPECT_EQ(c.width, 1u);
    EXPECT_EQ(c.bands, 2u);
    EXPECT_EQ(c.labels, (std::vector<std::int32_t>{1, 2, 0}));
    EXPECT_DOUBLE_EQ(c.at(0, 0, 0), 3.0);
    EXPECT_DOUBLE_EQ(c.at(1, 1, 0), 0.25);
}

TEST(Split, HundredPixelClass) {
    const LabeledCube c = class_cube({100});
    const Split s = make_split(c, 0.01, 0.1, 1);
    EXPECT_EQ(s.dictionary_ids[0].size(), 1u);
    EXPECT_EQ(s.train_ids[0].size(), 10u);
    EXPECT_EQ(s.test_ids[0].size(), 89u);
}

TEST(Split, ShadowsCounts) {
    const LabeledCube c = class_cube({947});
    const Split s = make_split(c, 0.01, 189.0 / 938.0, 5);
    EXPECT_EQ(s.dictionary_ids[0].size(), 9u);
    EXPECT_EQ(s.train_ids[0].size(), 189u);
    EXPECT_EQ(s.test_ids[0].size(), 749u);
}

TEST(Split, DeterministicAndSeedSensitive) {
    const LabeledCube c = class_cube({50, 80, 30});
    EXPECT_EQ(make_split(c, 0.1, 0.2, 11), make_split(c, 0.1, 0.2, 11));
    EXPECT_NE(make_split(c, 0.1, 0.2, 11), make_split(c, 0.1, 0.2, 12));
}

TEST(Split, PartitionsLabeledPixelsByClass) {
    const LabeledCube c = random_cube(12, 10, 2, 4, 77);
    const Split s = make_split(c, 0.05, 0.3, 3);
    std::set<std::size_t> seen;
    for (int k = 0; k < s.classes(); ++k) {
        for (const auto* part : {&s.dictionary_ids, &s.train_ids, &s.test_ids}) {
            for (std::size_t id : (*part)[static_cast<std::size_t>(k)]) {
                EXPECT_EQ(c.labels[id], k + 1);
                EXPECT_TRUE(seen.insert(id).second) << "pixel " << id << " assigned twice";
            }
        }
    }
    std::size_t labeled = 0;
    for (auto l : c.labels) labeled += l > 0;
    EXPECT_EQ(seen.size(), labeled);
}

TEST(Split, ExplicitCounts) {
    const LabeledCube c = class_cube({20, 30});
    const std::vector<std::size_t> dict{2, 3}, train{5, 0};
    const Split s = make_split_counts(c, dict, train, 1);
    EXPECT_EQ(s.dictionary_ids[1].size(), 3u);
    EXPECT_EQ(s.train_ids[0].size(), 5u);
    EXPECT_EQ(s.train_ids[1].size(), 0u);
    EXPECT_EQ(s.test_ids[0].size(), 13u);
    const std::vector<std::size_t> too_many{21, 3};
    EXPECT_THROW((void)make_split_counts(c, too_many, train, 1), std::invalid_argument);
}

TEST(Extract, NormalizesThreeFourFive) {
    LabeledCube c;
    c.height = 1;
    c.width = 2;
    c.bands = 2;
    c.data = {3.0, 1.0, 4.0, 1.0};  // band-major: pixel 0 = (3,4), pixel 1 = (1,1)
    c.labels = {1, 1};
    const std::vector<std::size_t> ids{0};
    const PixelBatch on = extract_pixels(c, ids, true);
    EXPECT_NEAR(on.spectra(0, 0), 0.6, 1e-15);
    EXPECT_NEAR(on.spectra(1, 0), 0.8, 1e-15);
    const PixelBatch off = extract_pixels(c, ids, false);
    EXPECT_EQ(off.spectra(0, 0), 3.0);
    EXPECT_EQ(off.spectra(1, 0), 4.0);
    EXPECT_EQ(off.labels, std::vector<int>{1});
}

TEST(Extract, RandomColumnsHaveUnitNorm) {
    const LabeledCube c = random_cube(8, 9, 12, 3, 21);
    std::vector<std::size_t> ids(c.pixels());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    const PixelBatch b = extract_pixels(c, ids, true);
    for (Eigen::Index j = 0; j < b.spectra.cols(); ++j) EXPECT_NEAR(b.spectra.col(j).norm(), 1.0, 1e-12);
}

TEST(Extract, RejectsBadIdsAndZeroSpectra) {
    LabeledCube c;
    c.height = 1;
    c.width = 2;
    c.bands = 1;
    c.data = {0.0, 2.0};
    c.labels = {1, 1};
    const std::vector<std::size_t> out_of_range{5}, zero{0};
    EXPECT_THROW((void)extract_pixels(c, out_of_range, false), std::out_of_range);
    EXPECT_THROW((void)extract_pixels(c, zero, true), std::invalid_argument);
    EXPECT_NO_THROW((void)extract_pixels(c, zero, false));
}

TEST(Rng, ShuffleIsPermutationAndBelowIsInRange) {
    SplitMix64 rng(42);
    std::vector<std::size_t> v(100);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    shuffle(v, rng);
    EXPECT_EQ(std::set<std::size_t>(v.begin(), v.end()).size(), 100u);
    for (int i = 0; i < 1000; ++i) EXPECT_LT(rng.below(7), 7u);
    SplitMix64 a(3), b(3);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next(), b.next());
}
