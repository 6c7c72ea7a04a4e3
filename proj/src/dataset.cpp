#include "asdn/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "asdn/rng.hpp"

namespace asdn {

namespace fs = std::filesystem;
using json = nlohmann::json;

IngestError::IngestError(Kind kind, std::string field, const std::string& what)
    : std::runtime_error(what), kind_(kind), field_(std::move(field)) {}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T byteswap_if_big(T value) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &value, sizeof(T));
        std::reverse(std::begin(bytes), std::end(bytes));
        std::memcpy(&value, bytes, sizeof(T));
    }
    return value;
}

std::vector<char> read_file(const fs::path& file, const std::string& field) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw IngestError(IngestError::Kind::MissingFile, field,
                          "missing or unreadable file: " + file.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
std::vector<T> decode_le(const std::vector<char>& bytes, std::size_t count,
                         const std::string& field) {
    if (bytes.size() != count * sizeof(T)) {
        throw IngestError(IngestError::Kind::SizeMismatch, field,
                          field + ": expected " + std::to_string(count * sizeof(T)) +
                              " bytes, found " + std::to_string(bytes.size()));
    }
    std::vector<T> out(count);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    for (auto& v : out) v = byteswap_if_big(v);
    return out;
}

template <typename T>
void write_le(const fs::path& file, const std::vector<T>& values, const std::string& field) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IngestError(IngestError::Kind::Io, field, "cannot write " + file.string());
    }
    for (T v : values) {
        v = byteswap_if_big(v);
        out.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    if (!out) throw IngestError(IngestError::Kind::Io, field, "write failed: " + file.string());
}

std::size_t header_extent(const json& header, const char* key) {
    if (!header.contains(key) || !header[key].is_number_integer() || header[key].get<long long>() < 0) {
        throw IngestError(IngestError::Kind::BadHeader, key,
                          std::string("header.json: field \"") + key +
                              "\" must be a nonnegative integer");
    }
    return header[key].get<std::size_t>();
}

void expect_string(const json& header, const char* key, const char* value) {
    if (!header.contains(key) || header[key] != value) {
        throw IngestError(IngestError::Kind::BadHeader, key,
                          std::string("header.json: field \"") + key + "\" must be \"" + value + "\"");
    }
}

std::vector<std::vector<std::size_t>> labeled_ids_by_class(const LabeledCube& cube) {
    const int classes = cube.classes();
    std::vector<std::vector<std::size_t>> ids(static_cast<std::size_t>(classes));
    for (std::size_t p = 0; p < cube.labels.size(); ++p) {
        if (cube.labels[p] > 0) ids[static_cast<std::size_t>(cube.labels[p] - 1)].push_back(p);
    }
    for (int c = 0; c < classes; ++c) {
        if (ids[static_cast<std::size_t>(c)].empty()) {
            throw std::invalid_argument("class " + std::to_string(c + 1) + " has no labeled pixels");
        }
    }
    return ids;
}

std::size_t round_count(double value) {
    return static_cast<std::size_t>(std::floor(value + 0.5));
}

std::vector<std::size_t> concat(const std::vector<std::vector<std::size_t>>& parts) {
    std::vector<std::size_t> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

}  // namespace

int LabeledCube::classes() const {
    std::int32_t c = 0;
    for (auto l : labels) c = std::max(c, l);
    return static_cast<int>(c);
}

void LabeledCube::validate() const {
    if (bands == 0) {
        throw IngestError(IngestError::Kind::BadHeader, "bands", "cube must have at least one band");
    }
    if (data.size() != height * width * bands) {
        throw IngestError(IngestError::Kind::SizeMismatch, "data.bin",
                          "data extent does not match height*width*bands");
    }
    if (labels.size() != height * width) {
        throw IngestError(IngestError::Kind::SizeMismatch, "labels.bin",
                          "label extent does not match height*width");
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i])) {
            throw IngestError(IngestError::Kind::NonFinite, "data.bin",
                              "non-finite sample at flat index " + std::to_string(i));
        }
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) {
            throw IngestError(IngestError::Kind::BadLabel, "labels.bin",
                              "negative label at pixel " + std::to_string(i));
        }
    }
}

LabeledCube load_bundle(const fs::path& dir) {
    const auto header_bytes = read_file(dir / "header.json", "header.json");
    json header;
    try {
        header = json::parse(header_bytes.begin(), header_bytes.end());
    } catch (const json::parse_error& e) {
        throw IngestError(IngestError::Kind::BadHeader, "header.json",
                          std::string("header.json: ") + e.what());
    }
    if (!header.is_object()) {
        throw IngestError(IngestError::Kind::BadHeader, "header.json", "header.json must be an object");
    }

    LabeledCube cube;
    cube.height = header_extent(header, "height");
    cube.width = header_extent(header, "width");
    cube.bands = header_extent(header, "bands");
    const std::size_t classes = header_extent(header, "classes");
    expect_string(header, "dtype", "f64le");
    expect_string(header, "label_dtype", "i32le");
    expect_string(header, "order", "band-major");
    if (cube.bands == 0) {
        throw IngestError(IngestError::Kind::BadHeader, "bands", "header.json: bands must be >= 1");
    }

    const std::size_t pixels = cube.height * cube.width;
    cube.data = decode_le<double>(read_file(dir / "data.bin", "data.bin"), pixels * cube.bands, "data.bin");
    cube.labels = decode_le<std::int32_t>(read_file(dir / "labels.bin", "labels.bin"), pixels, "labels.bin");
    cube.validate();
    if (static_cast<std::size_t>(cube.classes()) > classes) {
        throw IngestError(IngestError::Kind::BadLabel, "classes",
                          "labels.bin contains a label above header \"classes\"");
    }
    return cube;
}

void save_bundle(const LabeledCube& cube, const fs::path& dir) {
    cube.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IngestError(IngestError::Kind::Io, "path", "cannot create " + dir.string() + ": " + ec.message());

    const json header = {{"height", cube.height}, {"width", cube.width},
                         {"bands", cube.bands},   {"classes", cube.classes()},
                         {"dtype", "f64le"},      {"label_dtype", "i32le"},
                         {"order", "band-major"}};
    {
        std::ofstream out(dir / "header.json", std::ios::trunc);
        if (!out) throw IngestError(IngestError::Kind::Io, "header.json", "cannot write header.json");
        out << header.dump(2) << '\n';
    }
    write_le(dir / "data.bin", cube.data, "data.bin");
    write_le(dir / "labels.bin", cube.labels, "labels.bin");
}

LabeledCube load_csv(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw IngestError(IngestError::Kind::MissingFile, file.filename().string(), "cannot open " + file.string());

    std::vector<std::vector<double>> rows;
    std::vector<std::int32_t> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 2) {
            throw IngestError(IngestError::Kind::BadHeader, "line " + std::to_string(line_no),
                              "csv row needs at least one band and a label");
        }
        std::vector<double> row;
        try {
            for (std::size_t k = 0; k + 1 < cells.size(); ++k) row.push_back(std::stod(cells[k]));
            labels.push_back(static_cast<std::int32_t>(std::stol(cells.back())));
        } catch (const std::exception&) {
            throw IngestError(IngestError::Kind::BadHeader, "line " + std::to_string(line_no),
                              "unparseable csv value on line " + std::to_string(line_no));
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw IngestError(IngestError::Kind::SizeMismatch, "line " + std::to_string(line_no),
                              "csv rows have differing band counts");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IngestError(IngestError::Kind::SizeMismatch, "rows", "csv file has no rows");

    LabeledCube cube;
    cube.height = rows.size();
    cube.width = 1;
    cube.bands = rows.front().size();
    cube.data.resize(cube.height * cube.bands);
    for (std::size_t r = 0; r < cube.height; ++r) {
        for (std::size_t b = 0; b < cube.bands; ++b) cube.data[b * cube.height + r] = rows[r][b];
    }
    cube.labels = std::move(labels);
    cube.validate();
    return cube;
}

std::vector<std::size_t> Split::all_dictionary() const { return concat(dictionary_ids); }
std::vector<std::size_t> Split::all_train() const { return concat(train_ids); }
std::vector<std::size_t> Split::all_test() const { return concat(test_ids); }

Split make_split(const LabeledCube& cube, double dict_frac, double train_frac, std::uint64_t seed) {
    if (!(dict_frac > 0.0 && dict_frac < 1.0)) throw std::invalid_argument("dict_frac must lie in (0, 1)");
    if (!(train_frac >= 0.0 && train_frac < 1.0)) throw std::invalid_argument("train_frac must lie in [0, 1)");

    const auto ids = labeled_ids_by_class(cube);
    std::vector<std::size_t> dict_counts, train_counts;
    for (const auto& class_ids : ids) {
        const std::size_t n = class_ids.size();
        const std::size_t n_dict = std::clamp<std::size_t>(round_count(dict_frac * static_cast<double>(n)), 1, n);
        const std::size_t n_train = std::min(n - n_dict, round_count(train_frac * static_cast<double>(n - n_dict)));
        dict_counts.push_back(n_dict);
        train_counts.push_back(n_train);
    }
    return make_split_counts(cube, dict_counts, train_counts, seed);
}

Split make_split_counts(const LabeledCube& cube, std::span<const std::size_t> dict_counts,
                        std::span<const std::size_t> train_counts, std::uint64_t seed) {
    auto ids = labeled_ids_by_class(cube);
    if (dict_counts.size() != ids.size() || train_counts.size() != ids.size()) {
        throw std::invalid_argument("split counts must have one entry per class (" +
                                    std::to_string(ids.size()) + ")");
    }

    Split split;
    split.seed = seed;
    SplitMix64 rng(seed);
    for (std::size_t c = 0; c < ids.size(); ++c) {
        auto& class_ids = ids[c];
        const std::size_t n_dict = dict_counts[c];
        const std::size_t n_train = train_counts[c];
        if (n_dict < 1 || n_dict + n_train > class_ids.size()) {
            throw std::invalid_argument("class " + std::to_string(c + 1) + ": counts exceed " +
                                        std::to_string(class_ids.size()) + " labeled pixels");
        }
        shuffle(class_ids, rng);
        const auto d_end = class_ids.begin() + static_cast<std::ptrdiff_t>(n_dict);
        const auto t_end = d_end + static_cast<std::ptrdiff_t>(n_train);
        split.dictionary_ids.emplace_back(class_ids.begin(), d_end);
        split.train_ids.emplace_back(d_end, t_end);
        split.test_ids.emplace_back(t_end, class_ids.end());
    }
    return split;
}

PixelBatch extract_pixels(const LabeledCube& cube, std::span<const std::size_t> ids, bool normalize) {
    PixelBatch batch;
    batch.spectra.resize(static_cast<Eigen::Index>(cube.bands), static_cast<Eigen::Index>(ids.size()));
    batch.labels.reserve(ids.size());
    const std::size_t pixels = cube.pixels();
    for (std::size_t j = 0; j < ids.size(); ++j) {
        const std::size_t p = ids[j];
        if (p >= pixels) throw std::out_of_range("pixel id " + std::to_string(p) + " out of range");
        for (std::size_t b = 0; b < cube.bands; ++b) {
            batch.spectra(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) = cube.data[b * pixels + p];
        }
        if (normalize) {
            auto col = batch.spectra.col(static_cast<Eigen::Index>(j));
            const double norm = col.norm();
            if (norm == 0.0) {
                throw std::invalid_argument("pixel " + std::to_string(p) + " has a zero spectrum");
            }
            col /= norm;
        }
        batch.labels.push_back(cube.labels[p]);
    }
    return batch;
}

}  // namespace asdn
