#include "asdn/cli.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>
#include <openssl/evp.h>

#include "asdn/classify.hpp"
#include "asdn/dataset.hpp"
#include "asdn/network.hpp"
#include "asdn/synthetic.hpp"

namespace asdn::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr double kGradCheckThreshold = 1e-5;

json default_config() {
    return json::parse(R"({
        "dataset": "",
        "normalize": true,
        "split": {"dict_frac": 0.01, "train_frac": 0.1, "seed": 1, "dict_counts": [], "train_counts": []},
        "solver": {"name": "omp"},
        "train": {"enabled": true, "learning_rate": 0.01, "epochs": 50, "batch_size": 32, "seed": 1},
        "sweep": {"param": "", "grid": "", "runs": 5},
        "gradcheck": {"stages": 5, "seed": 7, "step": 1e-6, "bands": 20, "atoms": 40, "classes": 2},
        "ingest": {"input": "", "synthetic": false, "classes": 3, "bands": 50, "subspace_dim": 5,
                   "pixels_per_class": 100, "noise": 0.01, "seed": 1, "width": 20},
        "output": "out",
        "threads": 0
    })");
}

/// A command-line flag that overrides one key of the config document.
struct Flag {
    std::string name;
    std::string pointer;
    char type;  // i = integer, d = double, s = string, b = true/false, f = presence flag
    std::string value;
    bool present = false;
    CLI::Option* option = nullptr;
};

json convert_flag(const Flag& f) {
    try {
        std::size_t used = 0;
        switch (f.type) {
            case 'i': {
                const long long v = std::stoll(f.value, &used);
                if (used != f.value.size()) break;
                return v;
            }
            case 'd': {
                const double v = std::stod(f.value, &used);
                if (used != f.value.size()) break;
                return v;
            }
            case 'b':
                if (f.value == "true" || f.value == "1") return true;
                if (f.value == "false" || f.value == "0") return false;
                break;
            case 'f':
                return true;
            default:
                return f.value;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError("invalid value '" + f.value + "' for " + f.name);
}

void merge(json& base, const json& patch) {
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
            merge(base[it.key()], *it);
        } else {
            base[it.key()] = *it;
        }
    }
}

std::string read_text(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + file.string());
}

template <typename T>
T get(const json& doc, const std::string& pointer) {
    try {
        return doc.at(json::json_pointer(pointer)).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key " + pointer + " is missing or has the wrong type");
    }
}

/// Options resolved from the merged config document, checked up front so
/// that a failing run writes nothing.
struct Experiment {
    std::string command;
    json doc;
    fs::path output;
    fs::path dataset;
    LabeledCube cube;
    SplitPlan plan;
    std::uint64_t split_seed = 1;
    SolverSpec solver;
    std::optional<fs::path> params_file;
    std::optional<TrainConfig> training;
    std::map<std::string, std::string> input_hashes;
};

void hash_input(Experiment& ex, const fs::path& file) {
    ex.input_hashes[file.string()] = git_blob_sha1(read_text(file));
}

LabeledCube load_dataset(Experiment& ex, const fs::path& path) {
    if (path.empty()) throw ConfigError("no dataset given (--dataset or \"dataset\")");
    if (!fs::exists(path)) throw ConfigError("dataset not found: " + path.string());
    if (fs::is_directory(path)) {
        for (const char* f : {"header.json", "data.bin", "labels.bin"}) {
            if (fs::exists(path / f)) hash_input(ex, path / f);
        }
        return load_bundle(path);
    }
    hash_input(ex, path);
    return load_csv(path);
}

SolverSpec resolve_solver(Experiment& ex) {
    const json& s = ex.doc.at("solver");
    if (!s.is_object()) throw ConfigError("\"solver\" must be an object");
    SolverSpec spec;
    try {
        spec = solver_from_name(get<std::string>(ex.doc, "/solver/name"));
    } catch (const UnknownSolver& e) {
        throw ConfigError(e.what());
    }
    for (auto it = s.begin(); it != s.end(); ++it) {
        if (it.key() == "name" || it.key() == "params_file") continue;
        if (!it->is_number()) throw ConfigError("solver parameter " + it.key() + " must be numeric");
        try {
            set_solver_param(spec, it.key(), it->get<double>());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (auto* net = std::get_if<NetworkSpec>(&spec); net && s.contains("params_file")) {
        ex.params_file = get<std::string>(ex.doc, "/solver/params_file");
        if (!fs::exists(*ex.params_file)) throw ConfigError("params file not found: " + ex.params_file->string());
        try {
            net->params = params_from_json(read_text(*ex.params_file));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        hash_input(ex, *ex.params_file);
    }
    try {
        if (const auto* a = std::get_if<AdmmSpec>(&spec)) a->cfg.validate();
        if (const auto* n = std::get_if<NetworkSpec>(&spec)) n->params.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return spec;
}

TrainConfig resolve_training(const json& doc, const NetParams& init) {
    TrainConfig cfg;
    cfg.learning_rate = get<double>(doc, "/train/learning_rate");
    cfg.epochs = get<int>(doc, "/train/epochs");
    cfg.batch_size = get<int>(doc, "/train/batch_size");
    cfg.seed = get<std::uint64_t>(doc, "/train/seed");
    cfg.init = init;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

void resolve_split(Experiment& ex) {
    ex.plan.dict_frac = get<double>(ex.doc, "/split/dict_frac");
    ex.plan.train_frac = get<double>(ex.doc, "/split/train_frac");
    ex.plan.dict_counts = get<std::vector<std::size_t>>(ex.doc, "/split/dict_counts");
    ex.plan.train_counts = get<std::vector<std::size_t>>(ex.doc, "/split/train_counts");
    ex.plan.normalize = get<bool>(ex.doc, "/normalize");
    ex.split_seed = get<std::uint64_t>(ex.doc, "/split/seed");
    if (ex.plan.dict_counts.empty()) {
        if (!(ex.plan.dict_frac > 0.0 && ex.plan.dict_frac < 1.0)) throw ConfigError("split.dict_frac must lie in (0, 1)");
        if (!(ex.plan.train_frac >= 0.0 && ex.plan.train_frac < 1.0)) throw ConfigError("split.train_frac must lie in [0, 1)");
    } else if (ex.plan.dict_counts.size() != ex.plan.train_counts.size()) {
        throw ConfigError("split.dict_counts and split.train_counts must have equal length");
    }
    try {
        (void)ex.plan.draw(ex.cube, ex.split_seed);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("split: ") + e.what());
    }
}

json split_json(const Split& s) {
    return {{"seed", s.seed},
            {"classes", s.classes()},
            {"dictionary", s.dictionary_ids},
            {"train", s.train_ids},
            {"test", s.test_ids}};
}

void write_manifest(const Experiment& ex, const std::vector<std::string>& outputs, const json& extra = json::object()) {
    json manifest = {{"tool", "asdn"},
                     {"command", ex.command},
                     {"config", ex.doc},
                     {"inputs", ex.input_hashes},
                     {"outputs", outputs}};
    merge(manifest, extra);
    write_text(ex.output / "manifest.json", manifest.dump(2) + "\n");
}

void prepare_output(const Experiment& ex) {
    std::error_code ec;
    fs::create_directories(ex.output, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + ex.output.string() + ": " + ec.message());
}

std::string fmt_pct(double v) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << 100.0 * v;
    return ss.str();
}

void print_report(std::ostream& out, const ClassificationReport& r) {
    out << "OA " << fmt_pct(r.oa) << "  AA " << fmt_pct(r.aa) << "  kappa " << fmt_pct(r.kappa) << "\n";
    for (std::size_t i = 0; i < r.per_class_acc.size(); ++i) {
        out << "  class " << (i + 1) << ": " << fmt_pct(r.per_class_acc[i]) << "\n";
    }
    for (int c : r.absent_classes) out << "warning: class " << c << " has no test pixels\n";
}

std::string report_csv(const ClassificationReport& r) {
    std::ostringstream ss;
    ss << std::setprecision(17) << "metric,value\n";
    ss << "oa," << r.oa << "\naa," << r.aa << "\nkappa," << r.kappa << "\n";
    for (std::size_t i = 0; i < r.per_class_acc.size(); ++i) ss << "class_" << (i + 1) << ',' << r.per_class_acc[i] << "\n";
    return ss.str();
}

// ---- subcommands ---------------------------------------------------------

int cmd_ingest(Experiment& ex, std::ostream& out) {
    const std::string input = get<std::string>(ex.doc, "/ingest/input");
    const bool synth = get<bool>(ex.doc, "/ingest/synthetic");
    if (input.empty() == !synth) throw ConfigError("ingest needs exactly one of --input or --synthetic");

    LabeledCube cube;
    if (synth) {
        synthetic::SubspaceConfig cfg;
        cfg.classes = get<int>(ex.doc, "/ingest/classes");
        cfg.bands = get<Index>(ex.doc, "/ingest/bands");
        cfg.subspace_dim = get<Index>(ex.doc, "/ingest/subspace_dim");
        cfg.noise = get<double>(ex.doc, "/ingest/noise");
        cfg.seed = get<std::uint64_t>(ex.doc, "/ingest/seed");
        const auto per_class = get<Index>(ex.doc, "/ingest/pixels_per_class");
        const auto width = get<std::size_t>(ex.doc, "/ingest/width");
        if (cfg.classes < 1 || cfg.bands < 1 || cfg.subspace_dim < 1 || cfg.subspace_dim > cfg.bands ||
            per_class < 1 || width < 1 || cfg.noise < 0.0) {
            throw ConfigError("invalid synthetic cube parameters");
        }
        cube = synthetic::make_subspace_cube(cfg, per_class, width);
    } else {
        cube = load_dataset(ex, input);
    }

    prepare_output(ex);
    save_bundle(cube, ex.output);
    write_manifest(ex, {"header.json", "data.bin", "labels.bin", "manifest.json"});
    out << "bundle " << ex.output.string() << ": " << cube.height << "x" << cube.width << "x" << cube.bands << ", "
        << cube.classes() << " classes\n";
    return kExitOk;
}

int cmd_split(Experiment& ex, std::ostream& out) {
    const Split split = ex.plan.draw(ex.cube, ex.split_seed);
    prepare_output(ex);
    write_text(ex.output / "split.json", split_json(split).dump() + "\n");
    write_manifest(ex, {"split.json", "manifest.json"}, {{"seeds", {{"split", ex.split_seed}}}});
    for (int c = 0; c < split.classes(); ++c) {
        const auto k = static_cast<std::size_t>(c);
        out << "class " << (c + 1) << ": dictionary " << split.dictionary_ids[k].size() << ", train "
            << split.train_ids[k].size() << ", test " << split.test_ids[k].size() << "\n";
    }
    return kExitOk;
}

int cmd_train(Experiment& ex, std::ostream& out) {
    const Split split = ex.plan.draw(ex.cube, ex.split_seed);
    const PixelBatch atoms = extract_pixels(ex.cube, split.all_dictionary(), ex.plan.normalize);
    const Dictionary dict = assemble(atoms.spectra, atoms.labels, split.classes());
    const GramCache cache(dict);
    const PixelBatch train_set = extract_pixels(ex.cube, split.all_train(), ex.plan.normalize);
    if (train_set.labels.empty()) throw ConfigError("train split is empty (raise split.train_frac)");

    const TrainResult result = train(cache, train_set.spectra, train_set.labels, *ex.training);

    prepare_output(ex);
    write_text(ex.output / "params.json", params_to_json(result.params) + "\n");
    write_text(ex.output / "train.json", json({{"loss_history", result.loss_history}}).dump(2) + "\n");
    write_manifest(ex, {"params.json", "train.json", "manifest.json"},
                   {{"seeds", {{"split", ex.split_seed}, {"train", ex.training->seed}}}});
    out << "mean loss " << result.loss_history.front() << " -> " << result.loss_history.back() << "\n";
    return kExitOk;
}

int cmd_eval(Experiment& ex, std::ostream& out) {
    const Split split = ex.plan.draw(ex.cube, ex.split_seed);
    const RunOutcome run = run_experiment(ex.cube, split, ex.plan.normalize, ex.solver, ex.training);

    prepare_output(ex);
    std::vector<std::string> written = {"report.json", "report.csv", "labels_pred.bin"};
    write_text(ex.output / "report.json", report_to_json(run.report) + "\n");
    write_text(ex.output / "report.csv", report_csv(run.report));

    LabeledCube map;
    map.height = ex.cube.height;
    map.width = ex.cube.width;
    map.labels.assign(ex.cube.pixels(), 0);
    for (std::size_t k = 0; k < run.test_ids.size(); ++k) map.labels[run.test_ids[k]] = run.predictions[k];
    {
        std::ofstream pred(ex.output / "labels_pred.bin", std::ios::binary | std::ios::trunc);
        for (std::int32_t l : map.labels) {
            unsigned char b[4] = {static_cast<unsigned char>(l & 0xFF), static_cast<unsigned char>((l >> 8) & 0xFF),
                                  static_cast<unsigned char>((l >> 16) & 0xFF),
                                  static_cast<unsigned char>((l >> 24) & 0xFF)};
            pred.write(reinterpret_cast<const char*>(b), 4);
        }
        if (!pred) throw std::runtime_error("cannot write labels_pred.bin");
    }

    json seeds = {{"split", ex.split_seed}};
    if (run.training) {
        write_text(ex.output / "params.json", params_to_json(run.training->params) + "\n");
        written.push_back("params.json");
        seeds["train"] = ex.training->seed;
    }
    written.push_back("manifest.json");
    write_manifest(ex, written, {{"seeds", seeds}, {"solver", solver_name(ex.solver)}});
    print_report(out, run.report);
    return kExitOk;
}

int cmd_sweep(Experiment& ex, std::ostream& out) {
    SweepSpec spec;
    spec.solver = ex.solver;
    spec.parameter = get<std::string>(ex.doc, "/sweep/param");
    spec.runs = get<int>(ex.doc, "/sweep/runs");
    spec.base_seed = ex.split_seed;
    spec.training = ex.training;
    if (spec.parameter.empty()) throw ConfigError("sweep needs --param");
    if (spec.runs < 1) throw ConfigError("sweep.runs must be >= 1");
    try {
        spec.grid = parse_grid(get<std::string>(ex.doc, "/sweep/grid"));
        SolverSpec probe = spec.solver;
        for (double v : spec.grid) set_solver_param(probe, spec.parameter, v);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("sweep: ") + e.what());
    }

    const SweepResult result = sweep(ex.cube, ex.plan, spec);

    prepare_output(ex);
    write_text(ex.output / "sweep.csv", sweep_to_csv(result));
    write_text(ex.output / "sweep.json", sweep_to_json(result) + "\n");
    write_manifest(ex, {"sweep.csv", "sweep.json", "manifest.json"},
                   {{"seeds", {{"split", result.seeds}}}, {"solver", solver_name(ex.solver)}});
    out << sweep_to_csv(result);
    return kExitOk;
}

int cmd_gradcheck(Experiment& ex, std::ostream& out) {
    const int stages = get<int>(ex.doc, "/gradcheck/stages");
    const auto seed = get<std::uint64_t>(ex.doc, "/gradcheck/seed");
    const double step = get<double>(ex.doc, "/gradcheck/step");
    const auto bands = get<Index>(ex.doc, "/gradcheck/bands");
    const auto atoms = get<Index>(ex.doc, "/gradcheck/atoms");
    const int classes = get<int>(ex.doc, "/gradcheck/classes");
    if (stages < 1 || !(step > 0.0) || bands < 1 || classes < 1 || atoms < classes) {
        throw ConfigError("invalid gradcheck parameters");
    }

    const auto inst = synthetic::make_gradcheck_instance(bands, atoms, classes, stages, seed);
    const GramCache cache(inst.dict);
    const GradCheckReport report = grad_check(cache, inst.x, inst.label, inst.params, step);

    json entries = json::array();
    for (const auto& e : report.entries) {
        entries.push_back({{"name", e.name},
                           {"analytic", e.analytic},
                           {"numeric", e.numeric},
                           {"rel_error", e.rel_error},
                           {"zero_gradient", e.zero_gradient}});
        out << std::left << std::setw(10) << e.name << " analytic " << std::setw(14) << e.analytic << " numeric "
            << std::setw(14) << e.numeric << (e.zero_gradient ? " zero-gradient" : " rel " + std::to_string(e.rel_error))
            << "\n";
    }
    out << "max_rel_error " << report.max_rel_error << " (threshold " << kGradCheckThreshold << ", "
        << report.zero_gradients << " zero gradients, kink margin " << report.min_kink_margin << ")\n";

    prepare_output(ex);
    write_text(ex.output / "gradcheck.json", json({{"max_rel_error", report.max_rel_error},
                                                   {"max_abs_error", report.max_abs_error},
                                                   {"zero_gradients", report.zero_gradients},
                                                   {"min_kink_margin", report.min_kink_margin},
                                                   {"entries", entries}})
                                                 .dump(2) +
                                                 "\n");
    write_manifest(ex, {"gradcheck.json", "manifest.json"}, {{"seeds", {{"gradcheck", seed}}}});
    if (report.max_rel_error > kGradCheckThreshold) {
        throw std::runtime_error("gradient check failed: max relative error " + std::to_string(report.max_rel_error));
    }
    return kExitOk;
}

int cmd_report(Experiment& ex, std::ostream& out) {
    const fs::path report = ex.output / "report.json";
    const fs::path sweep_file = ex.output / "sweep.json";
    if (fs::exists(report)) {
        const json r = json::parse(read_text(report));
        ClassificationReport rep;
        rep.oa = r.at("oa").get<double>();
        rep.aa = r.at("aa").get<double>();
        rep.kappa = r.at("kappa").get<double>();
        rep.per_class_acc = r.at("per_class_acc").get<std::vector<double>>();
        rep.absent_classes = r.at("absent_classes").get<std::vector<int>>();
        print_report(out, rep);
        return kExitOk;
    }
    if (fs::exists(sweep_file)) {
        const json s = json::parse(read_text(sweep_file));
        // "±" is two bytes, so cells are padded by hand rather than with setw.
        auto cell = [](const json& p, const std::string& key, std::size_t bytes) {
            std::string c = fmt_pct(p.at(key + "_mean")) + " ± " + fmt_pct(p.at(key + "_std"));
            c.resize(std::max(c.size(), bytes), ' ');
            return c;
        };
        out << std::left << std::setw(12) << s.at("parameter").get<std::string>()
            << "  OA              AA              kappa\n";
        for (const auto& p : s.at("points")) {
            out << std::setw(12) << p.at("value").get<double>() << "  " << cell(p, "oa", 17) << cell(p, "aa", 17)
                << cell(p, "kappa", 0) << "\n";
        }
        return kExitOk;
    }
    throw std::runtime_error("no report.json or sweep.json in " + ex.output.string());
}

// ---- flag wiring -----------------------------------------------------------

void add_flags(CLI::App* sub, std::deque<Flag>& flags, std::initializer_list<Flag> spec) {
    for (const Flag& f : spec) {
        flags.push_back(f);
        Flag& stored = flags.back();
        stored.option = stored.type == 'f' ? sub->add_flag(stored.name, stored.present)
                                           : sub->add_option(stored.name, stored.value);
    }
}

const std::initializer_list<Flag> kDataFlags = {
    {"--dataset", "/dataset", 's', {}},        {"--dict-frac", "/split/dict_frac", 'd', {}},
    {"--train-frac", "/split/train_frac", 'd', {}}, {"--seed", "/split/seed", 'i', {}},
    {"--normalize", "/normalize", 'b', {}},
};

const std::initializer_list<Flag> kSolverFlags = {
    {"--solver", "/solver/name", 's', {}},     {"--K", "/solver/K", 'i', {}},
    {"--S", "/solver/S", 'i', {}},             {"--step", "/solver/step", 'i', {}},
    {"--tol", "/solver/tol", 'd', {}},         {"--lambda", "/solver/lambda", 'd', {}},
    {"--rho", "/solver/rho", 'd', {}},         {"--relax", "/solver/relax", 'd', {}},
    {"--tau", "/solver/tau", 'd', {}},         {"--eta", "/solver/eta", 'd', {}},
    {"--max-iters", "/solver/max_iters", 'i', {}}, {"--stages", "/solver/stages", 'i', {}},
    {"--params", "/solver/params_file", 's', {}},
};

const std::initializer_list<Flag> kTrainFlags = {
    {"--lr", "/train/learning_rate", 'd', {}}, {"--epochs", "/train/epochs", 'i', {}},
    {"--batch", "/train/batch_size", 'i', {}}, {"--train-seed", "/train/seed", 'i', {}},
    {"--train", "/train/enabled", 'b', {}},
};

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
    auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != s.size() || !std::isfinite(v)) {
            throw std::invalid_argument("bad grid value '" + s + "'");
        }
        return v;
    };

    std::vector<double> grid;
    std::stringstream items(text);
    std::string item;
    while (std::getline(items, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }), item.end());
        if (item.empty()) continue;
        std::vector<std::string> parts;
        std::stringstream ps(item);
        std::string part;
        while (std::getline(ps, part, ':')) parts.push_back(part);
        if (parts.size() == 1) {
            grid.push_back(number(parts[0]));
        } else if (parts.size() == 2) {
            const double a = number(parts[0]), b = number(parts[1]);
            if (a != std::floor(a) || b != std::floor(b) || b < a) {
                throw std::invalid_argument("integer range '" + item + "' needs integers a <= b");
            }
            for (double v = a; v <= b; v += 1.0) grid.push_back(v);
        } else if (parts.size() == 3) {
            const double a = number(parts[0]), b = number(parts[1]), s = number(parts[2]);
            if (!(s > 0.0) || b < a) throw std::invalid_argument("stepped range '" + item + "' needs a <= b and s > 0");
            const auto n = static_cast<long long>(std::floor((b - a) / s + 1e-9));
            for (long long k = 0; k <= n; ++k) grid.push_back(a + static_cast<double>(k) * s);
        } else {
            throw std::invalid_argument("bad grid item '" + item + "'");
        }
    }
    if (grid.empty()) throw std::invalid_argument("empty grid");
    return grid;
}

std::string git_blob_sha1(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, digest, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw std::runtime_error("SHA-1 digest failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    auto fail = [&](const char* kind, const std::string& message, int code) {
        err << json({{"error", kind}, {"message", message}}).dump() << "\n";
        return code;
    };

    CLI::App app{"Sparse-representation classification with an unrolled, trainable ADMM network"};
    app.require_subcommand(1, 1);
    std::deque<Flag> flags;
    std::map<CLI::App*, std::string> names;
    std::string config_path;

    auto make = [&](const char* name, const char* help) {
        CLI::App* sub = app.add_subcommand(name, help);
        names[sub] = name;
        sub->add_option("--config", config_path, "JSON config file; flags override its keys");
        add_flags(sub, flags, {{"--output", "/output", 's', {}}, {"--threads", "/threads", 'i', {}}});
        return sub;
    };

    CLI::App* ingest = make("ingest", "Convert a CSV file, bundle, or synthetic cube into an HSI bundle");
    add_flags(ingest, flags,
              {{"--input", "/ingest/input", 's', {}}, {"--synthetic", "/ingest/synthetic", 'f', {}},
               {"--classes", "/ingest/classes", 'i', {}}, {"--bands", "/ingest/bands", 'i', {}},
               {"--subspace-dim", "/ingest/subspace_dim", 'i', {}},
               {"--pixels-per-class", "/ingest/pixels_per_class", 'i', {}}, {"--noise", "/ingest/noise", 'd', {}},
               {"--seed", "/ingest/seed", 'i', {}}, {"--width", "/ingest/width", 'i', {}}});

    CLI::App* split = make("split", "Draw a per-class dictionary/train/test split");
    add_flags(split, flags, kDataFlags);

    CLI::App* train_cmd = make("train", "Train the network parameters on the train split");
    add_flags(train_cmd, flags, kDataFlags);
    add_flags(train_cmd, flags,
              {{"--stages", "/solver/stages", 'i', {}}, {"--rho", "/solver/rho", 'd', {}},
               {"--eta", "/solver/eta", 'd', {}}, {"--tau", "/solver/tau", 'd', {}},
               {"--relax", "/solver/relax", 'd', {}}, {"--params", "/solver/params_file", 's', {}}});
    add_flags(train_cmd, flags, kTrainFlags);

    CLI::App* eval = make("eval", "Classify the test split and write a report");
    add_flags(eval, flags, kDataFlags);
    add_flags(eval, flags, kSolverFlags);
    add_flags(eval, flags, kTrainFlags);

    CLI::App* sweep_cmd = make("sweep", "Sweep one solver parameter over a grid, averaging over runs");
    add_flags(sweep_cmd, flags, kDataFlags);
    add_flags(sweep_cmd, flags, kSolverFlags);
    add_flags(sweep_cmd, flags, kTrainFlags);
    add_flags(sweep_cmd, flags,
              {{"--param", "/sweep/param", 's', {}}, {"--grid", "/sweep/grid", 's', {}},
               {"--runs", "/sweep/runs", 'i', {}}});

    CLI::App* gradcheck = make("gradcheck", "Compare analytic gradients with central differences");
    add_flags(gradcheck, flags,
              {{"--stages", "/gradcheck/stages", 'i', {}}, {"--seed", "/gradcheck/seed", 'i', {}},
               {"--step", "/gradcheck/step", 'd', {}}, {"--bands", "/gradcheck/bands", 'i', {}},
               {"--atoms", "/gradcheck/atoms", 'i', {}}, {"--classes", "/gradcheck/classes", 'i', {}}});

    make("report", "Summarize report.json or sweep.json in the output directory");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), kExitUsage);
    }

    CLI::App* active = app.get_subcommands().front();
    Experiment ex;
    ex.command = names.at(active);

    try {
        ex.doc = default_config();
        if (!config_path.empty()) {
            json file;
            try {
                file = json::parse(read_text(config_path));
            } catch (const json::parse_error& e) {
                throw ConfigError("config " + config_path + ": " + e.what());
            }
            if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
            merge(ex.doc, file);
            hash_input(ex, config_path);
        }
        for (Flag& f : flags) {
            if (f.option->count() == 0) continue;
            if (f.type != 'f' || f.present) ex.doc[json::json_pointer(f.pointer)] = convert_flag(f);
        }

        ex.output = get<std::string>(ex.doc, "/output");
        if (ex.output.empty()) throw ConfigError("output directory must not be empty");
        const int threads = get<int>(ex.doc, "/threads");
        if (threads < 0) throw ConfigError("threads must be >= 0");
        if (threads > 0) omp_set_num_threads(threads);

        const bool needs_data = ex.command == "split" || ex.command == "train" || ex.command == "eval" ||
                                ex.command == "sweep";
        if (needs_data) {
            ex.dataset = get<std::string>(ex.doc, "/dataset");
            try {
                ex.cube = load_dataset(ex, ex.dataset);
            } catch (const IngestError& e) {
                throw ConfigError(std::string("dataset: ") + e.what());
            }
            resolve_split(ex);
        }
        if (ex.command == "train") {
            ex.doc["solver"]["name"] = "asdn";
        }
        if (ex.command == "train" || ex.command == "eval" || ex.command == "sweep") {
            ex.solver = resolve_solver(ex);
            const auto* net = std::get_if<NetworkSpec>(&ex.solver);
            const bool wants_training = ex.command == "train" || get<bool>(ex.doc, "/train/enabled");
            if (net && wants_training && !(ex.command != "train" && ex.params_file)) {
                ex.training = resolve_training(ex.doc, net->params);
            }
        }

        if (ex.command == "ingest") return cmd_ingest(ex, out);
        if (ex.command == "split") return cmd_split(ex, out);
        if (ex.command == "train") return cmd_train(ex, out);
        if (ex.command == "eval") return cmd_eval(ex, out);
        if (ex.command == "sweep") return cmd_sweep(ex, out);
        if (ex.command == "gradcheck") return cmd_gradcheck(ex, out);
        return cmd_report(ex, out);
    } catch (const ConfigError& e) {
        return fail("config", e.what(), kExitConfig);
    } catch (const std::exception& e) {
        return fail("runtime", e.what(), kExitRuntime);
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

}  // namespace asdn::cli
