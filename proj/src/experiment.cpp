#include "squanv/experiment.hpp"

#include "squanv/error.hpp"
#include "squanv/random.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace squanv {

using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    ExperimentConfig, train_images, train_labels, test_images, test_labels, source, downscale,
    train_per_class, test_per_class, data_seed, n_filters, n_qubits, kernel_h, kernel_w, stride,
    n_blocks, pool, epochs, batch_size, learning_rate, lambda, rf_mode, grad_mode,
    rf_patch_samples, seed, beta1, beta2, epsilon, lambdas, seeds, sweep_filters, sweep_qubits,
    out, run_name, checkpoint, image_index, image)

json to_json(const ExperimentConfig &config) {
    json j;
    nlohmann::to_json(j, config);
    return j;
}

namespace {

// Integers are accepted where a float is expected, never the other way round.
bool same_kind(const json &expected, const json &v) {
    if (expected.is_string()) {
        return v.is_string();
    }
    if (expected.is_boolean()) {
        return v.is_boolean();
    }
    if (expected.is_number_unsigned()) {
        return v.is_number_unsigned();
    }
    if (expected.is_number_integer()) {
        return v.is_number_integer();
    }
    if (expected.is_number()) {
        return v.is_number();
    }
    if (expected.is_array()) {
        return v.is_array() &&
               std::all_of(v.begin(), v.end(), [&](const json &e) {
                   return expected.empty() || same_kind(expected.front(), e);
               });
    }
    return false;
}

} // namespace

ExperimentConfig config_from_json(const json &j) {
    require(j.is_object(), "config must be a flat JSON object");
    const json defaults = to_json(ExperimentConfig{});
    for (const auto &[key, value] : j.items()) {
        require(defaults.contains(key), "unknown config key '" + key + "'");
        require(same_kind(defaults[key], value),
                "config key '" + key + "' has the wrong type (" + value.dump() + ")");
    }
    try {
        return j.get<ExperimentConfig>();
    } catch (const json::exception &e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
}

ExperimentConfig load_config_file(const std::filesystem::path &path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open config file " + path.string());
    try {
        return config_from_json(json::parse(in));
    } catch (const json::parse_error &e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
}

void apply_override(ExperimentConfig &config, const std::string &key, const std::string &value) {
    json j = to_json(config);
    require(j.contains(key), "unknown config key '" + key + "'");
    json &slot = j[key];
    if (slot.is_string()) {
        slot = value;
    } else {
        const std::string text = slot.is_array() ? "[" + value + "]" : value;
        json parsed;
        try {
            parsed = json::parse(text);
        } catch (const json::parse_error &) {
            throw ConfigError("cannot parse value '" + value + "' for --" + key);
        }
        slot = parsed;
    }
    try {
        config = config_from_json(j);
    } catch (const ConfigError &) {
        throw ConfigError("value '" + value + "' has the wrong type for --" + key);
    }
}

RfMode parse_rf_mode(const std::string &s) {
    if (s == "diversity") {
        return RfMode::Diversity;
    }
    if (s == "as_written") {
        return RfMode::AsWritten;
    }
    throw ConfigError("rf_mode must be 'diversity' or 'as_written', got '" + s + "'");
}

GradMode parse_grad_mode(const std::string &s) {
    if (s == "adjoint") {
        return GradMode::Adjoint;
    }
    if (s == "paramshift") {
        return GradMode::ParamShift;
    }
    throw ConfigError("grad_mode must be 'adjoint' or 'paramshift', got '" + s + "'");
}

void ExperimentConfig::validate(bool check_files) const {
    require(downscale >= 1, "downscale must be >= 1");
    require(train_per_class >= 1 && test_per_class >= 1, "per-class counts must be >= 1");
    require(n_filters >= 1, "n_filters must be >= 1");
    require(n_filters >= 2 || lambda == 0.0,
            "lambda = " + format_number(lambda) + " requires n_filters >= 2");
    require(n_qubits >= 2 && n_qubits <= kMaxQubits, "n_qubits out of range");
    require(kernel_h >= 1 && kernel_w >= 1 && stride >= 1, "kernel and stride must be >= 1");
    require(n_blocks >= 1, "n_blocks must be >= 1");
    parse_rf_mode(rf_mode);
    parse_grad_mode(grad_mode);
    TrainConfig tc = train_config(*this);
    tc.validate(n_filters);
    for (const double l : lambdas) {
        require(l >= 0.0, "lambdas must be >= 0");
    }
    require(image_index >= 0, "image_index must be >= 0");
    if (check_files) {
        for (const auto *p : {&train_images, &train_labels, &test_images, &test_labels}) {
            require(std::filesystem::exists(*p), "dataset file not found: " + *p);
        }
    }
}

TrainConfig train_config(const ExperimentConfig &c) {
    TrainConfig t;
    t.epochs = c.epochs;
    t.batch_size = c.batch_size;
    t.learning_rate = c.learning_rate;
    t.lambda = c.lambda;
    t.rf_mode = parse_rf_mode(c.rf_mode);
    t.grad_mode = parse_grad_mode(c.grad_mode);
    t.rf_patch_samples = c.rf_patch_samples;
    t.seed = c.seed;
    t.beta1 = c.beta1;
    t.beta2 = c.beta2;
    t.epsilon = c.epsilon;
    return t;
}

LoadedData load_data(const ExperimentConfig &c) {
    c.validate(true);
    LoadedData d{load_idx(c.train_images, c.train_labels), load_idx(c.test_images, c.test_labels)};
    d.train.split = "train";
    d.test.split = "test";
    d.train.source = d.test.source = c.source;
    if (c.downscale > 1) {
        d.train = downscale(d.train, c.downscale);
        d.test = downscale(d.test, c.downscale);
    }
    d.train = subset(d.train, c.train_per_class, c.data_seed);
    d.test = subset(d.test, c.test_per_class, mix_seed(c.data_seed, 1));
    return d;
}

ModelSpec model_spec(const ExperimentConfig &c, const LoadedData &data) {
    ModelSpec s;
    s.image_h = data.train.height;
    s.image_w = data.train.width;
    s.n_qubits = c.n_qubits;
    s.kernel_h = c.kernel_h;
    s.kernel_w = c.kernel_w;
    s.stride = c.stride;
    s.n_blocks = c.n_blocks;
    s.n_filters = c.n_filters;
    s.classes = std::max(data.train.num_classes(), data.test.num_classes());
    s.pool = c.pool;
    s.validate();
    return s;
}

KernelShape qcnn_kernel(int n_qubits) {
    switch (n_qubits) {
    case 4:
        return {2, 2};
    case 8:
        return {2, 4};
    case 12:
        return {3, 4};
    case 16:
        return {4, 4};
    default:
        throw ConfigError("no QCNN kernel mapping for " + std::to_string(n_qubits) +
                          " qubits (supported: 4, 8, 12, 16)");
    }
}

int qcnn_blocks(int n_qubits) { return std::max(1, 48 / (3 * n_qubits)); }

std::string format_number(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::string metrics_csv(const RunMetrics &metrics) {
    std::ostringstream out;
    out << kMetricsHeader << '\n';
    for (const auto &r : metrics.epochs) {
        out << r.epoch << ',' << format_number(r.loss_ce) << ',' << format_number(r.loss_rf)
            << ',' << format_number(r.loss_total) << ',' << format_number(r.top1_train) << ','
            << format_number(r.top1_test) << ',' << format_number(r.feat_euclid_dist) << '\n';
    }
    return out.str();
}

namespace {

void write_text(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out(path);
    out << text;
    require(static_cast<bool>(out), "failed writing " + path.string());
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
    return buf;
}

std::filesystem::path fresh_dir(const std::filesystem::path &base) {
    std::filesystem::path dir = base;
    for (int k = 2; std::filesystem::exists(dir); ++k) {
        dir = base.string() + "-" + std::to_string(k);
    }
    std::filesystem::create_directories(dir);
    return dir;
}

void log_line(std::ostream *log, const std::string &text) {
    if (log != nullptr) {
        *log << text << std::endl;
    }
}

} // namespace

std::filesystem::path make_run_dir(const ExperimentConfig &c, const std::string &command) {
    const std::string leaf =
        c.run_name.empty() ? timestamp() + "-" + std::to_string(c.seed) : c.run_name;
    return fresh_dir(std::filesystem::path(c.out) / command / leaf);
}

TrainOutcome run_training(const ExperimentConfig &c, const LoadedData &data,
                          const std::filesystem::path &run_dir, std::ostream *log) {
    c.validate(false);
    std::filesystem::create_directories(run_dir);
    write_text(run_dir / "config.json", to_json(c).dump(2) + "\n");

    TrainState state = TrainState::fresh(SqcnnModel::create(model_spec(c, data), c.seed));
    const auto metrics = rf_train(
        train_config(c), data.train, data.test, state, [&](const EpochRecord &r, const TrainState &) {
            log_line(log, "epoch " + std::to_string(r.epoch) + " loss=" +
                              format_number(r.loss_total) + " ce=" + format_number(r.loss_ce) +
                              " rf=" + format_number(r.loss_rf) +
                              " train=" + format_number(r.top1_train) +
                              "% test=" + format_number(r.top1_test) +
                              "% dist=" + format_number(r.feat_euclid_dist));
        });

    write_text(run_dir / "metrics.csv", metrics_csv(metrics));
    save_checkpoint(run_dir / "checkpoint.json", to_json(c), state);
    return {run_dir, metrics};
}

TrainOutcome cmd_train(const ExperimentConfig &c, std::ostream *log) {
    c.validate(true);
    const auto data = load_data(c);
    const auto dir = make_run_dir(c, "train");
    log_line(log, "train: " + std::to_string(data.train.count) + " train / " +
                      std::to_string(data.test.count) + " test images -> " + dir.string());
    return run_training(c, data, dir, log);
}

SweepResult cmd_sweep_lambda(const ExperimentConfig &c, std::ostream *log) {
    require(!c.lambdas.empty(), "sweep-lambda needs at least one lambda");
    require(!c.seeds.empty(), "sweep-lambda needs at least one seed");
    for (const double l : c.lambdas) {
        require(l == 0.0 || c.n_filters >= 2, "lambda > 0 requires n_filters >= 2");
    }
    c.validate(true);
    const auto data = load_data(c);
    SweepResult result{make_run_dir(c, "sweep-lambda"), {}, {}};

    for (const double l : c.lambdas) {
        SweepMean mean{l, 0, 0.0, 0.0};
        for (const auto seed : c.seeds) {
            ExperimentConfig run = c;
            run.lambda = l;
            run.seed = seed;
            const std::string name =
                "lambda-" + format_number(l) + "_seed-" + std::to_string(seed);
            log_line(log, "sweep-lambda: " + name);
            const auto outcome = run_training(run, data, result.run_dir / name, log);
            const auto &last = outcome.metrics.epochs.back();
            result.runs.push_back({l, seed, last.top1_test, last.feat_euclid_dist});
            mean.runs += 1;
            mean.top1_test += last.top1_test;
            mean.feat_euclid_dist += last.feat_euclid_dist;
        }
        mean.top1_test /= mean.runs;
        mean.feat_euclid_dist /= mean.runs;
        result.means.push_back(mean);
    }

    std::ostringstream runs;
    runs << "lambda,seed,top1_test,feat_euclid_dist\n";
    for (const auto &r : result.runs) {
        runs << format_number(r.lambda) << ',' << r.seed << ',' << format_number(r.top1_test)
             << ',' << format_number(r.feat_euclid_dist) << '\n';
    }
    write_text(result.run_dir / "runs.csv", runs.str());
    std::ostringstream agg;
    agg << "lambda,runs,mean_top1_test,mean_feat_euclid_dist\n";
    for (const auto &m : result.means) {
        agg << format_number(m.lambda) << ',' << m.runs << ',' << format_number(m.top1_test)
            << ',' << format_number(m.feat_euclid_dist) << '\n';
    }
    write_text(result.run_dir / "aggregate.csv", agg.str());
    write_text(result.run_dir / "config.json", to_json(c).dump(2) + "\n");
    return result;
}

ScalabilityResult cmd_scalability(const ExperimentConfig &c, std::ostream *log) {
    require(!c.sweep_filters.empty() || !c.sweep_qubits.empty(),
            "scalability needs filters or qubits to sweep");
    require(!c.seeds.empty(), "scalability needs at least one seed");
    for (const int nf : c.sweep_filters) {
        require(nf >= 1, "sweep_filters entries must be >= 1");
        require(c.lambda == 0.0 || nf >= 2, "lambda > 0 requires every sweep_filters entry >= 2");
    }
    for (const int nq : c.sweep_qubits) {
        qcnn_kernel(nq);
    }
    c.validate(true);
    const auto data = load_data(c);
    ScalabilityResult result{make_run_dir(c, "scalability"), {}, {}};

    auto run_group = [&](const std::string &model, int nf, int nq, const ExperimentConfig &base) {
        ScalabilityMean mean{model, nf, nq, 0, 0.0};
        for (const auto seed : c.seeds) {
            ExperimentConfig run = base;
            run.seed = seed;
            const std::string name = model + "-f" + std::to_string(nf) + "-q" +
                                     std::to_string(nq) + "_seed-" + std::to_string(seed);
            log_line(log, "scalability: " + name);
            const auto outcome = run_training(run, data, result.run_dir / name, log);
            const double top1 = outcome.metrics.epochs.back().top1_test;
            result.runs.push_back({model, nf, nq, seed, top1});
            mean.runs += 1;
            mean.top1_test += top1;
        }
        mean.top1_test /= mean.runs;
        result.means.push_back(mean);
    };

    for (const int nf : c.sweep_filters) {
        ExperimentConfig base = c;
        base.n_filters = nf;
        run_group("sqcnn", nf, c.n_qubits, base);
    }
    for (const int nq : c.sweep_qubits) {
        const auto k = qcnn_kernel(nq);
        ExperimentConfig base = c;
        base.n_filters = 1;
        base.lambda = 0.0;
        base.n_qubits = nq;
        base.kernel_h = k.h;
        base.kernel_w = k.w;
        base.stride = k.w;
        base.n_blocks = qcnn_blocks(nq);
        run_group("qcnn", 1, nq, base);
    }

    std::ostringstream runs;
    runs << "model,n_filters,n_qubits,seed,top1_test\n";
    for (const auto &r : result.runs) {
        runs << r.model << ',' << r.n_filters << ',' << r.n_qubits << ',' << r.seed << ','
             << format_number(r.top1_test) << '\n';
    }
    write_text(result.run_dir / "runs.csv", runs.str());
    std::ostringstream agg;
    agg << "model,n_filters,n_qubits,runs,mean_top1_test\n";
    for (const auto &m : result.means) {
        agg << m.model << ',' << m.n_filters << ',' << m.n_qubits << ',' << m.runs << ','
            << format_number(m.top1_test) << '\n';
    }
    write_text(result.run_dir / "aggregate.csv", agg.str());
    write_text(result.run_dir / "config.json", to_json(c).dump(2) + "\n");
    return result;
}

std::uint8_t feature_to_gray(double v) {
    const double clamped = std::clamp(v, -1.0, 1.0);
    return static_cast<std::uint8_t>(std::lround((clamped + 1.0) / 2.0 * 255.0));
}

void write_pgm(const std::filesystem::path &path, int height, int width,
               const std::vector<std::uint8_t> &pixels) {
    require(pixels.size() == static_cast<std::size_t>(height) * width,
            "PGM buffer does not match its dimensions");
    std::ofstream out(path, std::ios::binary);
    out << "P5\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char *>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
    require(static_cast<bool>(out), "failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IngestError("cannot open image " + path.string());
    }
    auto token = [&]() {
        std::string t;
        char ch = 0;
        while (in.get(ch)) {
            if (ch == '#') {
                std::string skip;
                std::getline(in, skip);
            } else if (!std::isspace(static_cast<unsigned char>(ch))) {
                t.push_back(ch);
                break;
            }
        }
        while (in.get(ch) && !std::isspace(static_cast<unsigned char>(ch))) {
            t.push_back(ch);
        }
        return t;
    };
    if (token() != "P5") {
        throw IngestError(path.string() + ": only binary PGM (P5) is supported");
    }
    GrayImage img;
    int maxval = 0;
    try {
        img.width = std::stoi(token());
        img.height = std::stoi(token());
        maxval = std::stoi(token());
    } catch (const std::exception &) {
        throw IngestError(path.string() + ": malformed PGM header");
    }
    if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255) {
        throw IngestError(path.string() + ": unsupported PGM dimensions or depth");
    }
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(img.width) * img.height);
    in.read(reinterpret_cast<char *>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw IngestError(path.string() + ": truncated PGM, expected " +
                          std::to_string(raw.size()) + " pixel bytes, found " +
                          std::to_string(in.gcount()));
    }
    img.pixels.reserve(raw.size());
    for (const auto v : raw) {
        img.pixels.push_back(static_cast<double>(v) / maxval);
    }
    return img;
}

std::vector<std::filesystem::path> cmd_export_features(const ExperimentConfig &c,
                                                       std::ostream *log) {
    require(!c.checkpoint.empty(), "export-features needs --checkpoint");
    const auto ckpt = load_checkpoint(c.checkpoint);
    const auto &model = ckpt.state.model;

    std::vector<double> pixels;
    if (!c.image.empty()) {
        const auto img = read_pgm(c.image);
        require(img.height == model.spec.image_h && img.width == model.spec.image_w,
                "image is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                    ", checkpoint expects " + std::to_string(model.spec.image_h) + "x" +
                    std::to_string(model.spec.image_w));
        pixels = img.pixels;
    } else {
        // The checkpoint's own config says which test split it was evaluated on.
        const auto data = load_data(config_from_json(ckpt.config));
        require(c.image_index < data.test.count,
                "image_index " + std::to_string(c.image_index) + " out of range (test split has " +
                    std::to_string(data.test.count) + " images)");
        const auto v = data.test.image(c.image_index).pixels;
        pixels.assign(v.begin(), v.end());
    }

    const ImageView view{pixels, model.spec.image_h, model.spec.image_w};
    const auto grid = extract_patches(view, model.spec.kernel_h, model.spec.kernel_w,
                                      model.spec.stride);
    const auto features = forward(model.bank, grid, false).features;

    const auto dir = make_run_dir(c, "export-features");
    std::vector<std::filesystem::path> files;
    const int nq = model.bank.tmpl.n_qubits();
    for (int ch = 0; ch < features.channels; ++ch) {
        std::vector<std::uint8_t> gray;
        gray.reserve(static_cast<std::size_t>(features.height) * features.width);
        for (int i = 0; i < features.height; ++i) {
            for (int j = 0; j < features.width; ++j) {
                gray.push_back(feature_to_gray(features.at(ch, i, j)));
            }
        }
        const auto path = dir / ("feat_f" + std::to_string(ch / nq) + "_q" +
                                 std::to_string(ch % nq) + ".pgm");
        write_pgm(path, features.height, features.width, gray);
        files.push_back(path);
    }
    log_line(log, "export-features: wrote " + std::to_string(files.size()) + " PGM files to " +
                      dir.string());
    return files;
}

} // namespace squanv
