#pragma once

#include "squanv/checkpoint.hpp"
#include "squanv/data.hpp"
#include "squanv/train.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace squanv {

/// Flat experiment configuration; every field is one JSON key of the same
/// name and one `--<key>` CLI flag.
struct ExperimentConfig {
    // dataset
    std::string train_images = "data/mnist5k/train/images-idx3-ubyte.gz";
    std::string train_labels = "data/mnist5k/train/labels-idx1-ubyte.gz";
    std::string test_images = "data/mnist5k/test/images-idx3-ubyte.gz";
    std::string test_labels = "data/mnist5k/test/labels-idx1-ubyte.gz";
    std::string source = "mnist";
    int downscale = 2;
    int train_per_class = 30;
    int test_per_class = 20;
    std::uint64_t data_seed = 0;

    // model
    int n_filters = 2;
    int n_qubits = 4;
    int kernel_h = 2;
    int kernel_w = 2;
    int stride = 2;
    int n_blocks = 4;
    bool pool = false;

    // training
    int epochs = 15;
    int batch_size = 16;
    double learning_rate = 1e-4;
    double lambda = 0.0;
    std::string rf_mode = "diversity"; // diversity | as_written
    std::string grad_mode = "adjoint"; // adjoint | paramshift
    int rf_patch_samples = 4;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    // experiment sweeps
    std::vector<double> lambdas = {0.0, 0.1, 0.5};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::vector<int> sweep_filters = {2, 3, 4};
    std::vector<int> sweep_qubits = {8, 12, 16};

    // output and feature export
    std::string out = "runs";
    std::string run_name; // replaces the timestamp directory when set
    std::string checkpoint;
    int image_index = 0;
    std::string image; // optional binary PGM instead of a test-split index

    /// Checks value ranges; with check_files, also that dataset paths exist.
    void validate(bool check_files) const;
};

nlohmann::json to_json(const ExperimentConfig &config);

/// Missing keys keep their defaults; unknown keys are a ConfigError.
ExperimentConfig config_from_json(const nlohmann::json &j);

ExperimentConfig load_config_file(const std::filesystem::path &path);

/// Applies a `--key value` override; lists are comma-separated.
void apply_override(ExperimentConfig &config, const std::string &key,
                    const std::string &value);

TrainConfig train_config(const ExperimentConfig &config);
RfMode parse_rf_mode(const std::string &s);
GradMode parse_grad_mode(const std::string &s);

struct LoadedData {
    ImageDataset train;
    ImageDataset test;
};

/// Loads, downscales, and subsets both splits as configured.
LoadedData load_data(const ExperimentConfig &config);

ModelSpec model_spec(const ExperimentConfig &config, const LoadedData &data);

/// Kernel used by the single-filter QCNN baseline with n_qubits qubits
/// (4 -> 2x2, 8 -> 2x4, 12 -> 3x4, 16 -> 4x4); anything else is a ConfigError.
struct KernelShape {
    int h = 0;
    int w = 0;
};
KernelShape qcnn_kernel(int n_qubits);

/// Blocks per upload keeping the parameter count near 48 (at least one).
int qcnn_blocks(int n_qubits);

inline constexpr const char *kMetricsHeader =
    "epoch,loss_ce,loss_rf,loss_total,top1_train,top1_test,feat_euclid_dist";

std::string format_number(double v);
std::string metrics_csv(const RunMetrics &metrics);

/// `<out>/<command>/<timestamp>-<seed>` (or `<out>/<command>/<run_name>`),
/// created fresh; a numeric suffix avoids collisions.
std::filesystem::path make_run_dir(const ExperimentConfig &config, const std::string &command);

struct TrainOutcome {
    std::filesystem::path run_dir;
    RunMetrics metrics;
};

/// Trains into run_dir: metrics.csv, checkpoint.json, config.json.
TrainOutcome run_training(const ExperimentConfig &config, const LoadedData &data,
                          const std::filesystem::path &run_dir, std::ostream *log);

TrainOutcome cmd_train(const ExperimentConfig &config, std::ostream *log);

struct SweepRun {
    double lambda = 0.0;
    std::uint64_t seed = 0;
    double top1_test = 0.0;
    double feat_euclid_dist = 0.0;
};

struct SweepMean {
    double lambda = 0.0;
    int runs = 0;
    double top1_test = 0.0;
    double feat_euclid_dist = 0.0;
};

struct SweepResult {
    std::filesystem::path run_dir;
    std::vector<SweepRun> runs;
    std::vector<SweepMean> means;
};

/// One training per (lambda, seed); writes runs.csv and aggregate.csv.
SweepResult cmd_sweep_lambda(const ExperimentConfig &config, std::ostream *log);

struct ScalabilityRun {
    std::string model; // "sqcnn" | "qcnn"
    int n_filters = 0;
    int n_qubits = 0;
    std::uint64_t seed = 0;
    double top1_test = 0.0;
};

struct ScalabilityMean {
    std::string model;
    int n_filters = 0;
    int n_qubits = 0;
    int runs = 0;
    double top1_test = 0.0;
};

struct ScalabilityResult {
    std::filesystem::path run_dir;
    std::vector<ScalabilityRun> runs;
    std::vector<ScalabilityMean> means;
};

/// sQCNN runs for each sweep_filters entry (configured qubits/kernel) and
/// single-filter QCNN runs for each sweep_qubits entry (kernel per
/// qcnn_kernel, lambda forced to 0), each over all seeds.
ScalabilityResult cmd_scalability(const ExperimentConfig &config, std::ostream *log);

/// Writes feat_f{l}_q{q}.pgm for every channel of one image's features.
std::vector<std::filesystem::path> cmd_export_features(const ExperimentConfig &config,
                                                       std::ostream *log);

/// Maps [-1, 1] to [0, 255] with rounding half away from zero.
std::uint8_t feature_to_gray(double v);

void write_pgm(const std::filesystem::path &path, int height, int width,
               const std::vector<std::uint8_t> &pixels);

struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<double> pixels; // [0, 1]
};
GrayImage read_pgm(const std::filesystem::path &path);

} // namespace squanv
