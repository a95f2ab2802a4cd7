// squanv: experiment driver for scalable quanvolutional networks.
//
//   squanv train            [--config FILE] [--<key> VALUE ...]
//   squanv sweep-lambda     ...
//   squanv scalability      ...
//   squanv export-features  --checkpoint FILE [--image_index N | --image FILE.pgm]
//   squanv gradcheck        [--seed N]
//
// Every key of the flat JSON config is also a flag; flags override the file.

#include "squanv/error.hpp"
#include "squanv/experiment.hpp"
#include "squanv/gradcheck.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>

namespace {

struct Command {
    CLI::App *app = nullptr;
    std::string config_path;
    std::map<std::string, std::string> overrides;
};

Command add_command(CLI::App &root, const std::string &name, const std::string &help) {
    Command cmd;
    cmd.app = root.add_subcommand(name, help);
    return cmd;
}

void add_config_flags(Command &cmd) {
    cmd.app->add_option("--config", cmd.config_path, "flat JSON config file");
    const auto defaults = squanv::to_json(squanv::ExperimentConfig{});
    for (const auto &[key, value] : defaults.items()) {
        auto *opt = cmd.app->add_option_function<std::string>(
            "--" + key, [&cmd, key = key](const std::string &v) { cmd.overrides[key] = v; },
            "default: " + (value.is_string() ? value.get<std::string>() : value.dump()));
        opt->type_name(value.is_array() ? "LIST" : "VALUE");
    }
}

squanv::ExperimentConfig resolve(const Command &cmd) {
    auto config = cmd.config_path.empty() ? squanv::ExperimentConfig{}
                                          : squanv::load_config_file(cmd.config_path);
    for (const auto &[key, value] : cmd.overrides) {
        squanv::apply_override(config, key, value);
    }
    return config;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App root{"Scalable quanvolutional neural networks with reverse-fidelity training"};
    root.require_subcommand(1);

    // Commands hold references captured by option callbacks; keep them stable.
    std::map<std::string, Command> commands;
    for (const auto &[name, help] : std::vector<std::pair<std::string, std::string>>{
             {"train", "train one model and write metrics.csv + checkpoint"},
             {"sweep-lambda", "train over lambdas x seeds and aggregate"},
             {"scalability", "sQCNN filter sweep vs single-filter QCNN qubit sweep"},
             {"export-features", "write one PGM per feature channel of an image"},
             {"gradcheck", "cross-check the gradient engines"}}) {
        commands.emplace(name, add_command(root, name, help));
    }
    for (auto &[name, cmd] : commands) {
        add_config_flags(cmd);
    }
    double shift = squanv::kParamShift;
    commands["gradcheck"].app->add_option("--shift", shift, "parameter-shift amount (harness self-test)");

    CLI11_PARSE(root, argc, argv);

    try {
        for (auto &[name, cmd] : commands) {
            if (!cmd.app->parsed()) {
                continue;
            }
            const auto config = resolve(cmd);
            if (name == "train") {
                const auto outcome = squanv::cmd_train(config, &std::cerr);
                std::cout << outcome.run_dir.string() << '\n';
            } else if (name == "sweep-lambda") {
                const auto result = squanv::cmd_sweep_lambda(config, &std::cerr);
                std::cout << result.run_dir.string() << '\n';
            } else if (name == "scalability") {
                const auto result = squanv::cmd_scalability(config, &std::cerr);
                std::cout << result.run_dir.string() << '\n';
            } else if (name == "export-features") {
                for (const auto &f : squanv::cmd_export_features(config, &std::cerr)) {
                    std::cout << f.string() << '\n';
                }
            } else if (name == "gradcheck") {
                const auto report = squanv::run_gradcheck({config.seed, 20, shift});
                for (const auto &e : report.entries) {
                    std::printf("%-4s %-52s max_dev=%.3e tol=%.0e\n", e.passed ? "ok" : "FAIL",
                                e.name.c_str(), e.max_deviation, e.tolerance);
                }
                return report.passed() ? 0 : 1;
            }
        }
    } catch (const squanv::ConfigError &e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const squanv::IngestError &e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 3;
    } catch (const squanv::DivergenceError &e) {
        std::cerr << "training diverged: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
