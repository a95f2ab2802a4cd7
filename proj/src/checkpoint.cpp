#include "squanv/checkpoint.hpp"

#include "squanv/error.hpp"

#include <fstream>

namespace squanv {

using nlohmann::json;

json to_json(const ModelSpec &s) {
    return {{"image_h", s.image_h},   {"image_w", s.image_w},   {"n_qubits", s.n_qubits},
            {"kernel_h", s.kernel_h}, {"kernel_w", s.kernel_w}, {"stride", s.stride},
            {"n_blocks", s.n_blocks}, {"n_filters", s.n_filters}, {"classes", s.classes},
            {"pool", s.pool}};
}

ModelSpec model_spec_from_json(const json &j) {
    ModelSpec s;
    s.image_h = j.at("image_h").get<int>();
    s.image_w = j.at("image_w").get<int>();
    s.n_qubits = j.at("n_qubits").get<int>();
    s.kernel_h = j.at("kernel_h").get<int>();
    s.kernel_w = j.at("kernel_w").get<int>();
    s.stride = j.at("stride").get<int>();
    s.n_blocks = j.at("n_blocks").get<int>();
    s.n_filters = j.at("n_filters").get<int>();
    s.classes = j.at("classes").get<int>();
    s.pool = j.at("pool").get<bool>();
    return s;
}

void save_checkpoint(const std::filesystem::path &path, const json &config,
                     const TrainState &state) {
    json adam = json::array();
    for (const auto &m : state.moments) {
        adam.push_back({{"m", m.m}, {"v", m.v}});
    }
    const json doc = {
        {"format", "squanv-checkpoint"},
        {"version", kCheckpointVersion},
        {"config", config},
        {"spec", to_json(state.model.spec)},
        {"epoch", state.epoch},
        {"step", state.step},
        {"filters", state.model.bank.params},
        {"head",
         {{"classes", state.model.head.classes},
          {"inputs", state.model.head.inputs},
          {"weights", state.model.head.weights},
          {"bias", state.model.head.bias}}},
        {"adam", adam},
    };
    std::ofstream out(path);
    if (!out) {
        throw IngestError("cannot write checkpoint " + path.string());
    }
    out << doc.dump(1) << '\n';
    if (!out) {
        throw IngestError("failed writing checkpoint " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IngestError("cannot open checkpoint " + path.string());
    }
    try {
        const json doc = json::parse(in);
        if (doc.at("format").get<std::string>() != "squanv-checkpoint") {
            throw IngestError(path.string() + ": not a squanv checkpoint");
        }
        const int version = doc.at("version").get<int>();
        if (version < 1 || version > kCheckpointVersion) {
            throw IngestError(path.string() + ": unsupported checkpoint version " +
                              std::to_string(version));
        }
        const ModelSpec spec = model_spec_from_json(doc.at("spec"));
        spec.validate();

        SqcnnModel model{spec,
                         {build_squanv_template(spec.n_qubits, spec.kernel_h, spec.kernel_w,
                                                spec.n_blocks),
                          doc.at("filters").get<std::vector<ParamVector>>()},
                         {}};
        const auto &head = doc.at("head");
        model.head.classes = head.at("classes").get<int>();
        model.head.inputs = head.at("inputs").get<int>();
        model.head.weights = head.at("weights").get<std::vector<double>>();
        model.head.bias = head.at("bias").get<std::vector<double>>();
        model.validate();

        TrainState state = TrainState::fresh(std::move(model));
        state.epoch = doc.at("epoch").get<int>();
        state.step = doc.at("step").get<long>();
        const auto &adam = doc.at("adam");
        if (adam.size() != state.moments.size()) {
            throw IngestError(path.string() + ": Adam state has " +
                              std::to_string(adam.size()) + " blocks, expected " +
                              std::to_string(state.moments.size()));
        }
        for (std::size_t k = 0; k < adam.size(); ++k) {
            auto m = adam[k].at("m").get<std::vector<double>>();
            auto v = adam[k].at("v").get<std::vector<double>>();
            if (m.size() != state.moments[k].m.size() || v.size() != m.size()) {
                throw IngestError(path.string() + ": Adam block " + std::to_string(k) +
                                  " has the wrong size");
            }
            state.moments[k].m = std::move(m);
            state.moments[k].v = std::move(v);
        }
        return {doc.at("config"), std::move(state)};
    } catch (const json::exception &e) {
        throw IngestError(path.string() + ": corrupt checkpoint (" + e.what() + ")");
    } catch (const ConfigError &e) {
        throw IngestError(path.string() + ": inconsistent checkpoint (" + e.what() + ")");
    }
}

} // namespace squanv
