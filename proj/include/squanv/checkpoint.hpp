#pragma once

#include "squanv/train.hpp"

#include <json.hpp>

#include <filesystem>

namespace squanv {

/**
 * Checkpoints are a single JSON document:
 *
 *   {
 *     "format": "squanv-checkpoint", "version": 1,
 *     "config": { ...experiment config echo... },
 *     "spec": { image_h, image_w, n_qubits, kernel_h, kernel_w, stride,
 *               n_blocks, n_filters, classes, pool },
 *     "epoch": E, "step": t,
 *     "filters": [[theta...], ...],
 *     "head": { "classes": C, "inputs": D, "weights": [...], "bias": [...] },
 *     "adam": [ { "m": [...], "v": [...] }, ... ]   // filters, weights, bias
 *   }
 *
 * Doubles are written with round-trip precision, so a reload reproduces
 * predictions bit-exactly. Readers accept any version <= kCheckpointVersion.
 */
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    nlohmann::json config;
    TrainState state;
};

nlohmann::json to_json(const ModelSpec &spec);
ModelSpec model_spec_from_json(const nlohmann::json &j);

void save_checkpoint(const std::filesystem::path &path, const nlohmann::json &config,
                     const TrainState &state);

/// Throws IngestError on unreadable, corrupt, or inconsistent files.
Checkpoint load_checkpoint(const std::filesystem::path &path);

} // namespace squanv
