#pragma once

#include <filesystem>
#include <string>

#include "refseg/model.hpp"
#include "refseg/synth.hpp"
#include "refseg/trainer.hpp"

namespace refseg {

/// Fully resolved experiment description. Loaded from a JSON document;
/// every field has a documented default, unknown keys are rejected with
/// their path, and the resolved state echoes back out as JSON.
struct ExperimentConfig {
    SceneSpec scene;
    int n_labeled = 3;
    int n_unlabeled = 200;
    int n_validation = 16;
    int n_test = 16;
    int n_seeds = 5;
    int iteration_multiplier = 1;  // scales epochs, for slow-converging methods

    ModelConfig model;
    TrainConfig train;

    /// Neighbor count as requested in the config, kept separate from the
    /// resolved train.pool.neighbor_count so sweeps can re-resolve after
    /// overriding pool parameters. fraction > 0 wins over count.
    int neighbor_request_count = 7000;
    double neighbor_request_fraction = 0.0;

    std::string out_dir = "runs/exp";

    /// Epoch budget after the multiplier.
    int effective_epochs() const { return train.epochs * iteration_multiplier; }
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses, validates, applies defaults and cross-field rules (threshold
/// range per task kind, neighbor count clamped to the reference set size,
/// fractional neighbor forms like 0.25 or "25%").
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::string& origin);

/// Collapses the neighbor request into an absolute train.pool.neighbor_count
/// for the reference set size the run will build (pool size times clamped
/// subsample side squared). Called by the loader; sweeps call it again after
/// overriding pool fields.
void resolve_pool_neighbors(ExperimentConfig& cfg);

/// The resolved configuration as a JSON document (the echo written next to
/// every run's outputs).
std::string resolved_config_json(const ExperimentConfig& cfg);

}  // namespace refseg
