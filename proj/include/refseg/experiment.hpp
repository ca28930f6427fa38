#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "refseg/config.hpp"
#include "refseg/trainer.hpp"

namespace refseg {

struct SeedResult {
    int seed_index = 0;
    int best_epoch = 0;       // epoch whose checkpoint won on validation
    double best_val_miou = 0.0;
    double test_miou = 0.0;
};

struct ExperimentResult {
    std::vector<SeedResult> seeds;
    double mean_miou = 0.0;
    double std_miou = 0.0;  // sample standard deviation; 0 for a single seed
};

/// Trains cfg.n_seeds replicates and writes, under out_dir: metrics.csv,
/// summary.csv, config.resolved, runlog.txt, poollog.csv, and per-seed
/// checkpoints. Fully determined by (cfg, master_seed) in single-worker
/// mode. `progress`, when given, receives one line per evaluation.
ExperimentResult run_experiment(const ExperimentConfig& cfg, uint64_t master_seed,
                                const std::filesystem::path& out_dir,
                                std::ostream* progress);

/// mean/std of test mIoU over seeds (sample std, n-1 denominator).
void summarize(ExperimentResult& result);

}  // namespace refseg
