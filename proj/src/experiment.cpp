#include "refseg/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>

namespace refseg {

namespace {

std::string fmt(double v) {
    char buf[40];
    if (std::isnan(v)) return "nan";
    std::snprintf(buf, sizeof buf, "%.9f", v);
    return buf;
}

void write_metrics_rows(std::ofstream& metrics, int seed, int epoch, const char* split,
                        const IoUReport& report) {
    for (size_t j = 0; j < report.class_iou.size(); ++j) {
        metrics << seed << ',' << epoch << ',' << split << ',' << j << ','
                << (report.class_valid[j] ? fmt(report.class_iou[j]) : "nan") << ','
                << fmt(report.miou) << '\n';
    }
}

void log_aug_record(std::ofstream& log, int seed, int epoch, int step,
                    const char* role, size_t index, const AugRecord& rec) {
    log << "aug seed=" << seed << " epoch=" << epoch << " step=" << step << " "
        << role << "-" << index << " kind="
        << (rec.kind == AugKind::weak ? "weak" : "strong") << " flip=" << rec.hflip
        << " angle=" << fmt(rec.angle_deg) << " sigma=" << fmt(rec.noise_sigma)
        << " jitter=" << fmt(rec.jitter) << " cutout=" << rec.cutout.y0 << ','
        << rec.cutout.x0 << ',' << rec.cutout.h << ',' << rec.cutout.w << '\n';
}

void log_eval(std::ofstream& log, int seed, int epoch, const char* split,
              const IoUReport& report) {
    log << "eval seed=" << seed << " epoch=" << epoch << " split=" << split
        << " miou=" << fmt(report.miou);
    for (size_t j = 0; j < report.class_iou.size(); ++j)
        if (!report.class_valid[j])
            log << " empty-union class=" << j << " excluded";
    log << '\n';
}

}  // namespace

void summarize(ExperimentResult& result) {
    const size_t n = result.seeds.size();
    if (n == 0) return;
    double sum = 0.0;
    for (const auto& s : result.seeds) sum += s.test_miou;
    result.mean_miou = sum / static_cast<double>(n);
    if (n < 2) {
        result.std_miou = 0.0;
        return;
    }
    double sq = 0.0;
    for (const auto& s : result.seeds) {
        double d = s.test_miou - result.mean_miou;
        sq += d * d;
    }
    result.std_miou = std::sqrt(sq / static_cast<double>(n - 1));
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, uint64_t master_seed,
                                const std::filesystem::path& out_dir,
                                std::ostream* progress) {
    std::filesystem::create_directories(out_dir);
    std::ofstream metrics(out_dir / "metrics.csv");
    std::ofstream poollog(out_dir / "poollog.csv");
    std::ofstream runlog(out_dir / "runlog.txt");
    if (!metrics || !poollog || !runlog)
        throw std::runtime_error("cannot write outputs under " + out_dir.string());
    {
        std::ofstream echo(out_dir / "config.resolved");
        echo << resolved_config_json(cfg);
    }
    metrics << "seed,epoch,split,class,iou,miou\n";
    poollog << "seed,epoch,step,images\n";
    runlog << "method=" << method_name(cfg.train.method) << " task="
           << task_name(cfg.scene.task) << " labeled=" << cfg.n_labeled
           << " unlabeled=" << cfg.n_unlabeled << " seeds=" << cfg.n_seeds
           << " epochs=" << cfg.effective_epochs() << " steps_per_epoch="
           << cfg.train.steps_per_epoch << '\n';

    ExperimentResult result;
    const int epochs = cfg.effective_epochs();
    bool warned_clamp = false;

    for (int seed = 0; seed < cfg.n_seeds; ++seed) {
        SeededRng root =
            SeededRng(master_seed).derive("seed-" + std::to_string(seed));
        Dataset data =
            generate_dataset(cfg.scene, root.derive("data"), cfg.n_labeled,
                             cfg.n_unlabeled, cfg.n_validation, cfg.n_test);
        PixelModel model = PixelModel::init(cfg.model, root.derive("init"));

        PixelModel best = model;
        double best_val = -1.0;
        int best_epoch = -1;

        for (int epoch = 0; epoch < epochs; ++epoch) {
            for (int step = 0; step < cfg.train.steps_per_epoch; ++step) {
                StepLog slog;
                LossReport losses =
                    train_step(model, data, cfg.train, root, epoch, step, &slog);

                poollog << seed << ',' << epoch << ',' << step << ',';
                for (size_t i = 0; i < slog.pool_images.size(); ++i)
                    poollog << (i ? ";" : "") << slog.pool_images[i];
                poollog << '\n';
                for (size_t i = 0; i < slog.pool_aug.size(); ++i)
                    log_aug_record(runlog, seed, epoch, step, "pool", i,
                                   slog.pool_aug[i]);
                for (size_t i = 0; i < slog.unlabeled_aug.size(); ++i)
                    log_aug_record(runlog, seed, epoch, step, "unlab", i,
                                   slog.unlabeled_aug[i]);
                if ((slog.k_clamped || slog.s_clamped) && !warned_clamp) {
                    warned_clamp = true;
                    runlog << "warn clamped"
                           << (slog.s_clamped ? " subsample-side" : "")
                           << (slog.k_clamped ? " neighbor-count" : "") << '\n';
                }
                runlog << "step seed=" << seed << " epoch=" << epoch << " step="
                       << step << " total=" << fmt(losses.total) << " supervised="
                       << fmt(losses.supervised) << '/' << losses.supervised_pixels
                       << " unlabeled=" << fmt(losses.unlabeled) << '/'
                       << losses.unlabeled_pixels << " consistency="
                       << fmt(losses.consistency) << '/' << losses.consistency_pixels
                       << '\n';
            }

            const bool last = epoch + 1 == epochs;
            if ((epoch + 1) % cfg.train.eval_every == 0 || last) {
                IoUReport val = evaluate(model, data.validation);
                write_metrics_rows(metrics, seed, epoch, "validation", val);
                log_eval(runlog, seed, epoch, "validation", val);
                if (progress)
                    *progress << "seed " << seed << " epoch " << epoch
                              << " validation miou " << fmt(val.miou) << "\n";
                if (val.miou > best_val) {  // ties keep the earlier epoch
                    best_val = val.miou;
                    best_epoch = epoch;
                    best = model;
                }
            }
        }

        IoUReport test = evaluate(best, data.test);
        write_metrics_rows(metrics, seed, best_epoch, "test", test);
        log_eval(runlog, seed, best_epoch, "test", test);
        if (progress)
            *progress << "seed " << seed << " best epoch " << best_epoch
                      << " test miou " << fmt(test.miou) << "\n";

        save_checkpoint(best, out_dir / "checkpoints" /
                                  ("seed-" + std::to_string(seed)) / "best");
        save_checkpoint(model, out_dir / "checkpoints" /
                                   ("seed-" + std::to_string(seed)) / "final");

        result.seeds.push_back({seed, best_epoch, best_val, test.miou});
    }

    summarize(result);
    std::ofstream summary(out_dir / "summary.csv");
    summary << "method,n_labeled,mean_miou,std_miou\n";
    summary << method_name(cfg.train.method) << ',' << cfg.n_labeled << ','
            << fmt(result.mean_miou) << ',' << fmt(result.std_miou) << '\n';
    runlog << "summary mean_miou=" << fmt(result.mean_miou)
           << " std_miou=" << fmt(result.std_miou) << '\n';
    return result;
}

}  // namespace refseg
