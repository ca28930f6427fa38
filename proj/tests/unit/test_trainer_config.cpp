#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "refseg/config.hpp"
#include "refseg/experiment.hpp"
#include "refseg/trainer.hpp"

using namespace refseg;
namespace fs = std::filesystem;

namespace {

Dataset tiny_dataset(TaskKind task, uint64_t seed) {
    SceneSpec spec;
    spec.height = 16;
    spec.width = 16;
    spec.task = task;
    spec.num_classes = task == TaskKind::multi_class ? 3 : 2;
    return generate_dataset(spec, SeededRng(seed), 3, 8, 2, 2);
}

TrainConfig small_train_config(Method m) {
    TrainConfig cfg;
    cfg.method = m;
    cfg.pool.pool_size = 2;
    cfg.pool.subsample_side = 8;
    cfg.pool.neighbor_count = 40;
    cfg.unlabeled_per_batch = 2;
    return cfg;
}

ModelConfig small_model_config(const Dataset& data) {
    ModelConfig cfg;
    cfg.feature_dim = 6;
    cfg.num_classes = data.num_classes;
    cfg.task = data.task;
    return cfg;
}

}  // namespace

TEST_SUITE("trainer") {
    TEST_CASE("method table round-trips") {
        for (Method m : {Method::baseline, Method::pseudolabel,
                         Method::nearest_neighbor, Method::fixmatch, Method::rpg,
                         Method::rpg_plus})
            CHECK(parse_method(method_name(m)) == m);
        CHECK_THROWS_AS((void)parse_method("frobnicate"), std::invalid_argument);
        CHECK_FALSE(method_uses_unlabeled(Method::baseline));
        CHECK(method_uses_matching(Method::nearest_neighbor));
        CHECK(method_uses_consistency(Method::rpg_plus));
        CHECK_FALSE(method_uses_consistency(Method::rpg));
        CHECK(method_uses_tau(Method::fixmatch));
        CHECK_FALSE(method_uses_tau(Method::nearest_neighbor));
    }

    TEST_CASE("one step trains and reports finite losses for every method") {
        Dataset data = tiny_dataset(TaskKind::multi_class, 200);
        for (Method m : {Method::baseline, Method::pseudolabel,
                         Method::nearest_neighbor, Method::fixmatch, Method::rpg,
                         Method::rpg_plus}) {
            TrainConfig cfg = small_train_config(m);
            PixelModel model =
                PixelModel::init(small_model_config(data), SeededRng(201));
            StepLog log;
            LossReport rep = train_step(model, data, cfg, SeededRng(202), 0, 0, &log);
            CHECK(std::isfinite(rep.total));
            CHECK(rep.supervised > 0.0);
            CHECK(rep.supervised_pixels > 0);
            CHECK(model.adam_steps == 1);
            CHECK(log.pool_images.size() == 2);
            if (method_uses_unlabeled(m)) {
                CHECK(log.unlabeled_images.size() == 2);
            } else {
                CHECK(log.unlabeled_images.empty());
                CHECK(rep.unlabeled == 0.0);
                CHECK(rep.consistency == 0.0);
            }
            if (method_uses_consistency(m)) CHECK(log.unlabeled_aug.size() == 2);
        }
    }

    TEST_CASE("supervised draw is method-independent") {
        Dataset data = tiny_dataset(TaskKind::multi_class, 203);
        StepLog log_a, log_b;
        PixelModel m1 = PixelModel::init(small_model_config(data), SeededRng(204));
        PixelModel m2 = PixelModel::init(small_model_config(data), SeededRng(204));
        (void)train_step(m1, data, small_train_config(Method::baseline),
                         SeededRng(205), 3, 1, &log_a);
        (void)train_step(m2, data, small_train_config(Method::rpg), SeededRng(205),
                         3, 1, &log_b);
        CHECK(log_a.pool_images == log_b.pool_images);
        REQUIRE(log_a.pool_aug.size() == log_b.pool_aug.size());
        for (size_t i = 0; i < log_a.pool_aug.size(); ++i)
            CHECK(log_a.pool_aug[i].hflip == log_b.pool_aug[i].hflip);
    }

    TEST_CASE("train step is deterministic in (seed, epoch, step)") {
        Dataset data = tiny_dataset(TaskKind::multi_class, 206);
        TrainConfig cfg = small_train_config(Method::rpg_plus);
        PixelModel m1 = PixelModel::init(small_model_config(data), SeededRng(207));
        PixelModel m2 = PixelModel::init(small_model_config(data), SeededRng(207));
        LossReport a = train_step(m1, data, cfg, SeededRng(208), 1, 2, nullptr);
        LossReport b = train_step(m2, data, cfg, SeededRng(208), 1, 2, nullptr);
        CHECK(a.total == b.total);
        CHECK(m1.w1 == m2.w1);
        CHECK(m1.w2 == m2.w2);
        LossReport c = train_step(m2, data, cfg, SeededRng(208), 1, 3, nullptr);
        CHECK(a.total != c.total);
    }

    TEST_CASE("multi-label methods train too") {
        Dataset data = tiny_dataset(TaskKind::multi_label, 209);
        for (Method m : {Method::baseline, Method::rpg}) {
            TrainConfig cfg = small_train_config(m);
            PixelModel model =
                PixelModel::init(small_model_config(data), SeededRng(210));
            LossReport rep = train_step(model, data, cfg, SeededRng(211), 0, 0, nullptr);
            CHECK(std::isfinite(rep.total));
            CHECK(rep.supervised > 0.0);
        }
    }

    TEST_CASE("evaluate scores a perfect and a wrong predictor sensibly") {
        Dataset data = tiny_dataset(TaskKind::multi_class, 212);
        PixelModel model = PixelModel::init(small_model_config(data), SeededRng(213));
        IoUReport rep = evaluate(model, data.validation);
        CHECK(rep.class_iou.size() == 3);
        CHECK(rep.miou >= 0.0);
        CHECK(rep.miou <= 1.0);
    }
}

TEST_SUITE("config") {
    TEST_CASE("full example parses and echoes") {
        const std::string text = R"({
            "data": {"task": "multi-class", "height": 32, "width": 32,
                     "classes": 4, "labeled": 3, "unlabeled": 50,
                     "validation": 8, "test": 8, "seeds": 2},
            "method": {"name": "rpg-plus", "tau": 0.9, "epochs": 5,
                       "steps_per_epoch": 2, "unlabeled_per_batch": 3},
            "pool": {"size": 2, "subsample": 16, "neighbors": "25%"},
            "optimizer": {"lr": 0.001, "weight_decay": 0.0001},
            "output": {"dir": "runs/demo"}
        })";
        ExperimentConfig cfg = parse_config(text, "inline");
        CHECK(cfg.scene.num_classes == 4);
        CHECK(cfg.train.method == Method::rpg_plus);
        CHECK(cfg.train.tau == 0.9);
        CHECK(cfg.n_seeds == 2);
        CHECK(cfg.train.pool.pool_size == 2);
        // 25% of 2 * 16 * 16 reference pixels.
        CHECK(cfg.train.pool.neighbor_count == 128);
        CHECK(cfg.out_dir == "runs/demo");
        std::string echo = resolved_config_json(cfg);
        CHECK(echo.find("\"neighbors\": 128") != std::string::npos);
        CHECK(echo.find("rpg-plus") != std::string::npos);
    }

    TEST_CASE("neighbor spellings") {
        auto base = [](const std::string& neighbors) {
            return std::string(R"({"data": {"classes": 3, "height": 16, "width": 16},
                "pool": {"size": 2, "subsample": 8, "neighbors": )") +
                   neighbors + "}}";
        };
        // Reference count here: 2 pool images at 8x8 = 128 pixels.
        CHECK(parse_config(base("64"), "t").train.pool.neighbor_count == 64);
        CHECK(parse_config(base("0.5"), "t").train.pool.neighbor_count == 64);
        CHECK(parse_config(base("\"10%\""), "t").train.pool.neighbor_count == 12);
        // Requests beyond the reference count clamp.
        CHECK(parse_config(base("100000"), "t").train.pool.neighbor_count == 128);
        CHECK_THROWS_AS((void)parse_config(base("0"), "t"), ConfigError);
        CHECK_THROWS_AS((void)parse_config(base("\"150%\""), "t"), ConfigError);
    }

    TEST_CASE("unknown keys are rejected with their path") {
        try {
            (void)parse_config(R"({"data": {"clases": 3}})", "t");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("clases") != std::string::npos);
        }
    }

    TEST_CASE("invalid values are rejected") {
        CHECK_THROWS_AS((void)parse_config(R"({"data": {"classes": 1}})", "t"),
                        ConfigError);
        CHECK_THROWS_AS((void)parse_config(R"({"data": {"task": "both"}})", "t"),
                        ConfigError);
        CHECK_THROWS_AS(
            (void)parse_config(R"({"method": {"name": "rpg-plus", "tau": 1.5}})", "t"),
            ConfigError);
        CHECK_THROWS_AS((void)parse_config(R"({"optimizer": {"lr": 0}})", "t"),
                        ConfigError);
        CHECK_THROWS_AS((void)parse_config("{", "t"), ConfigError);
    }

    TEST_CASE("tau range depends on the task") {
        // Multi-class with 4 classes accepts tau just above 1/4.
        const std::string mc = R"({"data": {"classes": 4},
            "method": {"name": "fixmatch", "tau": 0.3}})";
        CHECK(parse_config(mc, "t").train.tau == 0.3);
        const std::string ml = R"({"data": {"task": "multi-label", "classes": 3},
            "method": {"name": "fixmatch", "tau": 0.3}})";
        CHECK_THROWS_AS((void)parse_config(ml, "t"), ConfigError);
    }
}

TEST_SUITE("experiment") {
    TEST_CASE("tiny run writes its outputs deterministically") {
        ExperimentConfig cfg;
        cfg.scene.height = 12;
        cfg.scene.width = 12;
        cfg.scene.num_classes = 3;
        cfg.model.num_classes = 3;
        cfg.model.feature_dim = 4;
        cfg.n_labeled = 2;
        cfg.n_unlabeled = 4;
        cfg.n_validation = 2;
        cfg.n_test = 2;
        cfg.n_seeds = 2;
        cfg.train.method = Method::rpg;
        cfg.train.epochs = 2;
        cfg.train.steps_per_epoch = 2;
        cfg.train.eval_every = 1;
        cfg.train.pool.pool_size = 2;
        cfg.train.pool.subsample_side = 6;
        cfg.train.pool.neighbor_count = 30;
        cfg.train.unlabeled_per_batch = 2;

        fs::path dir = fs::temp_directory_path() / "refseg-test-exp";
        fs::remove_all(dir);
        ExperimentResult res = run_experiment(cfg, 42, dir / "a", nullptr);
        CHECK(res.seeds.size() == 2);
        for (const SeedResult& s : res.seeds) {
            CHECK(s.test_miou >= 0.0);
            CHECK(s.test_miou <= 1.0);
        }
        CHECK(fs::exists(dir / "a" / "metrics.csv"));
        CHECK(fs::exists(dir / "a" / "summary.csv"));
        CHECK(fs::exists(dir / "a" / "config.resolved"));
        CHECK(fs::exists(dir / "a" / "poollog.csv"));
        CHECK(fs::exists(dir / "a" / "checkpoints" / "seed-0" / "best" /
                         "manifest.json"));

        ExperimentResult res2 = run_experiment(cfg, 42, dir / "b", nullptr);
        CHECK(res.mean_miou == res2.mean_miou);
        std::ifstream fa(dir / "a" / "metrics.csv"), fb(dir / "b" / "metrics.csv");
        std::stringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        CHECK(sa.str() == sb.str());
        CHECK(sa.str().find("seed,epoch,split,class,iou,miou") == 0);
        fs::remove_all(dir);
    }
}
