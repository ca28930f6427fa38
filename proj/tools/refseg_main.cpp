#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "refseg/config.hpp"
#include "refseg/dataset_io.hpp"
#include "refseg/experiment.hpp"
#include "refseg/matcher.hpp"
#include "refseg/tensor_io.hpp"
#include "refseg/verification.hpp"

namespace {

namespace fs = std::filesystem;
using namespace refseg;

SeededRng seed_root(uint64_t master_seed, int seed_index) {
    return SeededRng(master_seed).derive("seed-" + std::to_string(seed_index));
}

int cmd_gen_data(const std::string& config_path, uint64_t seed,
                 const std::string& out_dir) {
    ExperimentConfig cfg = load_config(config_path);
    // Same stream train uses for its first replicate, so eval/match runs on
    // gen-data output line up with seed 0 of a train run.
    Dataset data =
        generate_dataset(cfg.scene, seed_root(seed, 0).derive("data"), cfg.n_labeled,
                         cfg.n_unlabeled, cfg.n_validation, cfg.n_test);
    write_dataset(data, out_dir);
    std::cout << "wrote " << data.labeled.size() << " labeled, "
              << data.unlabeled.size() << " unlabeled, " << data.validation.size()
              << " validation, " << data.test.size() << " test images to " << out_dir
              << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, uint64_t seed,
              const std::string& out_dir) {
    ExperimentConfig cfg = load_config(config_path);
    fs::path out = out_dir.empty() ? fs::path(cfg.out_dir) : fs::path(out_dir);
    ExperimentResult result = run_experiment(cfg, seed, out, &std::cout);
    std::cout << method_name(cfg.train.method) << ": mean test miou "
              << result.mean_miou << " +- " << result.std_miou << " over "
              << result.seeds.size() << " seeds; outputs in " << out.string() << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& split) {
    PixelModel model = load_checkpoint(checkpoint);
    Dataset data = read_dataset(data_dir);
    const std::vector<Sample>* samples = nullptr;
    if (split == "labeled") samples = &data.labeled;
    if (split == "validation") samples = &data.validation;
    if (split == "test") samples = &data.test;
    if (!samples)
        throw std::runtime_error("split must be labeled, validation, or test");
    IoUReport report = evaluate(model, *samples);
    for (size_t j = 0; j < report.class_iou.size(); ++j) {
        std::cout << "class " << j << " iou ";
        if (report.class_valid[j])
            std::cout << report.class_iou[j];
        else
            std::cout << "nan (empty union, excluded)";
        std::cout << "\n";
    }
    std::cout << "miou " << report.miou << "\n";
    return 0;
}

int cmd_match(const std::string& config_path, uint64_t seed, int index,
              const std::string& out_dir, const std::string& checkpoint) {
    ExperimentConfig cfg = load_config(config_path);
    SeededRng root = seed_root(seed, 0);
    Dataset data =
        generate_dataset(cfg.scene, root.derive("data"), cfg.n_labeled,
                         cfg.n_unlabeled, cfg.n_validation, cfg.n_test);
    if (index < 0 || static_cast<size_t>(index) >= data.unlabeled.size())
        throw std::runtime_error("--index out of range; dataset has " +
                                 std::to_string(data.unlabeled.size()) +
                                 " unlabeled images");
    PixelModel model = checkpoint.empty()
                           ? PixelModel::init(cfg.model, root.derive("init"))
                           : load_checkpoint(checkpoint);

    std::vector<const LabelField*> fields;
    for (const auto& s : data.labeled) fields.push_back(&s.label);
    SeededRng pool_rng = root.derive("pool/epoch-0/step-0");
    std::vector<uint32_t> pool =
        sample_pool(fields, cfg.train.pool.pool_size, pool_rng);

    std::vector<ForwardCache> caches;
    std::vector<const FeatureMap*> feats;
    std::vector<const LabelField*> labs;
    std::vector<uint32_t> slots;
    for (size_t i = 0; i < pool.size(); ++i) {
        caches.push_back(forward(model, data.labeled[pool[i]].image));
        slots.push_back(static_cast<uint32_t>(i));
    }
    for (size_t i = 0; i < pool.size(); ++i) {
        feats.push_back(&caches[i].features);
        labs.push_back(&data.labeled[pool[i]].label);
    }
    ReferencePool refs = build_reference_set(feats, labs, slots, cfg.train.pool);

    ForwardCache query = forward(model, data.unlabeled[static_cast<size_t>(index)]);
    PseudoLabelResult match = assign_labels(query.features, refs, cfg.train.pool);

    fs::create_directories(out_dir);
    fs::path out(out_dir);
    if (match.labels.kind == TaskKind::multi_class) {
        write_pgm(match.labels.values, out / "labels.pgm");
    } else {
        write_tensor(match.labels.values, out / "labels.rgtf");
    }
    write_tensor(match.weights, out / "weights.rgtf");
    write_tensor(match.nearest_distance, out / "nearest.rgtf");
    std::ofstream poolcsv(out / "pool.csv");
    poolcsv << "slot,image\n";
    for (size_t i = 0; i < pool.size(); ++i) poolcsv << i << ',' << pool[i] << '\n';
    std::cout << "matched unlabeled image " << index << " against "
              << refs.count() << " references (k=" << match.k_used
              << (match.k_clamped ? ", clamped" : "") << "); outputs in "
              << out_dir << "\n";
    return 0;
}

int cmd_oracle(int cases, uint64_t seed) {
    OracleSuiteResult r = run_oracle_suite(cases, seed, &std::cout);
    std::cout << "max label mismatches: " << r.label_mismatches << "\n";
    std::cout << "max weight deviation: " << r.max_weight_deviation << "\n";
    return r.label_mismatches == 0 ? 0 : 1;
}

int cmd_ablate(const std::string& config_path, uint64_t seed, const std::string& param,
               const std::string& values, const std::string& out_dir) {
    ExperimentConfig base = load_config(config_path);
    std::vector<std::string> value_list;
    std::stringstream ss(values);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) value_list.push_back(item);
    if (value_list.empty()) throw std::runtime_error("--values is empty");

    fs::create_directories(out_dir);
    std::ofstream summary(fs::path(out_dir) / "summary.csv");
    summary << "method,n_labeled,param,value,mean_miou,std_miou\n";

    for (const std::string& value : value_list) {
        ExperimentConfig cfg = base;
        if (param == "pool-size") {
            int p = std::stoi(value);
            if (p < 1) throw std::runtime_error("pool-size values must be >= 1");
            cfg.train.pool.pool_size = p;
        } else if (param == "neighbor-fraction") {
            std::string t = value;
            double frac;
            if (!t.empty() && t.back() == '%') {
                frac = std::stod(t.substr(0, t.size() - 1)) / 100.0;
            } else {
                frac = std::stod(t);
            }
            if (!(frac > 0.0 && frac < 1.0))
                throw std::runtime_error("neighbor-fraction values must be in (0, 1)");
            cfg.neighbor_request_count = 0;
            cfg.neighbor_request_fraction = frac;
        } else {
            throw std::runtime_error(
                "--param must be pool-size or neighbor-fraction");
        }
        resolve_pool_neighbors(cfg);

        std::string tag = param + "-" + value;
        for (char& c : tag)
            if (c == '%') c = 'p';
        fs::path run_dir = fs::path(out_dir) / tag;
        std::cout << "ablate " << param << "=" << value << " -> " << run_dir.string()
                  << "\n";
        ExperimentResult r = run_experiment(cfg, seed, run_dir, &std::cout);
        summary << method_name(cfg.train.method) << ',' << cfg.n_labeled << ','
                << param << ',' << value << ',' << r.mean_miou << ',' << r.std_miou
                << '\n';
    }
    std::cout << "ablation summary in " << (fs::path(out_dir) / "summary.csv").string()
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reference-guided pseudo-label generation for semi-supervised "
                 "segmentation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint, data_dir;
    std::string split = "test", param, values;
    uint64_t seed = 1;
    int cases = 200, index = 0;

    CLI::App* gen = app.add_subcommand("gen-data", "Write a synthetic dataset");
    gen->add_option("--config", config_path, "Config file")->required();
    gen->add_option("--seed", seed, "Master seed");
    gen->add_option("--out-dir", out_dir, "Output directory")->required();

    CLI::App* train = app.add_subcommand("train", "Run a seeded experiment");
    train->add_option("--config", config_path, "Config file")->required();
    train->add_option("--seed", seed, "Master seed");
    train->add_option("--out-dir", out_dir, "Output directory (default from config)");

    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
    eval_cmd->add_option("--data", data_dir, "Dataset directory")->required();
    eval_cmd->add_option("--split", split, "labeled | validation | test");

    CLI::App* match = app.add_subcommand("match", "Label one unlabeled image");
    match->add_option("--config", config_path, "Config file")->required();
    match->add_option("--seed", seed, "Master seed");
    match->add_option("--index", index, "Unlabeled image index");
    match->add_option("--out-dir", out_dir, "Output directory")->required();
    match->add_option("--checkpoint", checkpoint, "Optional checkpoint directory");

    CLI::App* oracle = app.add_subcommand(
        "oracle", "Fast path vs brute force equivalence sweep");
    oracle->add_option("--cases", cases, "Instance count");
    oracle->add_option("--seed", seed, "Master seed");

    CLI::App* ablate = app.add_subcommand("ablate", "Sweep one pool parameter");
    ablate->add_option("--config", config_path, "Config file")->required();
    ablate->add_option("--seed", seed, "Master seed");
    ablate->add_option("--param", param, "pool-size | neighbor-fraction")->required();
    ablate->add_option("--values", values, "Comma-separated values")->required();
    ablate->add_option("--out-dir", out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, seed, out_dir);
        if (train->parsed()) return cmd_train(config_path, seed, out_dir);
        if (eval_cmd->parsed()) return cmd_eval(checkpoint, data_dir, split);
        if (match->parsed())
            return cmd_match(config_path, seed, index, out_dir, checkpoint);
        if (oracle->parsed()) return cmd_oracle(cases, seed);
        if (ablate->parsed())
            return cmd_ablate(config_path, seed, param, values, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
