#include "refseg/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace refseg {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError("config: " + msg); }

/// Wraps one JSON object so every key is either consumed or reported.
class Section {
public:
    Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) fail(path_ + " must be an object");
    }

    ~Section() = default;

    void finish() const {
        for (auto it = node_.begin(); it != node_.end(); ++it)
            if (!seen_.count(it.key())) fail("unknown key: " + path_ + it.key());
    }

    bool has(const char* key) const { return node_.contains(key); }

    const json* get(const char* key) {
        seen_.insert(key);
        auto it = node_.find(key);
        return it == node_.end() ? nullptr : &*it;
    }

    template <typename T>
    void read(const char* key, T& out) {
        const json* v = get(key);
        if (!v) return;
        try {
            out = v->get<T>();
        } catch (const json::exception&) {
            fail(path_ + key + " has the wrong type");
        }
    }

    void read_positive(const char* key, int& out) {
        read(key, out);
        if (out < 1) fail(path_ + key + " must be >= 1");
    }

    json subsection(const char* key) {
        const json* v = get(key);
        return v ? *v : json::object();
    }

    const std::string& path() const { return path_; }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

void parse_data(const json& node, ExperimentConfig& cfg) {
    Section s(node, "data.");
    std::string task = "multi-class";
    s.read("task", task);
    if (task == "multi-class") {
        cfg.scene.task = TaskKind::multi_class;
    } else if (task == "multi-label") {
        cfg.scene.task = TaskKind::multi_label;
    } else {
        fail("data.task must be 'multi-class' or 'multi-label'");
    }
    int height = static_cast<int>(cfg.scene.height);
    int width = static_cast<int>(cfg.scene.width);
    s.read_positive("height", height);
    s.read_positive("width", width);
    cfg.scene.height = static_cast<uint32_t>(height);
    cfg.scene.width = static_cast<uint32_t>(width);
    s.read("classes", cfg.scene.num_classes);
    check_class_count(cfg.scene.task, cfg.scene.num_classes);
    if (cfg.scene.task == TaskKind::multi_class && cfg.scene.num_classes < 2)
        fail("data.classes must be >= 2 for multi-class");
    s.read_positive("labeled", cfg.n_labeled);
    s.read("unlabeled", cfg.n_unlabeled);
    if (cfg.n_unlabeled < 0) fail("data.unlabeled must be >= 0");
    s.read_positive("validation", cfg.n_validation);
    s.read_positive("test", cfg.n_test);
    s.read_positive("seeds", cfg.n_seeds);
    s.read("min_shapes", cfg.scene.min_shapes);
    s.read("max_shapes", cfg.scene.max_shapes);
    if (cfg.scene.min_shapes < 1 || cfg.scene.max_shapes < cfg.scene.min_shapes)
        fail("data.min_shapes/max_shapes must satisfy 1 <= min <= max");
    s.read("noise_sigma", cfg.scene.noise_sigma);
    s.read("brightness_jitter", cfg.scene.brightness_jitter);
    s.read("labeled_jitter_frac", cfg.scene.labeled_jitter_frac);
    if (cfg.scene.labeled_jitter_frac < 0.f || cfg.scene.labeled_jitter_frac > 1.f)
        fail("data.labeled_jitter_frac must be in [0, 1]");
    s.read("texture_amp", cfg.scene.texture_amp);
    s.finish();
}

void parse_model(const json& node, ExperimentConfig& cfg) {
    Section s(node, "model.");
    s.read_positive("feature_dim", cfg.model.feature_dim);
    s.read("coord_features", cfg.model.coord_features);
    s.finish();
}

void parse_method_section(const json& node, ExperimentConfig& cfg) {
    Section s(node, "method.");
    std::string name = method_name(cfg.train.method);
    s.read("name", name);
    try {
        cfg.train.method = parse_method(name);
    } catch (const std::invalid_argument& e) {
        fail(std::string("method.name: ") + e.what());
    }
    s.read("tau", cfg.train.tau);
    s.read_positive("unlabeled_per_batch", cfg.train.unlabeled_per_batch);
    s.read_positive("epochs", cfg.train.epochs);
    s.read_positive("steps_per_epoch", cfg.train.steps_per_epoch);
    s.read_positive("eval_every", cfg.train.eval_every);
    s.read_positive("iteration_multiplier", cfg.iteration_multiplier);
    s.read("supervised_scale", cfg.train.supervised_scale);
    s.read("unlabeled_scale", cfg.train.unlabeled_scale);
    s.read("consistency_scale", cfg.train.consistency_scale);
    s.finish();
}

void parse_pool(const json& node, ExperimentConfig& cfg) {
    Section s(node, "pool.");
    s.read_positive("size", cfg.train.pool.pool_size);
    s.read_positive("subsample", cfg.train.pool.subsample_side);

    const json* nb = s.get("neighbors");
    if (nb) {
        if (nb->is_string()) {
            // Percentage form, e.g. "25%".
            std::string t = nb->get<std::string>();
            if (t.empty() || t.back() != '%') fail("pool.neighbors string must end in %");
            double pct = 0.0;
            try {
                size_t used = 0;
                pct = std::stod(t.substr(0, t.size() - 1), &used);
                if (used != t.size() - 1) fail("pool.neighbors: bad percentage");
            } catch (const std::exception&) {
                fail("pool.neighbors: bad percentage '" + t + "'");
            }
            if (!(pct > 0.0 && pct < 100.0))
                fail("pool.neighbors percentage must be in (0, 100)");
            cfg.neighbor_request_fraction = pct / 100.0;
            cfg.neighbor_request_count = 0;
        } else if (nb->is_number_integer()) {
            int k = 0;
            try {
                k = nb->get<int>();
            } catch (const json::exception&) {
                fail("pool.neighbors is out of range");
            }
            if (k < 1) fail("pool.neighbors must be >= 1");
            cfg.neighbor_request_count = k;
            cfg.neighbor_request_fraction = 0.0;
        } else if (nb->is_number_float()) {
            double v = nb->get<double>();
            if (v >= 1.0) {
                // A whole count written with a decimal point.
                if (v != std::floor(v)) fail("pool.neighbors must be a whole count");
                cfg.neighbor_request_count = static_cast<int>(v);
                cfg.neighbor_request_fraction = 0.0;
            } else {
                if (!(v > 0.0)) fail("pool.neighbors fraction must be in (0, 1)");
                cfg.neighbor_request_fraction = v;
                cfg.neighbor_request_count = 0;
            }
        } else {
            fail("pool.neighbors has the wrong type");
        }
    }
    s.finish();
}

void parse_augment(const json& node, ExperimentConfig& cfg) {
    Section s(node, "augment.");
    s.read("rotation", cfg.train.aug.max_rotation_deg);
    s.read("noise", cfg.train.aug.max_noise_sigma);
    s.read("jitter", cfg.train.aug.max_jitter);
    s.read("cutout_min", cfg.train.aug.cutout_min_frac);
    s.read("cutout_max", cfg.train.aug.cutout_max_frac);
    s.read("flip_prob", cfg.train.aug.flip_prob);
    if (cfg.train.aug.flip_prob < 0.f || cfg.train.aug.flip_prob > 1.f)
        fail("augment.flip_prob must be in [0, 1]");
    if (cfg.train.aug.cutout_min_frac < 0.f ||
        cfg.train.aug.cutout_max_frac > 1.f ||
        cfg.train.aug.cutout_min_frac > cfg.train.aug.cutout_max_frac)
        fail("augment.cutout_min/cutout_max must satisfy 0 <= min <= max <= 1");
    s.finish();
}

void parse_optimizer(const json& node, ExperimentConfig& cfg) {
    Section s(node, "optimizer.");
    s.read("lr", cfg.train.lr);
    s.read("weight_decay", cfg.train.weight_decay);
    if (cfg.train.lr <= 0.f) fail("optimizer.lr must be > 0");
    if (cfg.train.weight_decay < 0.f) fail("optimizer.weight_decay must be >= 0");
    s.finish();
}

void parse_output(const json& node, ExperimentConfig& cfg) {
    Section s(node, "output.");
    s.read("dir", cfg.out_dir);
    s.finish();
}

void cross_validate(ExperimentConfig& cfg) {
    cfg.model.num_classes = cfg.scene.num_classes;
    cfg.model.task = cfg.scene.task;
    if (cfg.scene.max_shapes < cfg.scene.foreground_classes())
        fail("data.max_shapes must be >= the foreground class count so every "
             "class can appear");

    if (method_uses_tau(cfg.train.method)) {
        double lo = cfg.scene.task == TaskKind::multi_class
                        ? 1.0 / static_cast<double>(cfg.scene.num_classes)
                        : 0.5;
        if (!(cfg.train.tau > lo && cfg.train.tau < 1.0))
            fail("method.tau must be in (" + std::to_string(lo) + ", 1) for " +
                 task_name(cfg.scene.task));
    }

    resolve_pool_neighbors(cfg);
}

}  // namespace

void resolve_pool_neighbors(ExperimentConfig& cfg) {
    // The reference set the run will build: M = size * min(subsample, side)^2.
    int side = std::min<int>(
        cfg.train.pool.subsample_side,
        static_cast<int>(std::min(cfg.scene.height, cfg.scene.width)));
    long long m = static_cast<long long>(cfg.train.pool.pool_size) * side * side;
    cfg.train.pool.neighbor_fraction = 0.0;
    if (cfg.neighbor_request_fraction > 0.0) {
        if (cfg.neighbor_request_fraction >= 1.0)
            fail("pool.neighbors fraction must be in (0, 1)");
        long long k = static_cast<long long>(
            std::floor(cfg.neighbor_request_fraction * static_cast<double>(m)));
        cfg.train.pool.neighbor_count = static_cast<int>(std::max(1ll, k));
    } else {
        if (cfg.neighbor_request_count < 1) fail("pool.neighbors must be >= 1");
        cfg.train.pool.neighbor_count =
            static_cast<int>(std::min<long long>(cfg.neighbor_request_count, m));
    }
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(origin + ": " + e.what());
    }
    if (!doc.is_object()) fail(origin + ": top level must be an object");

    ExperimentConfig cfg;
    Section top(doc, "");
    parse_data(top.subsection("data"), cfg);
    parse_model(top.subsection("model"), cfg);
    parse_method_section(top.subsection("method"), cfg);
    parse_pool(top.subsection("pool"), cfg);
    parse_augment(top.subsection("augment"), cfg);
    parse_optimizer(top.subsection("optimizer"), cfg);
    parse_output(top.subsection("output"), cfg);
    top.finish();
    cross_validate(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.string());
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
    json doc;
    doc["data"] = {{"task", task_name(cfg.scene.task)},
                   {"height", cfg.scene.height},
                   {"width", cfg.scene.width},
                   {"classes", cfg.scene.num_classes},
                   {"labeled", cfg.n_labeled},
                   {"unlabeled", cfg.n_unlabeled},
                   {"validation", cfg.n_validation},
                   {"test", cfg.n_test},
                   {"seeds", cfg.n_seeds},
                   {"min_shapes", cfg.scene.min_shapes},
                   {"max_shapes", cfg.scene.max_shapes},
                   {"noise_sigma", cfg.scene.noise_sigma},
                   {"brightness_jitter", cfg.scene.brightness_jitter},
                   {"labeled_jitter_frac", cfg.scene.labeled_jitter_frac},
                   {"texture_amp", cfg.scene.texture_amp}};
    doc["model"] = {{"feature_dim", cfg.model.feature_dim},
                    {"coord_features", cfg.model.coord_features}};
    doc["method"] = {{"name", method_name(cfg.train.method)},
                     {"tau", cfg.train.tau},
                     {"unlabeled_per_batch", cfg.train.unlabeled_per_batch},
                     {"epochs", cfg.train.epochs},
                     {"steps_per_epoch", cfg.train.steps_per_epoch},
                     {"eval_every", cfg.train.eval_every},
                     {"iteration_multiplier", cfg.iteration_multiplier},
                     {"supervised_scale", cfg.train.supervised_scale},
                     {"unlabeled_scale", cfg.train.unlabeled_scale},
                     {"consistency_scale", cfg.train.consistency_scale}};
    doc["pool"] = {{"size", cfg.train.pool.pool_size},
                   {"subsample", cfg.train.pool.subsample_side},
                   {"neighbors", cfg.train.pool.neighbor_count}};
    doc["augment"] = {{"rotation", cfg.train.aug.max_rotation_deg},
                      {"noise", cfg.train.aug.max_noise_sigma},
                      {"jitter", cfg.train.aug.max_jitter},
                      {"cutout_min", cfg.train.aug.cutout_min_frac},
                      {"cutout_max", cfg.train.aug.cutout_max_frac},
                      {"flip_prob", cfg.train.aug.flip_prob}};
    doc["optimizer"] = {{"lr", cfg.train.lr},
                        {"weight_decay", cfg.train.weight_decay}};
    doc["output"] = {{"dir", cfg.out_dir}};
    return doc.dump(2) + "\n";
}

}  // namespace refseg
