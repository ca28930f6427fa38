#include "refseg/dataset_io.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "refseg/tensor_io.hpp"

namespace refseg {

namespace {

std::string counted_name(const char* stem, size_t i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s-%04zu.%s", stem, i, ext);
    return buf;
}

void write_labeled_split(const std::vector<Sample>& split,
                         const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (size_t i = 0; i < split.size(); ++i) {
        write_tensor(split[i].image, dir / counted_name("img", i, "rgtf"));
        const LabelField& lab = split[i].label;
        if (lab.kind == TaskKind::multi_class) {
            write_pgm(lab.values, dir / counted_name("lab", i, "pgm"));
        } else {
            write_tensor(lab.values, dir / counted_name("lab", i, "rgtf"));
        }
    }
}

std::vector<Sample> read_labeled_split(const std::filesystem::path& dir, size_t count,
                                       TaskKind task, int classes) {
    std::vector<Sample> split;
    split.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        Sample s;
        s.image = read_tensor_f32(dir / counted_name("img", i, "rgtf"));
        if (task == TaskKind::multi_class) {
            TensorU8 values = read_pgm(dir / counted_name("lab", i, "pgm"));
            s.label = LabelField::make_multi_class(classes, values.dim(0), values.dim(1));
            s.label.values = std::move(values);
        } else {
            TensorU8 values = read_tensor_u8(dir / counted_name("lab", i, "rgtf"));
            if (values.rank() != 3 ||
                values.dim(0) != static_cast<uint32_t>(classes))
                throw TensorIoError(TensorIoError::Code::truncated_payload,
                                    "label tensor has wrong shape: " +
                                        (dir / counted_name("lab", i, "rgtf")).string());
            s.label = LabelField::make_multi_label(classes, values.dim(1), values.dim(2));
            s.label.values = std::move(values);
        }
        split.push_back(std::move(s));
    }
    return split;
}

}  // namespace

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "refseg-dataset";
    manifest["version"] = 1;
    manifest["task"] = task_name(data.task);
    manifest["classes"] = data.num_classes;
    manifest["counts"] = {{"labeled", data.labeled.size()},
                          {"unlabeled", data.unlabeled.size()},
                          {"validation", data.validation.size()},
                          {"test", data.test.size()}};

    write_labeled_split(data.labeled, dir / "labeled");
    write_labeled_split(data.validation, dir / "validation");
    write_labeled_split(data.test, dir / "test");
    std::filesystem::create_directories(dir / "unlabeled");
    for (size_t i = 0; i < data.unlabeled.size(); ++i)
        write_tensor(data.unlabeled[i], dir / "unlabeled" / counted_name("img", i, "rgtf"));

    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write dataset manifest: " + dir.string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("cannot open dataset manifest: " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(in);
    if (manifest.value("format", "") != "refseg-dataset")
        throw std::runtime_error("not a refseg dataset: " + dir.string());

    Dataset data;
    data.task = manifest.at("task").get<std::string>() == "multi-label"
                    ? TaskKind::multi_label
                    : TaskKind::multi_class;
    data.num_classes = manifest.at("classes").get<int>();
    const auto& counts = manifest.at("counts");

    data.labeled = read_labeled_split(dir / "labeled", counts.at("labeled").get<size_t>(),
                                      data.task, data.num_classes);
    data.validation =
        read_labeled_split(dir / "validation", counts.at("validation").get<size_t>(),
                           data.task, data.num_classes);
    data.test = read_labeled_split(dir / "test", counts.at("test").get<size_t>(),
                                   data.task, data.num_classes);
    size_t n_unlab = counts.at("unlabeled").get<size_t>();
    data.unlabeled.reserve(n_unlab);
    for (size_t i = 0; i < n_unlab; ++i)
        data.unlabeled.push_back(
            read_tensor_f32(dir / "unlabeled" / counted_name("img", i, "rgtf")));
    return data;
}

}  // namespace refseg
