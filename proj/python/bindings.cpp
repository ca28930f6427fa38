#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <stdexcept>

#include "refseg/matcher.hpp"
#include "refseg/pool.hpp"
#include "refseg/synth.hpp"
#include "refseg/threshold.hpp"
#include "refseg/verification.hpp"

namespace py = pybind11;
using namespace refseg;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

TaskKind parse_task(const std::string& name) {
    if (name == "multi-class") return TaskKind::multi_class;
    if (name == "multi-label") return TaskKind::multi_label;
    throw std::invalid_argument("task must be 'multi-class' or 'multi-label'");
}

TensorF tensor_from(const FloatArray& arr) {
    py::buffer_info info = arr.request();
    std::vector<uint32_t> dims;
    for (auto d : info.shape) dims.push_back(static_cast<uint32_t>(d));
    TensorF t(dims);
    std::memcpy(t.data(), info.ptr, t.size() * sizeof(float));
    return t;
}

py::array_t<float> array_from(const TensorF& t) {
    std::vector<py::ssize_t> shape(t.dims().begin(), t.dims().end());
    py::array_t<float> arr(shape);
    std::memcpy(arr.mutable_data(), t.data(), t.size() * sizeof(float));
    return arr;
}

py::array_t<uint8_t> array_from_u8(const TensorU8& t) {
    std::vector<py::ssize_t> shape(t.dims().begin(), t.dims().end());
    py::array_t<uint8_t> arr(shape);
    std::memcpy(arr.mutable_data(), t.data(), t.size());
    return arr;
}

py::dict result_to_dict(const PseudoLabelResult& r) {
    py::dict out;
    out["labels"] = array_from_u8(r.labels.values);
    if (!r.labels.all_decided()) out["decided"] = array_from_u8(r.labels.decided);
    out["weights"] = array_from(r.weights);
    out["nearest_distance"] = array_from(r.nearest_distance);
    out["class_distances"] = array_from(r.class_distances);
    out["k_used"] = r.k_used;
    out["k_clamped"] = r.k_clamped;
    return out;
}

ReferencePool pool_from_arrays(const FloatArray& vectors,
                               const py::array_t<uint32_t>& labels,
                               const std::string& task, int num_classes) {
    py::buffer_info vinfo = vectors.request();
    if (vinfo.ndim != 2) throw std::invalid_argument("ref_vectors must be (M, d)");
    py::buffer_info linfo = labels.request();
    if (linfo.ndim != 1 || linfo.shape[0] != vinfo.shape[0])
        throw std::invalid_argument("ref_labels must be (M,)");
    TensorF v = tensor_from(vectors);
    const uint32_t* lp = static_cast<const uint32_t*>(linfo.ptr);
    std::vector<LabelCode> codes(lp, lp + linfo.shape[0]);
    return make_reference_pool(std::move(v), std::move(codes), parse_task(task),
                               num_classes);
}

PoolConfig pool_config_for(py::object k, size_t m) {
    PoolConfig cfg;
    if (py::isinstance<py::float_>(k)) {
        cfg.neighbor_fraction = k.cast<double>();
        cfg.neighbor_count = 0;
    } else {
        cfg.neighbor_count = k.cast<int>();
    }
    (void)m;
    return cfg;
}

py::dict run_match(const FloatArray& query, const FloatArray& ref_vectors,
                   const py::array_t<uint32_t>& ref_labels, const std::string& task,
                   int num_classes, py::object k, bool oracle) {
    py::buffer_info qinfo = query.request();
    if (qinfo.ndim != 3) throw std::invalid_argument("query must be (d, h, w)");
    TensorF q = tensor_from(query);
    ReferencePool refs = pool_from_arrays(ref_vectors, ref_labels, task, num_classes);
    PoolConfig cfg = pool_config_for(k, refs.count());
    PseudoLabelResult r =
        oracle ? brute_force_oracle(q, refs, cfg) : assign_labels(q, refs, cfg);
    return result_to_dict(r);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Pixel-wise reference matching with entropy-based certainty weights";

    m.def(
        "clipped_cosine",
        [](const FloatArray& a, const FloatArray& b) {
            py::buffer_info ai = a.request(), bi = b.request();
            if (ai.ndim != 1 || bi.ndim != 1 || ai.shape[0] != bi.shape[0])
                throw std::invalid_argument("expected two 1-D vectors of equal length");
            return clipped_cosine(static_cast<const float*>(ai.ptr),
                                  static_cast<const float*>(bi.ptr),
                                  static_cast<size_t>(ai.shape[0]));
        },
        py::arg("a"), py::arg("b"),
        "1 - max(cos, 0) with an epsilon-guarded denominator.");

    m.def(
        "assign_labels",
        [](const FloatArray& query, const FloatArray& ref_vectors,
           const py::array_t<uint32_t>& ref_labels, const std::string& task,
           int num_classes, py::object k) {
            return run_match(query, ref_vectors, ref_labels, task, num_classes, k,
                             false);
        },
        py::arg("query"), py::arg("ref_vectors"), py::arg("ref_labels"),
        py::arg("task") = "multi-class", py::arg("num_classes") = 2,
        py::arg("k") = 7000,
        "Nearest-reference labels plus entropy weights for a (d,h,w) query. "
        "k may be an int count or a float fraction in (0,1).");

    m.def(
        "brute_force_oracle",
        [](const FloatArray& query, const FloatArray& ref_vectors,
           const py::array_t<uint32_t>& ref_labels, const std::string& task,
           int num_classes, py::object k) {
            return run_match(query, ref_vectors, ref_labels, task, num_classes, k,
                             true);
        },
        py::arg("query"), py::arg("ref_vectors"), py::arg("ref_labels"),
        py::arg("task") = "multi-class", py::arg("num_classes") = 2,
        py::arg("k") = 7000, "Slow reference implementation of assign_labels.");

    m.def(
        "subsample_indices",
        [](uint32_t extent, int side) { return subsample_indices(extent, side); },
        py::arg("extent"), py::arg("side"),
        "Nearest-neighbor grid indices floor((i + 0.5) * extent / side).");

    m.def(
        "threshold_multiclass",
        [](const FloatArray& probs, double tau) {
            LabelField f = threshold_multiclass(tensor_from(probs), tau);
            py::dict out;
            out["labels"] = array_from_u8(f.values);
            out["decided"] = array_from_u8(f.decided);
            return out;
        },
        py::arg("probs"), py::arg("tau"),
        "Argmax where the winner strictly exceeds tau; otherwise undecided.");

    m.def(
        "threshold_multilabel",
        [](const FloatArray& probs, double tau) {
            LabelField f = threshold_multilabel(tensor_from(probs), tau);
            py::dict out;
            out["labels"] = array_from_u8(f.values);
            out["decided"] = array_from_u8(f.decided);
            return out;
        },
        py::arg("probs"), py::arg("tau"),
        "Per-channel rounding where |p - 0.5| strictly exceeds tau - 0.5.");

    m.def(
        "generate_scene",
        [](uint32_t height, uint32_t width, const std::string& task, int classes,
           uint64_t seed) {
            SceneSpec spec;
            spec.height = height;
            spec.width = width;
            spec.task = parse_task(task);
            spec.num_classes = classes;
            Sample s = generate_scene(spec, SeededRng(seed));
            py::dict out;
            out["image"] = array_from(s.image);
            out["labels"] = array_from_u8(s.label.values);
            return out;
        },
        py::arg("height") = 64, py::arg("width") = 64,
        py::arg("task") = "multi-class", py::arg("classes") = 4, py::arg("seed") = 1,
        "One synthetic scene: image in [0,1] plus its label map.");

    m.def(
        "oracle_suite",
        [](int cases, uint64_t seed) {
            OracleSuiteResult r = run_oracle_suite(cases, seed, nullptr);
            py::dict out;
            out["cases"] = r.cases;
            out["label_mismatches"] = r.label_mismatches;
            out["max_weight_deviation"] = r.max_weight_deviation;
            return out;
        },
        py::arg("cases") = 18, py::arg("seed") = 1,
        "Randomized fast-path vs brute-force equivalence sweep.");
}
