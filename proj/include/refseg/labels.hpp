#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "refseg/tensor.hpp"

namespace refseg {

enum class TaskKind { multi_class, multi_label };

inline const char* task_name(TaskKind k) {
    return k == TaskKind::multi_class ? "multi-class" : "multi-label";
}

/// Packed per-pixel label: the class index in multi-class mode, a c-bit
/// membership mask in multi-label mode. 0 is background in both.
using LabelCode = uint32_t;

/// Per-pixel targets with an optional ignore mask. Multi-class stores an (h,w)
/// index map; multi-label stores (c,h,w) 0/1 membership planes. `decided` has
/// the same layout; an empty mask means everything is decided. Undecided units
/// are the IGNORE marker and never contribute to losses.
struct LabelField {
    TaskKind kind = TaskKind::multi_class;
    int num_classes = 0;
    TensorU8 values;
    TensorU8 decided;

    static LabelField make_multi_class(int classes, uint32_t h, uint32_t w) {
        LabelField f;
        f.kind = TaskKind::multi_class;
        f.num_classes = classes;
        f.values = TensorU8({h, w});
        return f;
    }

    static LabelField make_multi_label(int classes, uint32_t h, uint32_t w) {
        LabelField f;
        f.kind = TaskKind::multi_label;
        f.num_classes = classes;
        f.values = TensorU8({static_cast<uint32_t>(classes), h, w});
        return f;
    }

    uint32_t height() const {
        return kind == TaskKind::multi_class ? values.dim(0) : values.dim(1);
    }
    uint32_t width() const {
        return kind == TaskKind::multi_class ? values.dim(1) : values.dim(2);
    }

    bool all_decided() const { return decided.size() == 0; }

    /// Allocates the ignore mask (same layout as values), everything decided.
    void ensure_decided_mask() {
        if (decided.size() == 0) decided = TensorU8::full(values.dims(), 1);
    }

    LabelCode code_at(uint32_t y, uint32_t x) const {
        if (kind == TaskKind::multi_class) return values(y, x);
        LabelCode code = 0;
        for (int j = 0; j < num_classes; ++j)
            if (values(static_cast<uint32_t>(j), y, x)) code |= LabelCode{1} << j;
        return code;
    }

    void set_code(uint32_t y, uint32_t x, LabelCode code) {
        if (kind == TaskKind::multi_class) {
            values(y, x) = static_cast<uint8_t>(code);
        } else {
            for (int j = 0; j < num_classes; ++j)
                values(static_cast<uint32_t>(j), y, x) = (code >> j) & 1u;
        }
    }
};

/// Categories scored by the matcher's class distances: the c classes in
/// multi-class mode; the c classes plus one background category (all-zero
/// label vector, index c) in multi-label mode.
inline int category_count(TaskKind kind, int num_classes) {
    return kind == TaskKind::multi_class ? num_classes : num_classes + 1;
}

/// Bit mask over categories a label code belongs to.
inline uint32_t category_mask(TaskKind kind, int num_classes, LabelCode code) {
    if (kind == TaskKind::multi_class) return 1u << code;
    return code == 0 ? 1u << num_classes : code;
}

inline void check_class_count(TaskKind kind, int num_classes) {
    int cats = category_count(kind, num_classes);
    if (num_classes < 1 || cats > 31)
        throw std::invalid_argument("unsupported class count " +
                                    std::to_string(num_classes) + " for " +
                                    task_name(kind));
}

}  // namespace refseg
