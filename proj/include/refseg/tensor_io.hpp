#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <variant>

#include "refseg/tensor.hpp"

namespace refseg {

/// File-format failure with a machine-checkable reason code.
class TensorIoError : public std::runtime_error {
public:
    enum class Code {
        open_failed,
        bad_magic,
        bad_version,
        bad_dtype,
        dims_overflow,
        truncated_payload,
        non_finite,
        bad_pgm_header,
        bad_pgm_maxval,
    };

    TensorIoError(Code code, const std::string& msg)
        : std::runtime_error(msg), code_(code) {}

    Code code() const { return code_; }

private:
    Code code_;
};

using AnyTensor = std::variant<TensorF, TensorU8>;

// ".rgtf" container: magic "RGTF", version u8 = 1, dtype u8 (0 = float32,
// 1 = uint8), ndim u32, dims u32 each, then the row-major little-endian
// payload. Float writers reject NaN/Inf.
void write_tensor(const TensorF& t, const std::filesystem::path& path);
void write_tensor(const TensorU8& t, const std::filesystem::path& path);
AnyTensor read_tensor(const std::filesystem::path& path);

/// read_tensor + dtype check (throws bad_dtype on mismatch).
TensorF read_tensor_f32(const std::filesystem::path& path);
TensorU8 read_tensor_u8(const std::filesystem::path& path);

// Binary PGM (P5), maxval 255, for 2-D uint8 class-index maps.
void write_pgm(const TensorU8& labels, const std::filesystem::path& path);
TensorU8 read_pgm(const std::filesystem::path& path);

}  // namespace refseg
