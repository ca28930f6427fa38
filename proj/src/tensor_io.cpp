#include "refseg/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace refseg {

static_assert(std::endian::native == std::endian::little,
              "rgtf/pgm writers assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'R', 'G', 'T', 'F'};
constexpr uint8_t kVersion = 1;
// Payload cap keeps dims honest on 32-bit-ish boxes; far above anything the
// tooling produces.
constexpr size_t kMaxElements = size_t{1} << 31;

using Code = TensorIoError::Code;

[[noreturn]] void fail(Code code, const std::string& msg) {
    throw TensorIoError(code, msg);
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Code::open_failed, "cannot open for writing: " + path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Code::open_failed, "cannot open for reading: " + path.string());
    return in;
}

void write_u32(std::ofstream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

template <typename T>
void write_rgtf(const TensorT<T>& t, Dtype dtype, const std::filesystem::path& path) {
    auto out = open_out(path);
    out.write(kMagic, 4);
    uint8_t ver = kVersion, dt = static_cast<uint8_t>(dtype);
    out.write(reinterpret_cast<const char*>(&ver), 1);
    out.write(reinterpret_cast<const char*>(&dt), 1);
    write_u32(out, static_cast<uint32_t>(t.rank()));
    for (uint32_t d : t.dims()) write_u32(out, d);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!out) fail(Code::open_failed, "short write: " + path.string());
}

template <typename T>
TensorT<T> read_payload(std::ifstream& in, std::vector<uint32_t> dims,
                        const std::filesystem::path& path) {
    TensorT<T> t(std::move(dims));
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (static_cast<size_t>(in.gcount()) != t.size() * sizeof(T))
        fail(Code::truncated_payload,
             "payload shorter than dims imply: " + path.string());
    return t;
}

}  // namespace

void write_tensor(const TensorF& t, const std::filesystem::path& path) {
    for (float v : t.flat())
        if (!std::isfinite(v))
            fail(Code::non_finite, "refusing to write non-finite float32 tensor: " +
                                       path.string());
    write_rgtf(t, Dtype::f32, path);
}

void write_tensor(const TensorU8& t, const std::filesystem::path& path) {
    write_rgtf(t, Dtype::u8, path);
}

AnyTensor read_tensor(const std::filesystem::path& path) {
    auto in = open_in(path);

    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        fail(Code::bad_magic, "not an rgtf file: " + path.string());

    uint8_t ver = 0, dt = 0;
    in.read(reinterpret_cast<char*>(&ver), 1);
    in.read(reinterpret_cast<char*>(&dt), 1);
    if (!in) fail(Code::truncated_payload, "truncated header: " + path.string());
    if (ver != kVersion)
        fail(Code::bad_version,
             "unsupported rgtf version " + std::to_string(ver) + ": " + path.string());
    if (dt > 1)
        fail(Code::bad_dtype,
             "unknown dtype code " + std::to_string(dt) + ": " + path.string());

    uint32_t ndim = 0;
    in.read(reinterpret_cast<char*>(&ndim), 4);
    if (!in) fail(Code::truncated_payload, "truncated header: " + path.string());
    if (ndim < 1 || ndim > kMaxTensorRank)
        fail(Code::dims_overflow,
             "ndim " + std::to_string(ndim) + " outside [1, 4]: " + path.string());

    std::vector<uint32_t> dims(ndim);
    in.read(reinterpret_cast<char*>(dims.data()), std::streamsize{4} * ndim);
    if (!in) fail(Code::truncated_payload, "truncated dims: " + path.string());

    size_t count = 0;
    try {
        count = TensorF::element_count(dims);
    } catch (const std::overflow_error&) {
        fail(Code::dims_overflow, "dims overflow: " + path.string());
    }
    if (count > kMaxElements) fail(Code::dims_overflow, "dims overflow: " + path.string());

    if (dt == 0) return read_payload<float>(in, std::move(dims), path);
    return read_payload<uint8_t>(in, std::move(dims), path);
}

TensorF read_tensor_f32(const std::filesystem::path& path) {
    auto t = read_tensor(path);
    if (auto* f = std::get_if<TensorF>(&t)) return std::move(*f);
    fail(Code::bad_dtype, "expected float32 tensor: " + path.string());
}

TensorU8 read_tensor_u8(const std::filesystem::path& path) {
    auto t = read_tensor(path);
    if (auto* u = std::get_if<TensorU8>(&t)) return std::move(*u);
    fail(Code::bad_dtype, "expected uint8 tensor: " + path.string());
}

void write_pgm(const TensorU8& labels, const std::filesystem::path& path) {
    if (labels.rank() != 2)
        throw std::invalid_argument("write_pgm expects a 2-D map, got rank " +
                                    std::to_string(labels.rank()));
    auto out = open_out(path);
    out << "P5\n" << labels.dim(1) << " " << labels.dim(0) << "\n255\n";
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
    if (!out) fail(Code::open_failed, "short write: " + path.string());
}

TensorU8 read_pgm(const std::filesystem::path& path) {
    auto in = open_in(path);

    std::string magic;
    in >> magic;
    if (magic != "P5")
        fail(Code::bad_pgm_header, "expected binary PGM (P5): " + path.string());

    long long w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    if (!in || w <= 0 || h <= 0)
        fail(Code::bad_pgm_header, "bad PGM dimensions: " + path.string());
    if (maxval != 255)
        fail(Code::bad_pgm_maxval,
             "PGM maxval must be 255, got " + std::to_string(maxval) + ": " + path.string());
    in.get();  // single whitespace byte before the raster

    TensorU8 t({static_cast<uint32_t>(h), static_cast<uint32_t>(w)});
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size()));
    if (static_cast<size_t>(in.gcount()) != t.size())
        fail(Code::truncated_payload, "truncated PGM raster: " + path.string());
    return t;
}

}  // namespace refseg
