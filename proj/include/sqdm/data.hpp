#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqdm/errors.hpp"
#include "sqdm/linalg.hpp"
#include "sqdm/rng.hpp"

namespace sqdm {

// ---------------------------------------------------------------------------
// Tensor file: little-endian binary, layout documented in the README.
//   magic "SQDT" | u32 version (1) | u32 dtype (1 = f64) |
//   u64 rows | u64 cols | payload rows*cols f64 row-major
// rows may be zero (empty tensor); cols must be positive.
// ---------------------------------------------------------------------------

inline constexpr char kTensorMagic[4] = {'S', 'Q', 'D', 'T'};
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint32_t kTensorDtypeF64 = 1;

inline void save_tensor(const std::string& path, const Matrix& m) {
    if (m.cols == 0) throw std::invalid_argument("save_tensor: cols must be positive");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open tensor file for writing: " + path);
    os.write(kTensorMagic, sizeof kTensorMagic);
    const std::uint32_t version = kTensorVersion;
    const std::uint32_t dtype = kTensorDtypeF64;
    const std::uint64_t rows = m.rows;
    const std::uint64_t cols = m.cols;
    os.write(reinterpret_cast<const char*>(&version), sizeof version);
    os.write(reinterpret_cast<const char*>(&dtype), sizeof dtype);
    os.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    os.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    os.write(reinterpret_cast<const char*>(m.data.data()),
             static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!os) throw io_error("tensor write failed: " + path);
}

inline Matrix load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw io_error("cannot open tensor file: " + path);
    const std::size_t file_size = static_cast<std::size_t>(is.tellg());
    is.seekg(0);
    char magic[4];
    if (!is.read(magic, sizeof magic) ||
        std::memcmp(magic, kTensorMagic, sizeof magic) != 0)
        throw parse_error("bad tensor magic in " + path, 0);
    std::uint32_t version = 0, dtype = 0;
    std::uint64_t rows = 0, cols = 0;
    if (!is.read(reinterpret_cast<char*>(&version), sizeof version) ||
        version != kTensorVersion)
        throw parse_error("unsupported tensor version " + std::to_string(version), 4);
    if (!is.read(reinterpret_cast<char*>(&dtype), sizeof dtype) ||
        dtype != kTensorDtypeF64)
        throw parse_error("unsupported tensor dtype tag " + std::to_string(dtype), 8);
    if (!is.read(reinterpret_cast<char*>(&rows), sizeof rows) ||
        !is.read(reinterpret_cast<char*>(&cols), sizeof cols))
        throw parse_error("truncated tensor header", 12);
    if (cols == 0) throw parse_error("tensor cols field must be positive", 20);
    const std::size_t header = 4 + 4 + 4 + 8 + 8;
    const std::size_t expected = rows * cols * sizeof(double);
    if (file_size != header + expected)
        throw parse_error("tensor payload mismatch: expected " +
                              std::to_string(expected) + " bytes, file has " +
                              std::to_string(file_size - header),
                          header);
    Matrix m(rows, cols);
    if (expected > 0 &&
        !is.read(reinterpret_cast<char*>(m.data.data()),
                 static_cast<std::streamsize>(expected)))
        throw parse_error("truncated tensor payload", header);
    return m;
}

// ---------------------------------------------------------------------------
// Binary PPM (P6, maxval 255) pixel ingestion. Rows are pixels, columns
// R,G,B mapped affinely from [0, 255] to [-1, 1] via x / 127.5 - 1.
// ---------------------------------------------------------------------------

inline Matrix load_ppm_pixels(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open ppm file: " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                            std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
        throw parse_error("not a binary ppm (expected magic P6)", 0);
    pos = 2;

    auto skip_space_and_comments = [&]() {
        while (pos < bytes.size()) {
            const char c = bytes[pos];
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos;
            } else if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&](const char* what) -> long {
        skip_space_and_comments();
        const std::size_t start = pos;
        long value = 0;
        while (pos < bytes.size() &&
               std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            value = value * 10 + (bytes[pos] - '0');
            ++pos;
        }
        if (pos == start)
            throw parse_error(std::string("missing ") + what + " in ppm header", start);
        return value;
    };

    const long width = read_int("width");
    const long height = read_int("height");
    const std::size_t maxval_at = pos;
    const long maxval = read_int("maxval");
    if (width < 1 || height < 1)
        throw parse_error("ppm dimensions must be positive", 2);
    if (maxval != 255)
        throw parse_error("ppm maxval " + std::to_string(maxval) +
                              " unsupported, need 255",
                          maxval_at);
    if (pos >= bytes.size() ||
        !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw parse_error("missing whitespace before ppm payload", pos);
    ++pos;  // exactly one whitespace byte separates header and payload

    const std::size_t n_pixels = static_cast<std::size_t>(width) * height;
    const std::size_t expected = n_pixels * 3;
    if (bytes.size() - pos < expected)
        throw parse_error("truncated ppm payload: expected " +
                              std::to_string(expected) + " bytes, got " +
                              std::to_string(bytes.size() - pos),
                          pos);
    Matrix pixels(n_pixels, 3);
    for (std::size_t i = 0; i < n_pixels; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            pixels(i, c) =
                static_cast<double>(static_cast<unsigned char>(bytes[pos + 3 * i + c])) /
                    127.5 -
                1.0;
    return pixels;
}

// ---------------------------------------------------------------------------
// Synthetic datasets
// ---------------------------------------------------------------------------

enum class SyntheticKind { gaussian, gaussian_mixture, two_moons_3d };

struct GaussianComponent {
    std::vector<double> mean;
    Matrix covariance;  // symmetric positive definite
    double weight = 1.0;
};

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::gaussian;
    std::vector<GaussianComponent> components;  // unused for two_moons_3d
    std::size_t count = 0;
    double moons_noise = 0.05;
};

// Deterministic given the seed; draws come from stream (seed, data_gen).
// Per sample: gaussian consumes dim normals; gaussian_mixture one uniform
// plus dim normals; two_moons_3d two uniforms plus three normals.
inline Matrix generate(const SyntheticSpec& spec, std::uint64_t seed) {
    Rng rng(seed, streams::data_gen);
    if (spec.kind == SyntheticKind::two_moons_3d) {
        Matrix out(spec.count, 3);
        for (std::size_t i = 0; i < spec.count; ++i) {
            const bool second = rng.uniform() < 0.5;
            const double theta = rng.uniform() * 3.14159265358979323846;
            double x = std::cos(theta);
            double y = std::sin(theta);
            if (second) {
                x = 1.0 - x;
                y = 0.5 - y;
            }
            out(i, 0) = x + spec.moons_noise * rng.normal();
            out(i, 1) = y + spec.moons_noise * rng.normal();
            out(i, 2) = spec.moons_noise * rng.normal();
        }
        return out;
    }

    if (spec.components.empty())
        throw std::invalid_argument("synthetic spec has no components");
    const std::size_t dim = spec.components.front().mean.size();
    std::vector<Matrix> factors;
    std::vector<double> cumulative;
    double total = 0.0;
    for (const GaussianComponent& comp : spec.components) {
        if (comp.mean.size() != dim || comp.covariance.rows != dim ||
            comp.covariance.cols != dim)
            throw std::invalid_argument("component shape mismatch");
        if (!(comp.weight > 0.0))
            throw std::invalid_argument("component weight must be positive");
        factors.push_back(cholesky(comp.covariance));  // rejects non-PSD
        total += comp.weight;
        cumulative.push_back(total);
    }
    const bool mixture = spec.kind == SyntheticKind::gaussian_mixture;
    if (!mixture && spec.components.size() != 1)
        throw std::invalid_argument("plain gaussian spec needs exactly one component");

    Matrix out(spec.count, dim);
    std::vector<double> z(dim);
    for (std::size_t i = 0; i < spec.count; ++i) {
        std::size_t pick = 0;
        if (mixture) {
            const double u = rng.uniform() * total;
            while (pick + 1 < cumulative.size() && u >= cumulative[pick]) ++pick;
        }
        rng.fill_normal(z);
        const GaussianComponent& comp = spec.components[pick];
        const Matrix& l = factors[pick];
        for (std::size_t r = 0; r < dim; ++r) {
            double acc = comp.mean[r];
            for (std::size_t c = 0; c <= r; ++c) acc += l(r, c) * z[c];
            out(i, r) = acc;
        }
    }
    return out;
}

// Default sweep dataset: 3-D two-component anisotropic mixture whose global
// top principal axis is e1 by construction (component means at +-1.5 on x,
// within-component covariance diag(0.3, 0.2, 0.1)).
inline SyntheticSpec default_sweep_dataset(std::size_t count) {
    SyntheticSpec spec;
    spec.kind = SyntheticKind::gaussian_mixture;
    spec.count = count;
    for (const double sign : {1.0, -1.0}) {
        GaussianComponent comp;
        comp.mean = {sign * 1.5, 0.0, 0.0};
        comp.covariance = Matrix(3, 3);
        comp.covariance(0, 0) = 0.3;
        comp.covariance(1, 1) = 0.2;
        comp.covariance(2, 2) = 0.1;
        comp.weight = 1.0;
        spec.components.push_back(std::move(comp));
    }
    return spec;
}

}  // namespace sqdm
