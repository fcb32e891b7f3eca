#include "geora/io/npy.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <regex>

namespace geora::io {

static_assert(std::endian::native == std::endian::little,
              "NPY payloads are read and written as native little-endian scalars");

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kPreamble = kMagicLen + 2 + 2;

std::string header_text(const Matrix& m, NpyDtype dtype) {
    std::string dict = "{'descr': '";
    dict += dtype == NpyDtype::f8 ? "<f8" : "<f4";
    dict += "', 'fortran_order': False, 'shape': (" + std::to_string(m.rows()) + ", " +
            std::to_string(m.cols()) + "), }";
    // Pad with spaces so the payload starts on a 64-byte boundary.
    std::size_t total = kPreamble + dict.size() + 1;
    const std::size_t padded = (total + 63) / 64 * 64;
    dict.append(padded - total, ' ');
    dict.push_back('\n');
    return dict;
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
        crc = ::crc32(crc, bytes.data() + offset, chunk);
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_npy(const Matrix& m, NpyDtype dtype) {
    const std::string header = header_text(m, dtype);
    if (header.size() > 0xffff) {
        throw FormatError("npy header too long");
    }
    const std::size_t scalar = dtype == NpyDtype::f8 ? 8 : 4;
    std::vector<std::uint8_t> out;
    out.reserve(kPreamble + header.size() + static_cast<std::size_t>(m.size()) * scalar);
    out.insert(out.end(), kMagic, kMagic + kMagicLen);
    out.push_back(0x01);
    out.push_back(0x00);
    out.push_back(static_cast<std::uint8_t>(header.size() & 0xff));
    out.push_back(static_cast<std::uint8_t>(header.size() >> 8));
    out.insert(out.end(), header.begin(), header.end());
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            std::uint8_t buf[8];
            if (dtype == NpyDtype::f8) {
                const double v = m(i, j);
                std::memcpy(buf, &v, 8);
            } else {
                const auto v = static_cast<float>(m(i, j));
                std::memcpy(buf, &v, 4);
            }
            out.insert(out.end(), buf, buf + scalar);
        }
    }
    return out;
}

Matrix decode_npy(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kPreamble || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
        throw FormatError("not an NPY file (bad magic)");
    }
    if (bytes[6] != 0x01 || bytes[7] != 0x00) {
        throw FormatError("unsupported NPY version " + std::to_string(bytes[6]) + "." +
                          std::to_string(bytes[7]) + " (only 1.0)");
    }
    const std::size_t header_len = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8);
    if (bytes.size() < kPreamble + header_len) {
        throw FormatError("truncated NPY header");
    }
    const std::string header(reinterpret_cast<const char*>(bytes.data() + kPreamble), header_len);

    static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
    static const std::regex order_re(R"('fortran_order'\s*:\s*(True|False))");
    static const std::regex shape_re(R"('shape'\s*:\s*\(\s*(\d+)\s*,\s*(\d+)\s*,?\s*\))");
    std::smatch match;
    if (!std::regex_search(header, match, descr_re)) {
        throw FormatError("NPY header has no descr");
    }
    const std::string descr = match[1];
    std::size_t scalar = 0;
    if (descr == "<f8") {
        scalar = 8;
    } else if (descr == "<f4") {
        scalar = 4;
    } else {
        throw FormatError("unsupported dtype '" + descr + "' (expected '<f4' or '<f8')");
    }
    if (!std::regex_search(header, match, order_re)) {
        throw FormatError("NPY header has no fortran_order");
    }
    if (match[1] == "True") {
        throw FormatError("Fortran-ordered arrays are not supported");
    }
    if (!std::regex_search(header, match, shape_re)) {
        throw FormatError("NPY shape must be two-dimensional");
    }
    const Index rows = std::stoll(match[1]);
    const Index cols = std::stoll(match[2]);
    if (rows < 1 || cols < 1) {
        throw FormatError("NPY shape must be positive");
    }
    const std::size_t payload = static_cast<std::size_t>(rows * cols) * scalar;
    if (bytes.size() != kPreamble + header_len + payload) {
        throw FormatError("NPY payload size " + std::to_string(bytes.size() - kPreamble - header_len) +
                          " does not match shape (" + std::to_string(payload) + " bytes expected)");
    }
    Matrix m(rows, cols);
    const std::uint8_t* p = bytes.data() + kPreamble + header_len;
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j, p += scalar) {
            if (scalar == 8) {
                double v;
                std::memcpy(&v, p, 8);
                m(i, j) = v;
            } else {
                float v;
                std::memcpy(&v, p, 4);
                m(i, j) = static_cast<double>(v);
            }
        }
    }
    if (!all_finite(m)) {
        throw FormatError("array contains non-finite values");
    }
    return m;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw FormatError("cannot write " + tmp.string());
        }
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw FormatError("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Matrix load_npy(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return decode_npy(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::uint32_t save_npy(const std::filesystem::path& path, const Matrix& m, NpyDtype dtype) {
    const auto bytes = encode_npy(m, dtype);
    write_file_atomic(path, bytes);
    return crc32(bytes);
}

}  // namespace geora::io
