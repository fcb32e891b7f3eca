#pragma once

#include "geora/matrix_core.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace geora::io {

/// Malformed, unsupported or unreadable array file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class NpyDtype { f4, f8 };

/// NPY v1.0 bytes for a C-ordered 2-D array ('<f4' or '<f8').
std::vector<std::uint8_t> encode_npy(const Matrix& m, NpyDtype dtype = NpyDtype::f8);

/// Parses a 2-D '<f4'/'<f8' C-ordered array; f4 is widened to f8. Rejects
/// Fortran order, other dtypes and non-finite values.
Matrix decode_npy(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

Matrix load_npy(const std::filesystem::path& path);

/// Returns the CRC-32 of the bytes written.
std::uint32_t save_npy(const std::filesystem::path& path, const Matrix& m,
                       NpyDtype dtype = NpyDtype::f8);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace geora::io
