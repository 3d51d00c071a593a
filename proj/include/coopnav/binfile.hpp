#pragma once

// Shared on-disk container: 8-byte magic, ASCII decimal header length + '\n',
// JSON header of that length, then a raw little-endian numeric payload.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace coopnav {

struct FileFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FileVersionError : FileFormatError {
    using FileFormatError::FileFormatError;
};
struct FileTruncatedError : FileFormatError {
    using FileFormatError::FileFormatError;
};
struct FileDimensionError : FileFormatError {
    using FileFormatError::FileFormatError;
};
struct FileCorruptError : FileFormatError {
    using FileFormatError::FileFormatError;
};
struct FileMissingError : FileFormatError {
    using FileFormatError::FileFormatError;
};

namespace binfile {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms unsupported");

inline void write_header(std::ostream& out, const char magic[9], const nlohmann::json& header) {
    std::string body = header.dump();
    out.write(magic, 8);
    std::string len = std::to_string(body.size()) + "\n";
    out.write(len.data(), std::streamsize(len.size()));
    out.write(body.data(), std::streamsize(body.size()));
}

inline nlohmann::json read_header(std::istream& in, const char magic[9]) {
    char got[8];
    if (!in.read(got, 8)) throw FileTruncatedError("file shorter than magic");
    if (std::memcmp(got, magic, 8) != 0)
        throw FileVersionError("bad magic: expected " + std::string(magic, 8));
    std::string len_line;
    if (!std::getline(in, len_line) || len_line.empty() || len_line.size() > 10)
        throw FileCorruptError("bad header length");
    std::size_t len = 0;
    for (char c : len_line) {
        if (c < '0' || c > '9') throw FileCorruptError("bad header length");
        len = len * 10 + std::size_t(c - '0');
    }
    std::string body(len, '\0');
    if (!in.read(body.data(), std::streamsize(len))) throw FileTruncatedError("header truncated");
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw FileCorruptError("header is not valid JSON");
    return j;
}

template <typename T>
void write_values(std::ostream& out, std::span<const T> values) {
    static_assert(std::is_floating_point_v<T>);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  std::streamsize(values.size_bytes()));
    } else {
        for (T v : values) {
            char buf[sizeof(T)];
            std::memcpy(buf, &v, sizeof(T));
            std::reverse(buf, buf + sizeof(T));
            out.write(buf, sizeof(T));
        }
    }
}

template <typename T>
void read_values(std::istream& in, std::span<T> values) {
    static_assert(std::is_floating_point_v<T>);
    if (!in.read(reinterpret_cast<char*>(values.data()), std::streamsize(values.size_bytes())))
        throw FileTruncatedError("payload truncated");
    if constexpr (std::endian::native == std::endian::big) {
        for (T& v : values) {
            char buf[sizeof(T)];
            std::memcpy(buf, &v, sizeof(T));
            std::reverse(buf, buf + sizeof(T));
            std::memcpy(&v, buf, sizeof(T));
        }
    }
}

inline void expect_eof(std::istream& in) {
    char extra;
    if (in.read(&extra, 1)) throw FileCorruptError("trailing bytes after payload");
}

}  // namespace binfile
}  // namespace coopnav
