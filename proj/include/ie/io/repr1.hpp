#pragma once

// REPR1: one file per representation store, little-endian throughout.
//
//   magic      6 bytes  "REPR1\0"
//   version    u16
//   S, L, T, D u64 each
//   mode       u8       0 macro, 1 micro
//   dtype      u8       0 = f32
//   source_id  u32 byte length, then UTF-8 bytes
//   index      L*T u64 absolute offsets, (l, t) in row-major order
//   data       L*T slices of S*D f32, each row-major S x D
//
// Slices are read with positioned reads of exactly one slice's byte range,
// so readers never hold more than one slice and may run concurrently.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include "ie/core/error.hpp"
#include "ie/core/types.hpp"

namespace ie {

inline constexpr std::array<char, 6> kRepr1Magic{'R', 'E', 'P', 'R', '1', '\0'};
inline constexpr std::uint16_t kRepr1Version = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;
inline constexpr std::uint32_t kMaxSourceIdBytes = 1U << 20;

class BadMagicError : public IoError {
public:
    using IoError::IoError;
};

class TruncatedFileError : public IoError {
public:
    using IoError::IoError;
};

class UnsupportedVersionError : public IoError {
public:
    using IoError::IoError;
};

class CellOutOfRangeError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

struct Repr1Header {
    std::uint16_t version = kRepr1Version;
    StoreDims dims;
    StoreMode mode = StoreMode::macro;
    std::uint8_t dtype = kDtypeF32;
    std::string source_id;
    std::vector<std::uint64_t> offsets; // per cell, l * T + t

    std::uint64_t header_bytes() const { return 6 + 2 + 4 * 8 + 1 + 1 + 4 + source_id.size() + 8 * dims.cells(); }
    std::uint64_t file_bytes() const { return header_bytes() + dims.cells() * dims.slice_bytes(); }

    std::uint64_t offset(std::uint64_t layer, std::uint64_t token) const {
        if (layer >= dims.layers || token >= dims.tokens)
            throw CellOutOfRangeError("cell (" + std::to_string(layer) + "," + std::to_string(token) +
                                      ") out of range for L=" + std::to_string(dims.layers) +
                                      ", T=" + std::to_string(dims.tokens));
        return offsets[layer * dims.tokens + token];
    }
};

// Header describing a contiguous layout for the given store shape.
inline Repr1Header make_repr1_header(const StoreDims& dims, StoreMode mode, std::string source_id) {
    if (dims.samples == 0 || dims.layers == 0 || dims.tokens == 0 || dims.width == 0)
        throw InvalidArgument("REPR1 stores need positive S, L, T and D");
    if (source_id.size() > kMaxSourceIdBytes) throw InvalidArgument("source_id is too long");
    Repr1Header h;
    h.dims = dims;
    h.mode = mode;
    h.source_id = std::move(source_id);
    std::uint64_t pos = h.header_bytes();
    for (std::uint64_t c = 0; c < dims.cells(); ++c, pos += dims.slice_bytes()) h.offsets.push_back(pos);
    return h;
}

namespace detail {

template <typename T>
T byteswap_if_big(T v) {
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        return v;
    } else {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
}

template <typename T>
void put_le(std::string& buf, T v) {
    const auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(byteswap_if_big(v));
    buf.append(bytes.data(), bytes.size());
}

inline std::string encode_header(const Repr1Header& h) {
    std::string buf(kRepr1Magic.data(), kRepr1Magic.size());
    put_le(buf, h.version);
    put_le(buf, h.dims.samples);
    put_le(buf, h.dims.layers);
    put_le(buf, h.dims.tokens);
    put_le(buf, h.dims.width);
    put_le(buf, static_cast<std::uint8_t>(h.mode));
    put_le(buf, h.dtype);
    put_le(buf, static_cast<std::uint32_t>(h.source_id.size()));
    buf += h.source_id;
    for (auto off : h.offsets) put_le(buf, off);
    return buf;
}

// File descriptor that closes itself.
class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    ~Fd() { reset(); }

    int get() const { return fd_; }
    void reset() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

inline void pread_all(int fd, void* dst, std::uint64_t n, std::uint64_t offset, const std::string& what) {
    auto* p = static_cast<char*>(dst);
    while (n > 0) {
        const ssize_t got = ::pread(fd, p, n, static_cast<off_t>(offset));
        if (got < 0) throw IoError("read failed for " + what);
        if (got == 0) throw TruncatedFileError("truncated file while reading " + what);
        p += got;
        n -= static_cast<std::uint64_t>(got);
        offset += static_cast<std::uint64_t>(got);
    }
}

inline void pwrite_all(int fd, const void* src, std::uint64_t n, std::uint64_t offset, const std::string& what) {
    const auto* p = static_cast<const char*>(src);
    while (n > 0) {
        const ssize_t put = ::pwrite(fd, p, n, static_cast<off_t>(offset));
        if (put <= 0) throw IoError("write failed for " + what);
        p += put;
        n -= static_cast<std::uint64_t>(put);
        offset += static_cast<std::uint64_t>(put);
    }
}

// Sequential little-endian field reader over a file descriptor.
class FieldReader {
public:
    FieldReader(int fd, std::uint64_t size) : fd_(fd), size_(size) {}

    template <typename T>
    T get(const char* field) {
        T v;
        bytes(&v, sizeof v, field);
        return byteswap_if_big(v);
    }

    void bytes(void* dst, std::uint64_t n, const char* field) {
        if (pos_ + n > size_) throw TruncatedFileError(std::string("truncated file: header ends inside ") + field);
        pread_all(fd_, dst, n, pos_, field);
        pos_ += n;
    }

    std::uint64_t position() const { return pos_; }

private:
    int fd_;
    std::uint64_t size_;
    std::uint64_t pos_ = 0;
};

} // namespace detail

// Streaming writer: the header goes out first, slices may then be written in
// any order. Output lands in `<path>.partial` and is renamed on finish().
class Repr1Writer {
public:
    Repr1Writer(std::filesystem::path path, const StoreDims& dims, StoreMode mode, std::string source_id)
        : path_(std::move(path)), partial_(path_.string() + ".partial"),
          header_(make_repr1_header(dims, mode, std::move(source_id))), rows_(dims.cells(), 0) {
        fd_ = detail::Fd(::open(partial_.c_str(), O_CREAT | O_TRUNC | O_WRONLY, 0644));
        if (fd_.get() < 0) throw IoError("cannot create " + partial_.string());
        const std::string head = detail::encode_header(header_);
        detail::pwrite_all(fd_.get(), head.data(), head.size(), 0, "header");
        if (::ftruncate(fd_.get(), static_cast<off_t>(header_.file_bytes())) != 0)
            throw IoError("cannot size " + partial_.string());
    }

    const Repr1Header& header() const { return header_; }

    void write_slice(std::size_t layer, std::size_t token, const Slice& values) {
        const auto& d = header_.dims;
        if (static_cast<std::uint64_t>(values.rows()) != d.samples || static_cast<std::uint64_t>(values.cols()) != d.width)
            throw InvalidArgument("slice (" + std::to_string(layer) + "," + std::to_string(token) + ") is " +
                                  std::to_string(values.rows()) + "x" + std::to_string(values.cols()) +
                                  ", expected " + std::to_string(d.samples) + "x" + std::to_string(d.width));
        write_rows(layer, token, 0, values);
    }

    // Rows [first_row, first_row + values.rows()) of slice (layer, token).
    // Each slice must be covered from row 0 without gaps.
    void write_rows(std::size_t layer, std::size_t token, std::size_t first_row, const Slice& values) {
        const std::uint64_t off = header_.offset(layer, token);
        const auto& d = header_.dims;
        const std::string what = "slice (" + std::to_string(layer) + "," + std::to_string(token) + ")";
        const std::size_t cell = layer * d.tokens + token;
        const auto n = static_cast<std::uint64_t>(values.rows());
        if (static_cast<std::uint64_t>(values.cols()) != d.width)
            throw InvalidArgument(what + " rows have width " + std::to_string(values.cols()) + ", expected " +
                                  std::to_string(d.width));
        if (first_row + n > d.samples) throw InvalidArgument(what + " rows exceed S=" + std::to_string(d.samples));
        if (first_row > rows_[cell])
            throw InvalidArgument(what + " rows must be written without gaps (next row " +
                                  std::to_string(rows_[cell]) + ", got " + std::to_string(first_row) + ")");
        const std::uint64_t at = off + first_row * d.width * sizeof(float);
        const std::size_t bytes = static_cast<std::size_t>(n * d.width * sizeof(float));
        if constexpr (std::endian::native == std::endian::little) {
            detail::pwrite_all(fd_.get(), values.data(), bytes, at, what);
        } else {
            std::vector<float> swapped(values.data(), values.data() + values.size());
            for (auto& v : swapped) v = detail::byteswap_if_big(v);
            detail::pwrite_all(fd_.get(), swapped.data(), bytes, at, what);
        }
        rows_[cell] = std::max<std::uint64_t>(rows_[cell], first_row + n);
    }

    // Flushes, checks every slice was written, and publishes the file.
    void finish() {
        for (std::size_t c = 0; c < rows_.size(); ++c)
            if (rows_[c] != header_.dims.samples)
                throw InvalidArgument("slice (" + std::to_string(c / header_.dims.tokens) + "," +
                                      std::to_string(c % header_.dims.tokens) + ") was never written");
        if (::fsync(fd_.get()) != 0) throw IoError("fsync failed for " + partial_.string());
        fd_.reset();
        std::filesystem::rename(partial_, path_);
        finished_ = true;
    }

    ~Repr1Writer() {
        if (!finished_) {
            fd_.reset();
            std::error_code ec;
            std::filesystem::remove(partial_, ec);
        }
    }

private:
    std::filesystem::path path_;
    std::filesystem::path partial_;
    Repr1Header header_;
    std::vector<std::uint64_t> rows_; // rows written per cell
    detail::Fd fd_;
    bool finished_ = false;
};

inline void write_store(const RepresentationStore& store, const std::filesystem::path& path) {
    const auto report = validate_store(store);
    if (!report.ok()) throw InvalidArgument("cannot write invalid store: " + report.issues.front().message);
    Repr1Writer w(path, store.dims(), store.mode(), store.source_id());
    for (std::size_t l = 0; l < store.dims().layers; ++l)
        for (std::size_t t = 0; t < store.dims().tokens; ++t) w.write_slice(l, t, store.slice(l, t));
    w.finish();
}

// Random-access reader. read_slice is safe to call from several threads.
class Repr1Reader {
public:
    explicit Repr1Reader(const std::filesystem::path& path) : path_(path) {
        fd_ = detail::Fd(::open(path.c_str(), O_RDONLY));
        if (fd_.get() < 0) throw IoError("cannot open " + path.string());
        struct stat st {};
        if (::fstat(fd_.get(), &st) != 0) throw IoError("cannot stat " + path.string());
        const auto size = static_cast<std::uint64_t>(st.st_size);

        detail::FieldReader in(fd_.get(), size);
        std::array<char, 6> magic{};
        if (size < magic.size()) throw TruncatedFileError(path.string() + ": truncated file (no magic)");
        in.bytes(magic.data(), magic.size(), "magic");
        if (magic != kRepr1Magic) throw BadMagicError(path.string() + ": bad magic, not a REPR1 file");
        header_.version = in.get<std::uint16_t>("version");
        if (header_.version > kRepr1Version || header_.version == 0)
            throw UnsupportedVersionError(path.string() + ": REPR1 version " + std::to_string(header_.version) +
                                          " is not supported (max " + std::to_string(kRepr1Version) + ")");
        header_.dims.samples = in.get<std::uint64_t>("S");
        header_.dims.layers = in.get<std::uint64_t>("L");
        header_.dims.tokens = in.get<std::uint64_t>("T");
        header_.dims.width = in.get<std::uint64_t>("D");
        const auto mode = in.get<std::uint8_t>("mode");
        if (mode > 1) throw IoError(path.string() + ": unknown mode byte " + std::to_string(mode));
        header_.mode = static_cast<StoreMode>(mode);
        header_.dtype = in.get<std::uint8_t>("dtype");
        if (header_.dtype != kDtypeF32) throw IoError(path.string() + ": unsupported dtype " + std::to_string(header_.dtype));
        const auto id_len = in.get<std::uint32_t>("source_id length");
        if (id_len > kMaxSourceIdBytes) throw IoError(path.string() + ": source_id length is implausible");
        header_.source_id.resize(id_len);
        in.bytes(header_.source_id.data(), id_len, "source_id");

        const auto& d = header_.dims;
        if (d.samples == 0 || d.layers == 0 || d.tokens == 0 || d.width == 0)
            throw IoError(path.string() + ": header has a zero dimension");
        if (d.cells() > (size - in.position()) / 8)
            throw TruncatedFileError(path.string() + ": truncated file: chunk index exceeds file length");
        header_.offsets.resize(d.cells());
        for (auto& off : header_.offsets) off = in.get<std::uint64_t>("chunk index");

        if (size < header_.file_bytes())
            throw TruncatedFileError(path.string() + ": truncated file: " + std::to_string(size) + " bytes, expected " +
                                     std::to_string(header_.file_bytes()));
        if (size > header_.file_bytes())
            throw IoError(path.string() + ": " + std::to_string(size - header_.file_bytes()) + " trailing bytes");
        for (std::size_t c = 0; c < header_.offsets.size(); ++c) {
            const std::uint64_t expected = header_.header_bytes() + c * d.slice_bytes();
            if (header_.offsets[c] != expected)
                throw IoError(path.string() + ": chunk index entry " + std::to_string(c) + " is " +
                              std::to_string(header_.offsets[c]) + ", expected " + std::to_string(expected));
        }
    }

    const Repr1Header& header() const { return header_; }
    const StoreDims& dims() const { return header_.dims; }
    const std::filesystem::path& path() const { return path_; }

    Slice read_slice(std::size_t layer, std::size_t token) const {
        const std::uint64_t off = header_.offset(layer, token);
        const auto& d = header_.dims;
        Slice out(static_cast<Eigen::Index>(d.samples), static_cast<Eigen::Index>(d.width));
        detail::pread_all(fd_.get(), out.data(), d.slice_bytes(), off,
                          "slice (" + std::to_string(layer) + "," + std::to_string(token) + ")");
        if constexpr (std::endian::native != std::endian::little)
            for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = detail::byteswap_if_big(out.data()[i]);
        return out;
    }

    RepresentationStore read_all() const {
        RepresentationStore store(header_.dims, header_.mode, header_.source_id);
        for (std::size_t l = 0; l < header_.dims.layers; ++l)
            for (std::size_t t = 0; t < header_.dims.tokens; ++t) store.set_slice(l, t, read_slice(l, t));
        return store;
    }

private:
    std::filesystem::path path_;
    detail::Fd fd_;
    Repr1Header header_;
};

inline Slice read_slice(const std::filesystem::path& path, std::size_t layer, std::size_t token) {
    return Repr1Reader(path).read_slice(layer, token);
}

inline RepresentationStore read_store(const std::filesystem::path& path) { return Repr1Reader(path).read_all(); }

inline Json describe(const std::filesystem::path& path) {
    const Repr1Reader r(path);
    const auto& h = r.header();
    return Json{{"format", "REPR1"},
                {"version", h.version},
                {"dims", h.dims},
                {"mode", to_string(h.mode)},
                {"dtype", "f32"},
                {"source_id", h.source_id},
                {"slice_bytes", h.dims.slice_bytes()},
                {"file_bytes", h.file_bytes()}};
}

// Header checks plus a streamed pass over every slice for non-finite values.
// Unreadable files are reported as a single io issue instead of throwing.
inline ValidationReport validate_file(const std::filesystem::path& path) {
    ValidationReport report;
    std::optional<Repr1Reader> reader;
    try {
        reader.emplace(path);
    } catch (const Error& e) {
        report.issues.push_back({IssueKind::io, 0, 0, e.what()});
        return report;
    }
    const auto& d = reader->dims();
    for (std::size_t l = 0; l < d.layers; ++l)
        for (std::size_t t = 0; t < d.tokens; ++t) {
            try {
                if (!all_finite(reader->read_slice(l, t)))
                    report.add(IssueKind::non_finite, l, t, "non-finite value in slice");
            } catch (const Error& e) {
                report.add(IssueKind::io, l, t, std::string("unreadable chunk: ") + e.what() + " at");
            }
        }
    return report;
}

} // namespace ie
