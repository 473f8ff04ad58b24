#pragma once

// Binary click-stream files. Little endian throughout.
//
//   header (16 bytes): "PCFS" | u16 version = 1 | u16 channel count = 2 |
//                      u64 acquisition duration in ps (0 = unknown)
//   record (16 bytes): u64 timestamp ps | u8 channel (0 = A, 1 = B) | 7 zero bytes
//
// Records are fixed size so a mapped file can be split at any record index.

#include <cstdint>
#include <filesystem>
#include <span>

#include "pcfs/photon_sim.hpp"

namespace pcfs {

inline constexpr std::uint16_t kStreamFormatVersion = 1;
inline constexpr std::size_t kStreamHeaderBytes = 16;
inline constexpr std::size_t kStreamRecordBytes = 16;

void write_stream(const std::filesystem::path& path, const ClickStream& stream);

/// Reads and validates a stream file. Throws FormatError carrying the byte
/// offset of the first bad header field or record (truncation, unknown
/// channel, decreasing timestamp, timestamp past the header duration,
/// nonzero padding).
ClickStream read_stream(const std::filesystem::path& path);

/// Read-only memory map of a whole file.
class MappedFile {
  public:
    explicit MappedFile(const std::filesystem::path& path);
    ~MappedFile();
    MappedFile(const MappedFile&) = delete;
    MappedFile& operator=(const MappedFile&) = delete;

    std::span<const std::byte> bytes() const { return {data_, size_}; }

  private:
    const std::byte* data_ = nullptr;
    std::size_t size_ = 0;
};

}  // namespace pcfs
