#include "pcfs/stream_io.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>

#include "pcfs/errors.hpp"
#include "pcfs/units.hpp"

static_assert(std::endian::native == std::endian::little, "stream format assumes a little-endian host");

namespace pcfs {

namespace {

constexpr std::array<char, 4> kMagic{'P', 'C', 'F', 'S'};

template <typename T>
T load(const std::byte* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

template <typename T>
void store(std::byte* p, T v) {
    std::memcpy(p, &v, sizeof(T));
}

}  // namespace

MappedFile::MappedFile(const std::filesystem::path& path) {
    const int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) throw FormatError("cannot open " + path.string() + ": " + std::strerror(errno));
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
        ::close(fd);
        throw FormatError("cannot stat " + path.string());
    }
    size_ = static_cast<std::size_t>(st.st_size);
    if (size_ > 0) {
        void* p = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd, 0);
        if (p == MAP_FAILED) {
            ::close(fd);
            throw FormatError("cannot map " + path.string());
        }
        ::madvise(p, size_, MADV_SEQUENTIAL);
        data_ = static_cast<const std::byte*>(p);
    }
    ::close(fd);
}

MappedFile::~MappedFile() {
    if (data_) ::munmap(const_cast<std::byte*>(data_), size_);
}

void write_stream(const std::filesystem::path& path, const ClickStream& stream) {
    std::vector<std::byte> buf(kStreamHeaderBytes + stream.records.size() * kStreamRecordBytes, std::byte{0});
    std::memcpy(buf.data(), kMagic.data(), kMagic.size());
    store<std::uint16_t>(buf.data() + 4, kStreamFormatVersion);
    store<std::uint16_t>(buf.data() + 6, 2);
    const double dur_ps = std::round(stream.duration_s * kPicosecondsPerSecond);
    store<std::uint64_t>(buf.data() + 8, dur_ps > 0 ? static_cast<std::uint64_t>(dur_ps) : 0);
    std::byte* p = buf.data() + kStreamHeaderBytes;
    for (const auto& r : stream.records) {
        store<std::uint64_t>(p, r.timestamp_ps);
        p[8] = static_cast<std::byte>(r.channel);
        p += kStreamRecordBytes;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("write failed for " + path.string());
}

ClickStream read_stream(const std::filesystem::path& path) {
    MappedFile file(path);
    const auto bytes = file.bytes();
    if (bytes.size() < kStreamHeaderBytes)
        throw FormatError(path.string() + ": truncated header", bytes.size());
    if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
        throw FormatError(path.string() + ": bad magic", 0);
    if (load<std::uint16_t>(bytes.data() + 4) != kStreamFormatVersion)
        throw FormatError(path.string() + ": unsupported format version", 4);
    if (load<std::uint16_t>(bytes.data() + 6) != 2)
        throw FormatError(path.string() + ": unsupported channel count", 6);
    const auto dur_ps = load<std::uint64_t>(bytes.data() + 8);

    const std::size_t body = bytes.size() - kStreamHeaderBytes;
    if (body % kStreamRecordBytes != 0)
        throw FormatError(path.string() + ": truncated record",
                          kStreamHeaderBytes + body / kStreamRecordBytes * kStreamRecordBytes);

    ClickStream out;
    out.meta.source = "file";
    const std::size_t n = body / kStreamRecordBytes;
    out.records.resize(n);
    std::uint64_t prev = 0;
    const std::byte* p = bytes.data() + kStreamHeaderBytes;
    for (std::size_t i = 0; i < n; ++i, p += kStreamRecordBytes) {
        const std::uint64_t offset = kStreamHeaderBytes + i * kStreamRecordBytes;
        const auto ts = load<std::uint64_t>(p);
        const auto ch = static_cast<std::uint8_t>(p[8]);
        if (ch > 1) throw FormatError(path.string() + ": unknown channel " + std::to_string(ch), offset + 8);
        if (ts < prev) throw FormatError(path.string() + ": timestamps decrease", offset);
        if (dur_ps > 0 && ts >= dur_ps)
            throw FormatError(path.string() + ": timestamp beyond the acquisition duration", offset);
        for (int k = 9; k < 16; ++k)
            if (p[k] != std::byte{0}) throw FormatError(path.string() + ": nonzero padding", offset + k);
        out.records[i] = {ts, static_cast<Channel>(ch)};
        prev = ts;
    }
    if (dur_ps > 0)
        out.duration_s = static_cast<double>(dur_ps) / kPicosecondsPerSecond;
    else if (n > 0)
        out.duration_s = static_cast<double>(out.records.back().timestamp_ps + 1) / kPicosecondsPerSecond;
    return out;
}

}  // namespace pcfs
