#include "homduet/timestamp.hpp"

#include "homduet/error.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>

namespace homduet::analysis {

static_assert(std::endian::native == std::endian::little, "timestamp IO assumes a little-endian host");

namespace {

constexpr std::size_t kBufferRecords = 1 << 16;

void put_u64(unsigned char* p, std::uint64_t v) { std::memcpy(p, &v, 8); }

std::uint64_t get_u64(const unsigned char* p)
{
    std::uint64_t v;
    std::memcpy(&v, p, 8);
    return v;
}

std::array<unsigned char, kHeaderSize> encode_header(const FileHeader& h)
{
    std::array<unsigned char, kHeaderSize> out{};
    std::memcpy(out.data(), kMagic.data(), 4);
    std::memcpy(out.data() + 4, &h.version, 2);
    std::memcpy(out.data() + 8, h.config_hash.data(), 32);
    put_u64(out.data() + 40, h.record_count);
    return out;
}

}  // namespace

const char* channel_name(Channel ch)
{
    switch (ch) {
    case Channel::spad1:
        return "SPAD1";
    case Channel::spad2a:
        return "SPAD2a";
    case Channel::spad2b:
        return "SPAD2b";
    case Channel::marker:
        return "MARKER";
    }
    return "?";
}

TimestampWriter::TimestampWriter(const std::filesystem::path& path, const ConfigHash& hash)
{
    file_ = std::fopen(path.c_str(), "wb");
    if (file_ == nullptr) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    FileHeader h;
    h.config_hash = hash;
    const auto bytes = encode_header(h);
    if (std::fwrite(bytes.data(), 1, bytes.size(), file_) != bytes.size()) {
        throw Error("write failed: " + path.string());
    }
    buffer_.reserve(kBufferRecords * kRecordSize);
}

TimestampWriter::~TimestampWriter()
{
    try {
        close();
    } catch (...) {
    }
}

void TimestampWriter::push(const TimestampRecord& rec)
{
    if (file_ == nullptr) {
        throw Error("timestamp writer is closed");
    }
    if (rec.trial_index > kMaxTrialIndex) {
        throw FormatError("trial index exceeds 56 bits");
    }
    if (last_ && record_before(rec, *last_)) {
        throw FormatError("records must be pushed in (trial, time) order");
    }
    last_ = rec;
    const std::size_t at = buffer_.size();
    buffer_.resize(at + kRecordSize);
    put_u64(buffer_.data() + at, (rec.trial_index << 8) | static_cast<std::uint64_t>(rec.channel));
    put_u64(buffer_.data() + at + 8, rec.time_ps);
    ++count_;
    if (buffer_.size() >= kBufferRecords * kRecordSize) {
        flush();
    }
}

void TimestampWriter::flush()
{
    if (!buffer_.empty() && std::fwrite(buffer_.data(), 1, buffer_.size(), file_) != buffer_.size()) {
        throw Error("timestamp write failed");
    }
    buffer_.clear();
}

void TimestampWriter::close()
{
    if (file_ == nullptr) {
        return;
    }
    flush();
    unsigned char count[8];
    put_u64(count, count_);
    const bool ok = std::fseek(file_, 40, SEEK_SET) == 0 && std::fwrite(count, 1, 8, file_) == 8;
    std::fclose(file_);
    file_ = nullptr;
    if (!ok) {
        throw Error("failed to finalize timestamp header");
    }
}

TimestampReader::TimestampReader(const std::filesystem::path& path)
{
    file_ = std::fopen(path.c_str(), "rb");
    if (file_ == nullptr) {
        throw Error("cannot open " + path.string());
    }
    std::array<unsigned char, kHeaderSize> raw{};
    if (std::fread(raw.data(), 1, raw.size(), file_) != raw.size()) {
        std::fclose(file_);
        throw FormatError(path.string() + ": truncated header");
    }
    if (std::memcmp(raw.data(), kMagic.data(), 4) != 0) {
        std::fclose(file_);
        throw FormatError(path.string() + ": bad magic (not a HOMD timestamp file)");
    }
    std::memcpy(&header_.version, raw.data() + 4, 2);
    if (header_.version != kFormatVersion) {
        std::fclose(file_);
        throw FormatError(path.string() + ": unsupported format version " + std::to_string(header_.version));
    }
    std::memcpy(header_.config_hash.data(), raw.data() + 8, 32);
    header_.record_count = get_u64(raw.data() + 40);
    buffer_.resize(kBufferRecords * kRecordSize);
}

TimestampReader::~TimestampReader()
{
    if (file_ != nullptr) {
        std::fclose(file_);
    }
}

bool TimestampReader::refill()
{
    const std::size_t leftover = end_ - pos_;
    if (leftover > 0) {
        std::memmove(buffer_.data(), buffer_.data() + pos_, leftover);
    }
    pos_ = 0;
    end_ = leftover + std::fread(buffer_.data() + leftover, 1, buffer_.size() - leftover, file_);
    return end_ >= kRecordSize;
}

bool TimestampReader::next(TimestampRecord& out)
{
    if (end_ - pos_ < kRecordSize && !refill()) {
        if (end_ != pos_) {
            throw FormatError("truncated record at position " + std::to_string(read_));
        }
        if (read_ != header_.record_count) {
            throw FormatError("header announces " + std::to_string(header_.record_count) + " records, found " +
                              std::to_string(read_));
        }
        return false;
    }
    const unsigned char* p = buffer_.data() + pos_;
    const std::uint64_t head = get_u64(p);
    const auto channel = static_cast<std::uint8_t>(head & 0xFF);
    if (channel > static_cast<std::uint8_t>(Channel::marker)) {
        throw FormatError("unknown channel " + std::to_string(channel) + " at record " + std::to_string(read_));
    }
    out.channel = static_cast<Channel>(channel);
    out.trial_index = head >> 8;
    out.time_ps = get_u64(p + 8);
    if (last_ && record_before(out, *last_)) {
        throw FormatError("out-of-order record at position " + std::to_string(read_));
    }
    last_ = out;
    pos_ += kRecordSize;
    ++read_;
    return true;
}

std::uint64_t TimestampReader::drain(RecordSink& sink)
{
    TimestampRecord rec;
    std::uint64_t n = 0;
    while (next(rec)) {
        sink.push(rec);
        ++n;
    }
    return n;
}

std::unique_ptr<TimestampReader> parse_timestamps(const std::filesystem::path& path)
{
    return std::make_unique<TimestampReader>(path);
}

std::vector<TimestampRecord> read_all(const std::filesystem::path& path)
{
    TimestampReader reader(path);
    VectorSink sink;
    sink.records.reserve(std::min<std::uint64_t>(reader.header().record_count, 1u << 24));
    reader.drain(sink);
    return std::move(sink.records);
}

void write_all(const std::filesystem::path& path, const ConfigHash& hash, const std::vector<TimestampRecord>& records)
{
    TimestampWriter w(path, hash);
    for (const auto& r : records) {
        w.push(r);
    }
    w.close();
}

}  // namespace homduet::analysis
