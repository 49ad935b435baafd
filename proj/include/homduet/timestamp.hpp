#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

namespace homduet::analysis {

enum class Channel : std::uint8_t { spad1 = 0, spad2a = 1, spad2b = 2, marker = 3 };

const char* channel_name(Channel ch);

/// One detection or marker. time_ps counts from the start of the trial.
struct TimestampRecord {
    Channel channel = Channel::marker;
    std::uint64_t trial_index = 0;
    std::uint64_t time_ps = 0;

    friend bool operator==(const TimestampRecord&, const TimestampRecord&) = default;
};

// Records in a stream are ordered by (trial_index, time_ps).
inline bool record_before(const TimestampRecord& a, const TimestampRecord& b)
{
    return a.trial_index != b.trial_index ? a.trial_index < b.trial_index : a.time_ps < b.time_ps;
}

using ConfigHash = std::array<std::uint8_t, 32>;

class RecordSink {
public:
    virtual ~RecordSink() = default;
    virtual void push(const TimestampRecord& rec) = 0;
};

class VectorSink final : public RecordSink {
public:
    void push(const TimestampRecord& rec) override { records.push_back(rec); }
    std::vector<TimestampRecord> records;
};

// Forwards every record to several consumers in order.
class TeeSink final : public RecordSink {
public:
    explicit TeeSink(std::vector<RecordSink*> sinks) : sinks_(std::move(sinks)) {}
    void push(const TimestampRecord& rec) override
    {
        for (auto* s : sinks_) {
            s->push(rec);
        }
    }

private:
    std::vector<RecordSink*> sinks_;
};

// Binary layout, little-endian:
//   header (48 bytes): "HOMD", u16 version, u16 reserved (0), 32-byte config
//                      hash, u64 record count
//   record (16 bytes): u64 (trial_index << 8 | channel), u64 time_ps
inline constexpr std::array<char, 4> kMagic{'H', 'O', 'M', 'D'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderSize = 48;
inline constexpr std::size_t kRecordSize = 16;
inline constexpr std::uint64_t kMaxTrialIndex = (std::uint64_t{1} << 56) - 1;

struct FileHeader {
    std::uint16_t version = kFormatVersion;
    ConfigHash config_hash{};
    std::uint64_t record_count = 0;
};

/// Streaming writer. The record count is patched into the header on close().
class TimestampWriter final : public RecordSink {
public:
    TimestampWriter(const std::filesystem::path& path, const ConfigHash& hash);
    ~TimestampWriter() override;
    TimestampWriter(const TimestampWriter&) = delete;
    TimestampWriter& operator=(const TimestampWriter&) = delete;

    void push(const TimestampRecord& rec) override;
    void close();
    std::uint64_t count() const { return count_; }

private:
    void flush();

    std::FILE* file_ = nullptr;
    std::vector<unsigned char> buffer_;
    std::uint64_t count_ = 0;
    std::optional<TimestampRecord> last_;
};

/// Streaming reader with bounded memory. Validates magic, version, ordering
/// and the header's record count.
class TimestampReader {
public:
    explicit TimestampReader(const std::filesystem::path& path);
    ~TimestampReader();
    TimestampReader(const TimestampReader&) = delete;
    TimestampReader& operator=(const TimestampReader&) = delete;

    const FileHeader& header() const { return header_; }

    // False at end of stream.
    bool next(TimestampRecord& out);

    // Feeds every remaining record to the sink; returns how many.
    std::uint64_t drain(RecordSink& sink);

private:
    bool refill();

    std::FILE* file_ = nullptr;
    FileHeader header_;
    std::vector<unsigned char> buffer_;
    std::size_t pos_ = 0;
    std::size_t end_ = 0;
    std::uint64_t read_ = 0;
    std::optional<TimestampRecord> last_;
};

std::unique_ptr<TimestampReader> parse_timestamps(const std::filesystem::path& path);

std::vector<TimestampRecord> read_all(const std::filesystem::path& path);

void write_all(const std::filesystem::path& path, const ConfigHash& hash, const std::vector<TimestampRecord>& records);

}  // namespace homduet::analysis
