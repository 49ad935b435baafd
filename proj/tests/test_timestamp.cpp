#include "homduet/error.hpp"
#include "homduet/timestamp.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <chrono>
#include <cstring>
#include <fstream>

using namespace homduet;
using namespace homduet::analysis;

namespace {

ConfigHash test_hash()
{
    ConfigHash h{};
    for (std::size_t i = 0; i < h.size(); ++i) {
        h[i] = static_cast<std::uint8_t>(i * 7 + 1);
    }
    return h;
}

std::vector<TimestampRecord> sample_records(std::size_t trials)
{
    std::vector<TimestampRecord> out;
    for (std::uint64_t t = 0; t < trials; ++t) {
        out.push_back({Channel::spad1, t, 0});
        out.push_back({Channel::marker, t, 200'000});
        if (t % 3 == 0) {
            out.push_back({Channel::spad2a, t, 250'123});
        }
        out.push_back({Channel::marker, t, 2'800'000});
        if (t % 5 == 0) {
            out.push_back({Channel::spad2b, t, 2'900'001});
        }
    }
    return out;
}

std::vector<unsigned char> slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::filesystem::path& p, const std::vector<unsigned char>& bytes)
{
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("timestamp: round trip preserves records and header")
{
    const auto dir = testutil::scratch_dir("ts_roundtrip");
    const auto recs = sample_records(100000);
    write_all(dir / "a.homd", test_hash(), recs);
    CHECK(std::filesystem::file_size(dir / "a.homd") == kHeaderSize + kRecordSize * recs.size());
    auto reader = parse_timestamps(dir / "a.homd");
    CHECK(reader->header().config_hash == test_hash());
    CHECK(reader->header().record_count == recs.size());
    CHECK(reader->header().version == kFormatVersion);
    CHECK(read_all(dir / "a.homd") == recs);
}

TEST_CASE("timestamp: wire layout is little-endian and packed")
{
    const auto dir = testutil::scratch_dir("ts_layout");
    write_all(dir / "b.homd", test_hash(), {{Channel::spad2b, 0x0102030405ULL, 0x1122334455667788ULL}});
    const auto bytes = slurp(dir / "b.homd");
    REQUIRE(bytes.size() == 64);
    CHECK(std::memcmp(bytes.data(), "HOMD", 4) == 0);
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    CHECK(bytes[40] == 1);  // record count
    // First word: trial << 8 | channel.
    CHECK(bytes[48] == 2);
    CHECK(bytes[49] == 0x05);
    CHECK(bytes[53] == 0x01);
    CHECK(bytes[56] == 0x88);
    CHECK(bytes[63] == 0x11);
}

TEST_CASE("timestamp: empty file is valid")
{
    const auto dir = testutil::scratch_dir("ts_empty");
    write_all(dir / "e.homd", test_hash(), {});
    CHECK(read_all(dir / "e.homd").empty());
}

TEST_CASE("timestamp: writer rejects out-of-order records")
{
    const auto dir = testutil::scratch_dir("ts_order");
    TimestampWriter w(dir / "o.homd", test_hash());
    w.push({Channel::spad1, 5, 100});
    CHECK_THROWS_AS(w.push({Channel::spad1, 4, 200}), FormatError);
    CHECK_THROWS_AS(w.push({Channel::spad1, 5, 50}), FormatError);
    CHECK_THROWS_AS(w.push({Channel::spad1, kMaxTrialIndex + 1, 0}), FormatError);
}

TEST_CASE("timestamp: reader detects corruption")
{
    const auto dir = testutil::scratch_dir("ts_corrupt");
    write_all(dir / "c.homd", test_hash(), sample_records(50));
    const auto good = slurp(dir / "c.homd");

    auto bad = good;
    bad[0] = 'X';
    spit(dir / "magic.homd", bad);
    CHECK_THROWS_AS(read_all(dir / "magic.homd"), FormatError);

    bad = good;
    bad[4] = 9;
    spit(dir / "version.homd", bad);
    CHECK_THROWS_AS(read_all(dir / "version.homd"), FormatError);

    bad = good;
    bad.resize(bad.size() - 5);
    spit(dir / "trunc.homd", bad);
    CHECK_THROWS_AS(read_all(dir / "trunc.homd"), FormatError);

    bad = good;
    bad.resize(bad.size() - kRecordSize);
    spit(dir / "count.homd", bad);
    CHECK_THROWS_AS(read_all(dir / "count.homd"), FormatError);

    bad = good;
    bad[kHeaderSize] = 7;  // channel code out of range
    spit(dir / "chan.homd", bad);
    CHECK_THROWS_AS(read_all(dir / "chan.homd"), FormatError);

    bad = good;
    std::swap_ranges(bad.begin() + kHeaderSize, bad.begin() + kHeaderSize + kRecordSize,
                     bad.begin() + kHeaderSize + 3 * kRecordSize);
    spit(dir / "order.homd", bad);
    CHECK_THROWS_AS(read_all(dir / "order.homd"), FormatError);

    CHECK_THROWS_AS(read_all(dir / "missing.homd"), Error);
}

TEST_CASE("timestamp: streaming throughput")
{
    const auto dir = testutil::scratch_dir("ts_speed");
    const auto recs = sample_records(1'000'000);
    write_all(dir / "big.homd", test_hash(), recs);
    const auto t0 = std::chrono::steady_clock::now();
    TimestampReader reader(dir / "big.homd");
    TimestampRecord r;
    std::uint64_t n = 0;
    std::uint64_t checksum = 0;
    while (reader.next(r)) {
        ++n;
        checksum += r.time_ps;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(n == recs.size());
    CHECK(checksum > 0);
    MESSAGE("read " << n << " records at " << n / secs / 1e6 << " M records/s");
    CHECK(n / secs > 5e6);
}
