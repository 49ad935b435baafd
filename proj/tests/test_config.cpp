#include "homduet/config.hpp"
#include "homduet/error.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <fstream>

using namespace homduet;
using namespace homduet::cli;

namespace {

std::string error_of(const std::string& text)
{
    try {
        config_from_text(text, "cfg.toml");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("config: key tree parsing")
{
    const auto t = parse_key_tree(R"(
# comment
seed = 1_000  # trailing comment
name = "a # not a comment \"quoted\""
[outer.inner]
flag = true
x = -1.5e-3
arr = [1, 2.5, -3]
empty = []
)");
    CHECK(std::get<std::int64_t>(t.at("seed")) == 1000);
    CHECK(std::get<std::string>(t.at("name")) == "a # not a comment \"quoted\"");
    CHECK(std::get<bool>(t.at("outer.inner.flag")));
    CHECK(std::get<double>(t.at("outer.inner.x")) == -1.5e-3);
    CHECK(std::get<std::vector<double>>(t.at("outer.inner.arr")) == std::vector<double>{1, 2.5, -3});
    CHECK(std::get<std::vector<double>>(t.at("outer.inner.empty")).empty());
}

TEST_CASE("config: parse errors name the line")
{
    CHECK(error_of("seed = 1\nseed = 2\n").find("cfg.toml:2") != std::string::npos);
    CHECK(error_of("[dlcz\n").find("cfg.toml:1") != std::string::npos);
    CHECK(error_of("x = \"open\n").find("unterminated") != std::string::npos);
    CHECK(error_of("arr = [1, 2\n").find("unterminated array") != std::string::npos);
    CHECK(error_of("just words\n").find("key = value") != std::string::npos);
}

TEST_CASE("config: semantic errors name the field path")
{
    CHECK(error_of("[dlcz]\nherald_prob = 1.5\n").find("dlcz.herald_prob") != std::string::npos);
    CHECK(error_of("[detector]\nefficiency_a = \"high\"\n").find("detector.efficiency_a") != std::string::npos);
    CHECK(error_of("[dlcz]\nbogus = 1\n").find("dlcz.bogus: unknown") != std::string::npos);
    CHECK(error_of("[sequence]\nmode = \"sideways\"\n").find("sequence.") != std::string::npos);
    CHECK(error_of("[sequence]\ncycles_per_interrogation = 3\n").find("sequence.") != std::string::npos);
    CHECK(error_of("[dlcz]\ng2 = 0.13\nexcitation_p = 0.03\n").find("conflicts") != std::string::npos);
    CHECK(error_of("[waveform]\ndecay_ns = 600\n").find("waveform") != std::string::npos);
    CHECK(error_of("seed = -4\n").find("seed") != std::string::npos);
}

TEST_CASE("config: defaults and overrides")
{
    const auto cfg = config_from_text("seed = 7\n[dlcz]\ng2 = 0.13\n[analysis]\ng2n1 = 0.13\n");
    CHECK(cfg.seed == 7);
    CHECK(sources::dlcz_heralded_g2(cfg.dlcz.excitation_p) == doctest::Approx(0.13));
    CHECK(cfg.analysis.g2n1.value() == 0.13);
    CHECK_FALSE(cfg.analysis.g2n2.has_value());
    CHECK(cfg.rydberg.mu == 1.0);
    // Integers are accepted where reals are expected.
    CHECK(config_from_text("[waveform]\nrise_ns = 50\n").waveform.rise_ns == 50.0);
}

TEST_CASE("config: hash ignores formatting and tracks content")
{
    const auto a = config_from_text("seed = 3\n[dlcz]\nherald_prob = 0.02\nretrieval_prob = 0.25\n");
    const auto b = config_from_text("# reordered\n[dlcz]\nretrieval_prob=0.25  # same value\nherald_prob   = 2e-2\n"
                                    "[waveform]\n\n");
    const auto c = config_from_text("[dlcz]\nherald_prob = 0.02\n", "other");
    CHECK(b.hash == c.hash);
    CHECK(config_from_text("seed = 3\n[dlcz]\nretrieval_prob = 0.25\nherald_prob = 0.020\n").hash == a.hash);
    // Setting a key to its default does not change the hash.
    CHECK(config_from_text("").hash == config_from_text("[rydberg]\nmu = 1.0\n").hash);
    CHECK(a.hash != config_from_text("seed = 4\n[dlcz]\nherald_prob = 0.02\n").hash);
    // Canonical text round-trips to the same configuration.
    CHECK(config_from_text(canonical_text(a)).hash == a.hash);
    CHECK(canonical_text(a).find("dlcz.herald_prob = 0.02") != std::string::npos);
}

TEST_CASE("config: sha256 known answers")
{
    CHECK(hex(sha256("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(hex(sha256("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("config: shipped default configuration loads")
{
    const auto cfg = load_config(std::filesystem::path(HOMDUET_SOURCE_DIR) / "configs" / "paper_default.toml");
    CHECK(cfg.dlcz.herald_prob == 0.012);
    CHECK(cfg.sequence.mode == RunMode::distinguishable);
    CHECK_NOTHROW(cfg.setup());
    CHECK_THROWS_AS(load_config("/nonexistent/x.toml"), ConfigError);
}
